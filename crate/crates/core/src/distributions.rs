//! Finite-support distributions: exact expectations, mixtures, products, and the top atom.
//!
//! Atoms are merged only on exact coordinate equality (with -0.0 identified with 0.0).

use crate::error::{check_finite, Error, Result};
use crate::linalg::Vector;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashMap;

/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct ProductLimits {
    pub max_factors: usize,
    pub max_support: usize,
}

impl Default for ProductLimits {
    fn default() -> Self {
        ProductLimits { max_factors: 4, max_support: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportDistribution {
    dim: usize,
    atoms: Vec<Vector>,
    weights: Vec<f64>,
}

fn atom_key(x: &Vector) -> Vec<u64> {
    x.iter().map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() }).collect()
}

fn lex_cmp(a: &Vector, b: &Vector) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

impl SupportDistribution {
    pub fn new(atoms: Vec<Vector>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::Usage("distribution needs equally many atoms and weights (at least one)".into()));
        }
        let dim = atoms[0].len();
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::Usage("atoms must share one dimension".into()));
        }
        for a in &atoms {
            check_finite(a.as_slice(), "atom")?;
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Usage("weights must be strictly positive and finite".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Usage(format!("weights sum to {s}, not 1")));
        }
        Ok(SupportDistribution { dim, atoms, weights })
    }

    /// Normalizes nonnegative weights, drops zero-weight atoms and merges duplicates.
    pub fn from_weighted(atoms: Vec<Vector>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::Usage("atoms and weights differ in length".into()));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Usage("weights must be nonnegative and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Usage("weights sum to zero".into()));
        }
        let mut order: Vec<Vector> = Vec::new();
        let mut merged: Vec<f64> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for (a, w) in atoms.into_iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            match index.get(&atom_key(&a)) {
                Some(&i) => merged[i] += w,
                None => {
                    index.insert(atom_key(&a), order.len());
                    order.push(a);
                    merged.push(w);
                }
            }
        }
        let s: f64 = merged.iter().sum();
        for w in &mut merged {
            *w /= s;
        }
        Self::new(order, merged)
    }

    pub fn point_mass(x: Vector) -> Self {
        SupportDistribution { dim: x.len(), atoms: vec![x], weights: vec![1.0] }
    }

    pub fn uniform(atoms: Vec<Vector>) -> Result<Self> {
        let n = atoms.len();
        Self::from_weighted(atoms, vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vector] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Vector)> {
        self.weights.iter().copied().zip(self.atoms.iter())
    }

    /// Sum_j w_j f(x_j), exactly over the support.
    pub fn expect<F>(&self, mut f: F) -> Result<Vector>
    where
        F: FnMut(&Vector) -> Vector,
    {
        let mut acc: Option<Vector> = None;
        for (w, x) in self.iter() {
            let v = f(x);
            check_finite(v.as_slice(), "expect integrand")?;
            match &mut acc {
                None => acc = Some(v * w),
                Some(a) => {
                    if a.len() != v.len() {
                        return Err(Error::Usage("integrand output dimension varies".into()));
                    }
                    a.axpy(w, &v, 1.0);
                }
            }
        }
        Ok(acc.expect("nonempty support"))
    }

    pub fn expect_scalar<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(&Vector) -> f64,
    {
        let mut acc = 0.0;
        for (w, x) in self.iter() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Numeric("expect integrand returned a non-finite value".into()));
            }
            acc += w * v;
        }
        Ok(acc)
    }

    pub fn mean(&self) -> Vector {
        self.expect(|x| x.clone()).expect("finite atoms")
    }

    /// The maximal-weight atom; ties go to the lexicographically smallest coordinates.
    pub fn top_atom(&self) -> &Vector {
        let mut best = 0;
        for j in 1..self.len() {
            let w = self.weights[j];
            let bw = self.weights[best];
            if w > bw || (w == bw && lex_cmp(&self.atoms[j], &self.atoms[best]) == Ordering::Less) {
                best = j;
            }
        }
        &self.atoms[best]
    }

    /// Coordinates [start, start + len) of every atom, with weights merged.
    pub fn marginal(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.dim || len == 0 {
            return Err(Error::Usage("marginal range out of bounds".into()));
        }
        let atoms = self.atoms.iter().map(|a| a.rows(start, len).into_owned()).collect();
        Self::from_weighted(atoms, self.weights.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.records()).expect("serializable records")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let recs: Vec<AtomRecord> =
            serde_json::from_str(s).map_err(|e| Error::Usage(format!("distribution JSON: {e}")))?;
        Self::from_records(recs)
    }

    pub fn records(&self) -> Vec<AtomRecord> {
        self.iter().map(|(w, x)| AtomRecord { weight: w, point: x.iter().copied().collect() }).collect()
    }

    pub fn from_records(recs: Vec<AtomRecord>) -> Result<Self> {
        let (atoms, weights) = recs.into_iter().map(|r| (Vector::from_vec(r.point), r.weight)).unzip();
        Self::new(atoms, weights)
    }
}

/// JSON record of one atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub weight: f64,
    pub point: Vec<f64>,
}

impl Serialize for SupportDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.records().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SupportDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let recs = Vec::<AtomRecord>::deserialize(d)?;
        Self::from_records(recs).map_err(serde::de::Error::custom)
    }
}

/// Weighted mixture with exact deduplication of atoms.
pub fn mix(weights: &[f64], mus: &[SupportDistribution]) -> Result<SupportDistribution> {
    if mus.is_empty() || weights.len() != mus.len() {
        return Err(Error::Usage("mix needs one weight per distribution and at least one distribution".into()));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::Usage("mixture weights must be nonnegative".into()));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("mixture weights sum to {s}, not 1")));
    }
    let dim = mus[0].dim();
    if mus.iter().any(|m| m.dim() != dim) {
        return Err(Error::Usage("mixture components differ in dimension".into()));
    }
    let mut atoms = Vec::new();
    let mut ws = Vec::new();
    for (lam, mu) in weights.iter().zip(mus) {
        if *lam == 0.0 {
            continue;
        }
        for (w, x) in mu.iter() {
            atoms.push(x.clone());
            ws.push(lam * w);
        }
    }
    SupportDistribution::from_weighted(atoms, ws)
}

/// Independent product over concatenated coordinates.
pub fn product(mus: &[SupportDistribution]) -> Result<SupportDistribution> {
    product_with_limits(mus, ProductLimits::default())
}

pub fn product_with_limits(mus: &[SupportDistribution], limits: ProductLimits) -> Result<SupportDistribution> {
    if mus.is_empty() {
        return Err(Error::Usage("product of zero factors".into()));
    }
    if mus.len() > limits.max_factors {
        return Err(Error::Resource(format!("{} factors exceed the cap of {}", mus.len(), limits.max_factors)));
    }
    let mut size: usize = 1;
    for m in mus {
        size = size
            .checked_mul(m.len())
            .filter(|s| *s <= limits.max_support)
            .ok_or_else(|| Error::Resource(format!("product support exceeds {} atoms", limits.max_support)))?;
    }
    let mut atoms: Vec<Vector> = vec![Vector::zeros(0)];
    let mut weights: Vec<f64> = vec![1.0];
    for m in mus {
        let mut na = Vec::with_capacity(atoms.len() * m.len());
        let mut nw = Vec::with_capacity(atoms.len() * m.len());
        for (a, w) in atoms.iter().zip(&weights) {
            for (v, x) in m.iter() {
                na.push(crate::linalg::concat(&[a, x]));
                nw.push(w * v);
            }
        }
        atoms = na;
        weights = nw;
    }
    SupportDistribution::from_weighted(atoms, weights)
}
