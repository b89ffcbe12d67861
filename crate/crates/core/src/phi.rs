//! Low-dimensional deviation sets x -> K m(x): feature maps, transforms, endomorphism cuts and
//! the semi-separation oracle.
//!
//! K-space is flattened row-major: entry (r, c) of the d x k' matrix K sits at index r * k' + c.

use crate::distributions::SupportDistribution;
use crate::error::{check_dim, Error, Result};
use crate::fixedpoint::{cefp_fptas, qefp_solve, FixedPointResult, PointMap};
use crate::games::ConcaveGame;
use crate::geometry::{ConvexBody, Halfspace, Separation, SeparationOracle};
use crate::linalg::{self, Matrix, Vector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Config-level feature map selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// m(x) = (1, x).
    Affine,
    /// All monomials of total degree at most `degree`, graded, constant first.
    Monomials { degree: usize },
}

#[derive(Clone)]
pub struct FeatureMap {
    in_dim: usize,
    out_dim: usize,
    norm_bound: f64,
    /// Exponent vectors for monomial maps (affine maps are degree-1 monomials).
    exponents: Option<Vec<Vec<u32>>>,
    custom: Option<Arc<dyn Fn(&Vector) -> Vector + Send + Sync>>,
    identity: Matrix,
    /// Index of the constant feature, if any.
    constant: Option<usize>,
}

impl std::fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureMap")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("norm_bound", &self.norm_bound)
            .finish()
    }
}

/// Exponent vectors of total degree exactly k in d variables, lexicographically descending.
fn exponents_of_degree(d: usize, k: u32) -> Vec<Vec<u32>> {
    if d == 1 {
        return vec![vec![k]];
    }
    let mut out = Vec::new();
    for first in (0..=k).rev() {
        for mut rest in exponents_of_degree(d - 1, k - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl FeatureMap {
    /// m(x) = (1, x) on a body contained in B(0, R).
    pub fn affine(d: usize, outer_radius: f64) -> Self {
        Self::monomials(d, 1, outer_radius)
    }

    /// Graded monomials up to `degree`: 1, x_1..x_d, then degree 2, ...
    pub fn monomials(d: usize, degree: usize, outer_radius: f64) -> Self {
        let mut exps = Vec::new();
        for k in 0..=degree as u32 {
            exps.extend(exponents_of_degree(d, k));
        }
        let k = exps.len();
        let mut identity = Matrix::zeros(d, k);
        for i in 0..d {
            identity[(i, 1 + i)] = 1.0;
        }
        // sum over |alpha| = j of (x^alpha)^2 <= |x|^(2j).
        let norm_bound = (0..=degree).map(|j| outer_radius.powi(2 * j as i32)).sum::<f64>().sqrt();
        FeatureMap {
            in_dim: d,
            out_dim: k,
            norm_bound,
            exponents: Some(exps),
            custom: None,
            identity,
            constant: Some(0),
        }
    }

    /// A user feature map; `identity` must realize x -> x and `constant` names a feature equal to 1.
    pub fn custom(
        in_dim: usize,
        out_dim: usize,
        f: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        norm_bound: f64,
        identity: Matrix,
        constant: Option<usize>,
    ) -> Result<Self> {
        if identity.shape() != (in_dim, out_dim) {
            return Err(Error::Usage("custom feature map identity has the wrong shape".into()));
        }
        Ok(FeatureMap { in_dim, out_dim, norm_bound, exponents: None, custom: Some(Arc::new(f)), identity, constant })
    }

    pub fn from_spec(spec: &FeatureSpec, d: usize, outer_radius: f64) -> Self {
        match spec {
            FeatureSpec::Affine => Self::affine(d, outer_radius),
            FeatureSpec::Monomials { degree } => Self::monomials(d, *degree, outer_radius),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// sup of |m(x)| over the body the map was built for.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// K with K m(x) = x.
    pub fn identity_k(&self) -> &Matrix {
        &self.identity
    }

    /// K with K m(x) = c, when the map has a constant feature.
    pub fn constant_k(&self, c: &Vector) -> Option<Matrix> {
        self.constant.map(|j| {
            let mut k = Matrix::zeros(self.in_dim, self.out_dim);
            k.set_column(j, c);
            k
        })
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.in_dim, x.len(), "feature map input")?;
        if let Some(exps) = &self.exponents {
            return Ok(Vector::from_iterator(
                self.out_dim,
                exps.iter().map(|e| e.iter().zip(x.iter()).map(|(p, v)| v.powi(*p as i32)).product::<f64>()),
            ));
        }
        let f = self.custom.as_ref().expect("custom map");
        let y = f(x);
        check_dim(self.out_dim, y.len(), "feature map output")?;
        Ok(y)
    }
}

/// x -> K m(x).
#[derive(Clone, Debug)]
pub struct LinearTransform {
    pub k: Matrix,
    pub map: FeatureMap,
}

impl LinearTransform {
    pub fn new(k: Matrix, map: FeatureMap) -> Result<Self> {
        if k.shape() != (map.in_dim, map.out_dim) {
            return Err(Error::Usage(format!(
                "transform matrix is {:?}, feature map needs {:?}",
                k.shape(),
                (map.in_dim, map.out_dim)
            )));
        }
        Ok(LinearTransform { k, map })
    }

    pub fn identity(map: FeatureMap) -> Self {
        LinearTransform { k: map.identity.clone(), map }
    }

    pub fn from_flat(v: &Vector, map: FeatureMap) -> Result<Self> {
        check_dim(map.in_dim * map.out_dim, v.len(), "flattened transform")?;
        Self::new(linalg::unflatten(v, map.in_dim, map.out_dim), map)
    }

    pub fn flat(&self) -> Vector {
        linalg::flatten(&self.k)
    }

    pub fn frobenius(&self) -> f64 {
        self.k.norm()
    }

    pub fn to_point_map(&self) -> PointMap {
        let t = self.clone();
        PointMap::new(self.map.in_dim, move |x| apply(&t, x).expect("dimension checked by PointMap"))
    }
}

pub fn apply(t: &LinearTransform, x: &Vector) -> Result<Vector> {
    Ok(&t.k * t.map.eval(x)?)
}

/// {K : a^T K m(x) <= b} from the body's cut at K m(x), as a flattened K-space halfspace.
pub fn endomorphism_cut(body: &ConvexBody, t: &LinearTransform, witness_x: &Vector) -> Result<Halfspace> {
    let y = apply(t, witness_x)?;
    match body.separate(&y)? {
        Separation::Inside => Err(Error::Usage("endomorphism cut requested at a point mapped inside the body".into())),
        Separation::Outside(h) => {
            let m = t.map.eval(witness_x)?;
            Ok(Halfspace::new(linalg::flatten(&(&h.a * m.transpose())), h.b))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemiSeparationMode {
    Quadratic,
    Fptas,
}

#[derive(Clone, Debug)]
pub enum SemiSeparation {
    /// The transform gains at most eps / 2 against every admissible own-utility under this mu.
    Safe(SupportDistribution),
    NotEndomorphism(Vector),
}

/// Either a distribution on which the transform is at most eps/2-profitable for player i no matter
/// what the opponents do, or a point it maps outside X_i.
pub fn semi_separate(
    game: &ConcaveGame,
    i: usize,
    t: &LinearTransform,
    eps: f64,
    mode: SemiSeparationMode,
) -> Result<SemiSeparation> {
    if i >= game.players() {
        return Err(Error::Usage(format!("player {i} out of range")));
    }
    let body = game.body(i);
    check_dim(body.dim(), t.map.in_dim, "transform vs strategy set")?;
    let phi = t.to_point_map();
    let res = match mode {
        SemiSeparationMode::Quadratic => {
            if !game.is_quadratic() {
                return Err(Error::Usage("quadratic semi-separation needs a quadratic game".into()));
            }
            qefp_solve(&phi, body, eps / 2.0)?
        }
        SemiSeparationMode::Fptas => cefp_fptas(&phi, body, (eps / 2.0).min(1.0), None)?,
    };
    Ok(match res {
        FixedPointResult::Certificate(mu) => SemiSeparation::Safe(mu),
        FixedPointResult::NotEndomorphism(x) => SemiSeparation::NotEndomorphism(x),
    })
}

/// Probe points for Gram-conditioning and endomorphism checks: extreme points plus interior samples.
pub fn feature_probes<R: Rng + ?Sized>(body: &ConvexBody, map: &FeatureMap, rng: &mut R) -> Vec<Vector> {
    let k = map.out_dim;
    let mut pts = body.extreme_probes(rng, 4 * k);
    pts.push(body.center().clone());
    for _ in 0..4 * k {
        pts.push(body.sample(rng));
    }
    pts
}

/// Frobenius radius containing every endomorphic K: with probe features P (k' x n),
/// |K|_F <= sqrt(n) R / sigma_min(P), written sqrt(k') R / rho with rho = sigma_min(P) sqrt(k'/n).
pub fn default_d<R: Rng + ?Sized>(body: &ConvexBody, map: &FeatureMap, rng: &mut R) -> Result<f64> {
    let probes = feature_probes(body, map, rng);
    let k = map.out_dim;
    let n = probes.len();
    let mut gram = Matrix::zeros(k, k);
    for p in &probes {
        let m = map.eval(p)?;
        gram.ger(1.0, &m, &m, 1.0);
    }
    let lmin = linalg::sym_eigenvalues(&gram)[0];
    if !(lmin > 1e-12) {
        return Err(Error::Numeric("feature probes do not span the feature space; set D explicitly".into()));
    }
    let rho = (lmin * k as f64 / n as f64).sqrt();
    Ok((k as f64).sqrt() * body.outer_radius() / rho)
}

/// Endomorphic transforms within the Frobenius ball of radius D and a list of K-space halfspaces,
/// checked on probe points (exact for polytopes under affine maps, since K m(x) is then affine).
struct EndomorphicSet {
    body: ConvexBody,
    features: Vec<Vector>,
    rows: usize,
    cols: usize,
    radius: f64,
    extra: Vec<Halfspace>,
}

impl SeparationOracle for EndomorphicSet {
    fn separate(&self, p: &Vector) -> Separation {
        let n = p.norm();
        if n > self.radius {
            return Separation::Outside(Halfspace::new(p / n, self.radius));
        }
        if let Some(h) = self.extra.iter().find(|h| h.value(p) > 0.0) {
            return Separation::Outside(h.clone());
        }
        let k = linalg::unflatten(p, self.rows, self.cols);
        let mut worst: Option<(f64, Halfspace, &Vector)> = None;
        for f in &self.features {
            let y = &k * f;
            if let Ok(Separation::Outside(h)) = self.body.separate(&y) {
                let viol = (h.a.dot(&y) - h.b) / h.a.norm();
                if worst.as_ref().map_or(true, |w| viol > w.0) {
                    worst = Some((viol, h, f));
                }
            }
        }
        match worst {
            None => Separation::Inside,
            Some((_, h, f)) => Separation::Outside(Halfspace::new(linalg::flatten(&(&h.a * f.transpose())), h.b)),
        }
    }
}

/// The probe-checked endomorphic transforms as a K-space body centered at the constant map onto
/// the body's center, together with the probe features used. `extra` must contain every
/// endomorphic K.
pub fn endomorphic_k_body<R: Rng + ?Sized>(
    body: &ConvexBody,
    map: &FeatureMap,
    d_radius: f64,
    extra: &[Halfspace],
    rng: &mut R,
) -> Result<(ConvexBody, Vec<Vector>)> {
    let (rows, cols) = (body.dim(), map.out_dim());
    let probes = feature_probes(body, map, rng);
    let features = probes.iter().map(|p| map.eval(p)).collect::<Result<Vec<_>>>()?;
    let k0 = map
        .constant_k(body.center())
        .ok_or_else(|| Error::Usage("endomorphic transform bodies need a constant feature".into()))?;
    // K0 + E is endomorphic whenever |E|_F |m(x)| <= r.
    let inner = (body.inner_radius() / map.norm_bound()).min(d_radius - k0.norm());
    if !(inner > 0.0) {
        return Err(Error::Usage("D does not contain a ball around the constant transform".into()));
    }
    let oracle = EndomorphicSet { body: body.clone(), features: features.clone(), rows, cols, radius: d_radius, extra: extra.to_vec() };
    let kbody = ConvexBody::custom(Arc::new(oracle), rows * cols, linalg::flatten(&k0), inner, d_radius)?;
    Ok((kbody, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_layout() {
        let m = FeatureMap::monomials(2, 2, 1.0);
        assert_eq!(m.out_dim(), 6);
        let v = m.eval(&Vector::from_vec(vec![2.0, 3.0])).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn square_feature_on_line() {
        let m = FeatureMap::monomials(1, 2, 1.0);
        let k = Matrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let t = LinearTransform::new(k, m).unwrap();
        assert_eq!(apply(&t, &Vector::from_vec(vec![0.5])).unwrap()[0], 0.25);
    }

    #[test]
    fn identity_and_constant() {
        let m = FeatureMap::affine(3, 1.0);
        let x = Vector::from_vec(vec![0.1, -0.2, 0.3]);
        let id = LinearTransform::identity(m.clone());
        assert_eq!(apply(&id, &x).unwrap(), x);
        let c = Vector::from_vec(vec![0.5, 0.0, 0.0]);
        let t = LinearTransform::new(m.constant_k(&c).unwrap(), m).unwrap();
        assert_eq!(apply(&t, &x).unwrap(), c);
    }
}
