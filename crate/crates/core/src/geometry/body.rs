use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sampling;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub const DEFAULT_SLACK: f64 = 1e-9;

/// A closed halfspace {x : a.x <= b}.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub a: Vector,
    pub b: f64,
}

impl Halfspace {
    pub fn new(a: Vector, b: f64) -> Self {
        Halfspace { a, b }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.a.dot(x) - self.b
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.value(x) <= tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Separation {
    Inside,
    Outside(Halfspace),
}

/// User-supplied separation oracle for bodies outside the analytic family.
pub trait SeparationOracle: Send + Sync {
    fn separate(&self, p: &Vector) -> Separation;
}

/// Config-level description of an analytic body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BodySpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Simplex { dim: usize },
    AffineImage { body: std::boxed::Box<BodySpec>, matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

#[derive(Clone)]
enum Shape {
    Ball { center: Vector, radius: f64 },
    Box { lo: Vector, hi: Vector },
    Simplex,
    Affine { inner: std::boxed::Box<ConvexBody>, m: Matrix, m_inv: Matrix, offset: Vector },
    Custom(Arc<dyn SeparationOracle>),
}

/// Compact convex body with B(center, inner_radius) inside it and the body inside B(0, outer_radius).
#[derive(Clone)]
pub struct ConvexBody {
    shape: Shape,
    dim: usize,
    center: Vector,
    inner_radius: f64,
    outer_radius: f64,
    slack: f64,
}

impl fmt::Debug for ConvexBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.shape {
            Shape::Ball { .. } => "ball",
            Shape::Box { .. } => "box",
            Shape::Simplex => "simplex",
            Shape::Affine { .. } => "affine_image",
            Shape::Custom(_) => "custom",
        };
        f.debug_struct("ConvexBody")
            .field("kind", &kind)
            .field("dim", &self.dim)
            .field("inner_radius", &self.inner_radius)
            .field("outer_radius", &self.outer_radius)
            .finish()
    }
}

impl ConvexBody {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || center.is_empty() {
            return Err(Error::Usage("ball needs radius > 0 and dim >= 1".into()));
        }
        check_finite(center.as_slice(), "ball center")?;
        let outer = center.norm() + radius;
        Ok(ConvexBody {
            dim: center.len(),
            center: center.clone(),
            shape: Shape::Ball { center, radius },
            inner_radius: radius,
            outer_radius: outer,
            slack: DEFAULT_SLACK,
        })
    }

    pub fn unit_ball(d: usize) -> Self {
        Self::ball(Vector::zeros(d), 1.0).expect("valid unit ball")
    }

    pub fn cube(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim(lo.len(), hi.len(), "box bounds")?;
        if lo.is_empty() || lo.iter().zip(hi.iter()).any(|(l, h)| !(h > l)) {
            return Err(Error::Usage("box needs lo < hi in every coordinate".into()));
        }
        let center = (&lo + &hi) * 0.5;
        let inner = lo.iter().zip(hi.iter()).map(|(l, h)| 0.5 * (h - l)).fold(f64::INFINITY, f64::min);
        let outer = lo
            .iter()
            .zip(hi.iter())
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(ConvexBody {
            dim: lo.len(),
            center,
            shape: Shape::Box { lo, hi },
            inner_radius: inner,
            outer_radius: outer,
            slack: DEFAULT_SLACK,
        })
    }

    /// Corner simplex {x >= 0, sum x <= 1}.
    pub fn simplex(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Usage("simplex needs dim >= 1".into()));
        }
        let df = d as f64;
        let r = 1.0 / (df + df.sqrt());
        Ok(ConvexBody {
            dim: d,
            center: Vector::from_element(d, r),
            shape: Shape::Simplex,
            inner_radius: r,
            outer_radius: 1.0,
            slack: DEFAULT_SLACK,
        })
    }

    /// Image {M z + offset : z in body} under an invertible square M.
    pub fn affine_image(body: ConvexBody, m: Matrix, offset: Vector) -> Result<Self> {
        let d = body.dim;
        if m.shape() != (d, d) {
            return Err(Error::Usage("affine_image needs a square matrix of the body dimension".into()));
        }
        check_dim(d, offset.len(), "affine_image offset")?;
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Usage("affine_image matrix is singular".into()))?;
        let sv = m.clone().svd(false, false).singular_values;
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let center = &m * &body.center + &offset;
        let outer = smax * body.outer_radius + offset.norm();
        Ok(ConvexBody {
            dim: d,
            inner_radius: smin * body.inner_radius,
            outer_radius: outer,
            slack: body.slack,
            center,
            shape: Shape::Affine { inner: std::boxed::Box::new(body), m, m_inv, offset },
        })
    }

    pub fn custom(
        oracle: Arc<dyn SeparationOracle>,
        dim: usize,
        center: Vector,
        inner_radius: f64,
        outer_radius: f64,
    ) -> Result<Self> {
        check_dim(dim, center.len(), "custom body center")?;
        if !(inner_radius > 0.0) || outer_radius < inner_radius {
            return Err(Error::Usage("custom body needs 0 < r <= R".into()));
        }
        Ok(ConvexBody { shape: Shape::Custom(oracle), dim, center, inner_radius, outer_radius, slack: DEFAULT_SLACK })
    }

    pub fn from_spec(spec: &BodySpec) -> Result<Self> {
        match spec {
            BodySpec::Ball { center, radius } => Self::ball(Vector::from_vec(center.clone()), *radius),
            BodySpec::Box { lo, hi } => Self::cube(Vector::from_vec(lo.clone()), Vector::from_vec(hi.clone())),
            BodySpec::Simplex { dim } => Self::simplex(*dim),
            BodySpec::AffineImage { body, matrix, offset } => {
                let inner = Self::from_spec(body)?;
                let d = inner.dim;
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::Usage("affine_image matrix shape mismatch".into()));
                }
                let m = Matrix::from_fn(d, d, |i, j| matrix[i][j]);
                Self::affine_image(inner, m, Vector::from_vec(offset.clone()))
            }
        }
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        if let Shape::Affine { inner, .. } = &mut self.shape {
            **inner = inner.as_ref().clone().with_slack(slack);
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn is_polytope(&self) -> bool {
        match &self.shape {
            Shape::Box { .. } | Shape::Simplex => true,
            Shape::Affine { inner, .. } => inner.is_polytope(),
            _ => false,
        }
    }

    /// Separation oracle: Inside, or a halfspace containing the body that strictly excludes p.
    pub fn separate(&self, p: &Vector) -> Result<Separation> {
        check_dim(self.dim, p.len(), "separate")?;
        check_finite(p.as_slice(), "separate query")?;
        Ok(self.separate_unchecked(p))
    }

    pub(crate) fn separate_unchecked(&self, p: &Vector) -> Separation {
        let s = self.slack;
        match &self.shape {
            Shape::Ball { center, radius } => {
                let diff = p - center;
                let n = diff.norm();
                if n <= radius + s {
                    Separation::Inside
                } else {
                    let a = diff / n;
                    let b = a.dot(center) + radius;
                    Separation::Outside(Halfspace::new(a, b))
                }
            }
            Shape::Box { lo, hi } => {
                let mut worst = (0.0, 0usize, true);
                for i in 0..self.dim {
                    let up = p[i] - hi[i];
                    let down = lo[i] - p[i];
                    if up > s && up > worst.0 {
                        worst = (up, i, true);
                    }
                    if down > s && down > worst.0 {
                        worst = (down, i, false);
                    }
                }
                if worst.0 == 0.0 {
                    return Separation::Inside;
                }
                let (_, i, upper) = worst;
                let mut a = Vector::zeros(self.dim);
                if upper {
                    a[i] = 1.0;
                    Separation::Outside(Halfspace::new(a, hi[i]))
                } else {
                    a[i] = -1.0;
                    Separation::Outside(Halfspace::new(a, -lo[i]))
                }
            }
            Shape::Simplex => {
                let total: f64 = p.iter().sum();
                let mut worst = (0.0, None::<usize>);
                if total - 1.0 > s {
                    worst = (total - 1.0, None);
                }
                for i in 0..self.dim {
                    if -p[i] > s && -p[i] > worst.0 {
                        worst = (-p[i], Some(i));
                    }
                }
                if worst.0 == 0.0 {
                    return Separation::Inside;
                }
                match worst.1 {
                    None => Separation::Outside(Halfspace::new(Vector::from_element(self.dim, 1.0), 1.0)),
                    Some(i) => {
                        let mut a = Vector::zeros(self.dim);
                        a[i] = -1.0;
                        Separation::Outside(Halfspace::new(a, 0.0))
                    }
                }
            }
            Shape::Affine { inner, m_inv, offset, .. } => {
                let z = m_inv * (p - offset);
                match inner.separate_unchecked(&z) {
                    Separation::Inside => Separation::Inside,
                    Separation::Outside(h) => {
                        let a = m_inv.transpose() * &h.a;
                        let b = h.b + a.dot(offset);
                        Separation::Outside(Halfspace::new(a, b))
                    }
                }
            }
            Shape::Custom(o) => o.separate(p),
        }
    }

    pub fn contains(&self, p: &Vector) -> bool {
        p.len() == self.dim && matches!(self.separate_unchecked(p), Separation::Inside)
    }

    /// Exact maximizer of <v, x> over the body for analytic shapes; None for custom bodies.
    pub fn linear_argmax(&self, v: &Vector) -> Option<Vector> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let n = v.norm();
                if n == 0.0 {
                    Some(center.clone())
                } else {
                    Some(center + v * (radius / n))
                }
            }
            Shape::Box { lo, hi } => Some(Vector::from_fn(self.dim, |i, _| {
                if v[i] > 0.0 {
                    hi[i]
                } else if v[i] < 0.0 {
                    lo[i]
                } else {
                    0.5 * (lo[i] + hi[i])
                }
            })),
            Shape::Simplex => {
                let mut best = 0usize;
                for i in 1..self.dim {
                    if v[i] > v[best] {
                        best = i;
                    }
                }
                let mut x = Vector::zeros(self.dim);
                if v[best] > 0.0 {
                    x[best] = 1.0;
                }
                Some(x)
            }
            Shape::Affine { inner, m, offset, .. } => {
                let z = inner.linear_argmax(&(m.transpose() * v))?;
                Some(m * z + offset)
            }
            Shape::Custom(_) => None,
        }
    }

    /// sup over the body of <v, x>; analytic when available, else ellipsoid-approximated.
    pub fn support(&self, v: &Vector) -> Result<(f64, Vector)> {
        if let Some(x) = self.linear_argmax(v) {
            return Ok((v.dot(&x), x));
        }
        let tol = 1e-9 * (1.0 + v.norm() * self.outer_radius);
        let r = super::maximize_concave(self, |x: &Vector| (v.dot(x), v.clone()), tol)?;
        Ok((r.value, r.x))
    }

    /// Uniform-ish interior sample (exactly uniform for analytic shapes).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match &self.shape {
            Shape::Ball { center, radius } => center + sampling::in_ball(rng, self.dim, *radius),
            Shape::Box { lo, hi } => Vector::from_fn(self.dim, |i, _| rng.random_range(lo[i]..=hi[i])),
            Shape::Simplex => {
                let e: Vec<f64> = (0..=self.dim).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let s: f64 = e.iter().sum();
                Vector::from_fn(self.dim, |i, _| e[i] / s)
            }
            Shape::Affine { inner, m, offset, .. } => m * inner.sample(rng) + offset,
            Shape::Custom(_) => loop {
                let x = sampling::in_ball(rng, self.dim, self.outer_radius);
                if self.contains(&x) {
                    return x;
                }
            },
        }
    }

    /// Points on the relative boundary, including all vertices of small polytopes.
    pub fn extreme_probes<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vector> {
        let d = self.dim;
        match &self.shape {
            Shape::Ball { center, radius } => {
                let mut out = Vec::with_capacity(count + 2 * d);
                for i in 0..d {
                    for s in [1.0, -1.0] {
                        let mut x = center.clone();
                        x[i] += s * radius;
                        out.push(x);
                    }
                }
                for _ in 0..count {
                    out.push(center + sampling::unit_vector(rng, d) * *radius);
                }
                out
            }
            Shape::Box { lo, hi } => {
                if d <= 12 {
                    (0..(1usize << d))
                        .map(|mask| Vector::from_fn(d, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }))
                        .collect()
                } else {
                    (0..count)
                        .map(|_| Vector::from_fn(d, |i, _| if rng.random::<bool>() { hi[i] } else { lo[i] }))
                        .collect()
                }
            }
            Shape::Simplex => {
                let mut out = vec![Vector::zeros(d)];
                for i in 0..d {
                    let mut e = Vector::zeros(d);
                    e[i] = 1.0;
                    out.push(e);
                }
                out
            }
            Shape::Affine { inner, m, offset, .. } => {
                inner.extreme_probes(rng, count).into_iter().map(|z| m * z + offset).collect()
            }
            Shape::Custom(_) => (0..count)
                .map(|_| {
                    let v = sampling::unit_vector(rng, d);
                    self.support(&v).map(|(_, x)| x).unwrap_or_else(|_| self.center.clone())
                })
                .collect(),
        }
    }
}
