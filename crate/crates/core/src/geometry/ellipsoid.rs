use crate::distributions::SupportDistribution;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use nalgebra::SymmetricEigen;

/// Ratio floor min_eig / max_eig below which the shape matrix is rejected.
pub const CONDITION_FLOOR: f64 = 1e-12;

/// {x : (x - c)^T P^{-1} (x - c) <= 1} with P symmetric positive definite.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    center: Vector,
    shape: Matrix,
    log_det: f64,
    cuts: usize,
    scratch: Vector,
}

/// log of the volume of the unit ball in dimension n.
pub fn log_unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

/// log-volume of a Euclidean ball of the given radius.
pub fn log_ball_volume(n: usize, radius: f64) -> f64 {
    log_unit_ball_volume(n) + n as f64 * radius.ln()
}

/// ln Gamma(x) for x a positive multiple of 1/2, by the recursion Gamma(x + 1) = x Gamma(x).
fn ln_gamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut y = x;
    while y > 1.0 + 1e-12 {
        y -= 1.0;
        acc += y.ln();
    }
    if (y - 0.5).abs() < 1e-12 {
        acc + 0.5 * std::f64::consts::PI.ln()
    } else {
        acc
    }
}

/// Exact log-volume decrement of one central cut in dimension n.
pub fn central_cut_log_decay(n: usize) -> f64 {
    if n == 1 {
        return -(2.0f64).ln();
    }
    let nf = n as f64;
    0.5 * (nf * (nf * nf / (nf * nf - 1.0)).ln() + (1.0 - 2.0 / (nf + 1.0)).ln())
}

impl Ellipsoid {
    pub fn ball(center: Vector, radius: f64) -> Self {
        let n = center.len();
        assert!(n > 0 && radius > 0.0);
        Ellipsoid {
            shape: Matrix::identity(n, n) * (radius * radius),
            log_det: 2.0 * n as f64 * radius.ln(),
            cuts: 0,
            scratch: Vector::zeros(n),
            center,
        }
    }

    pub fn new(center: Vector, shape: Matrix) -> Result<Self> {
        let n = center.len();
        if shape.shape() != (n, n) {
            return Err(Error::Usage("ellipsoid shape must be square of the center dimension".into()));
        }
        let chol = shape
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("ellipsoid shape is not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Ellipsoid { center, shape, log_det, cuts: 0, scratch: Vector::zeros(n) })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn shape(&self) -> &Matrix {
        &self.shape
    }

    pub fn cuts(&self) -> usize {
        self.cuts
    }

    /// log det of the shape matrix, tracked by the exact per-cut formula.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn log_volume(&self) -> f64 {
        log_unit_ball_volume(self.dim()) + 0.5 * self.log_det
    }

    /// log det recomputed from a Cholesky factorization.
    pub fn log_det_direct(&self) -> Option<f64> {
        let chol = self.shape.clone().cholesky()?;
        Some(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self.shape.clone().cholesky() {
            Some(ch) => {
                let diff = x - &self.center;
                diff.dot(&ch.solve(&diff)) <= 1.0 + 1e-12
            }
            None => false,
        }
    }

    /// Keep the half {x : a.(x - c) <= 0}. The shape stays symmetric positive definite.
    pub fn central_cut(&mut self, a: &Vector) -> Result<()> {
        let n = self.dim();
        if a.len() != n {
            return Err(Error::Usage("cut normal dimension mismatch".into()));
        }
        self.scratch.gemv(1.0, &self.shape, a, 0.0);
        let apa = a.dot(&self.scratch);
        if !(apa > 0.0) || !apa.is_finite() {
            return Err(Error::Numeric(format!(
                "degenerate cut: a^T P a = {apa:e} after {} cuts",
                self.cuts
            )));
        }
        let scale = 1.0 / apa.sqrt();
        self.scratch *= scale;
        if n == 1 {
            self.center[0] -= 0.5 * self.scratch[0];
            self.shape[(0, 0)] *= 0.25;
        } else {
            let nf = n as f64;
            self.center.axpy(-1.0 / (nf + 1.0), &self.scratch, 1.0);
            let f = nf * nf / (nf * nf - 1.0);
            let g = self.scratch.clone();
            self.shape.ger(-f * 2.0 / (nf + 1.0), &g, &g, f);
            for i in 0..n {
                for j in (i + 1)..n {
                    let m = 0.5 * (self.shape[(i, j)] + self.shape[(j, i)]);
                    self.shape[(i, j)] = m;
                    self.shape[(j, i)] = m;
                }
            }
        }
        self.log_det += 2.0 * central_cut_log_decay(n);
        self.cuts += 1;
        if self.cuts % n == 0 {
            self.check_conditioning()?;
        } else if (0..n).any(|i| !(self.shape[(i, i)] > 0.0)) {
            return Err(Error::Numeric(format!("shape lost positivity after {} cuts", self.cuts)));
        }
        Ok(())
    }

    /// Fails if min eigenvalue < CONDITION_FLOOR * max eigenvalue.
    pub fn check_conditioning(&self) -> Result<()> {
        let ev = SymmetricEigen::new(self.shape.clone()).eigenvalues;
        let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo > CONDITION_FLOOR * hi) {
            return Err(Error::Numeric(format!(
                "ellipsoid ill-conditioned after {} cuts: eigenvalues in [{lo:e}, {hi:e}]",
                self.cuts
            )));
        }
        Ok(())
    }

    /// Largest semi-axis length.
    pub fn max_semi_axis(&self) -> f64 {
        let ev = SymmetricEigen::new(self.shape.clone()).eigenvalues;
        ev.iter().copied().fold(0.0, f64::max).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum CutKind {
    Feasibility,
    Objective,
    Endomorphism,
    Hope,
}

/// Payload explaining where a cut came from.
#[derive(Clone, Debug)]
pub enum Witness {
    None,
    /// Query point (feasibility) or a point mapped outside the body (endomorphism).
    Point(Vector),
    /// Objective subgradient at the center.
    Gradient(Vector),
    /// Hope distribution with the linearization (grad, offset) of its benefit. Fixed-point
    /// duals record the probed point instead, as `Point`.
    Hope { dist: SupportDistribution, grad: Vector, offset: f64 },
}

/// A recorded cut {z : a.z <= b}.
#[derive(Clone, Debug)]
pub struct CutRecord {
    pub kind: CutKind,
    pub a: Vector,
    pub b: f64,
    pub witness: Witness,
}

impl CutRecord {
    /// Hope cuts may have a zero normal: a benefit that is constant in the transform.
    pub fn new(kind: CutKind, a: Vector, b: f64, witness: Witness) -> Result<Self> {
        if kind != CutKind::Hope && a.iter().all(|x| *x == 0.0) {
            return Err(Error::Contract(format!("{kind:?} cut with zero normal")));
        }
        let ok = matches!(
            (kind, &witness),
            (CutKind::Feasibility, Witness::None | Witness::Point(_))
                | (CutKind::Objective, Witness::Gradient(_) | Witness::Point(_))
                | (CutKind::Endomorphism, Witness::Point(_))
                | (CutKind::Hope, Witness::Hope { .. } | Witness::Point(_))
        );
        if !ok {
            return Err(Error::Contract(format!("{kind:?} cut with mismatched witness")));
        }
        Ok(CutRecord { kind, a, b, witness })
    }
}

pub enum CutterResponse<P> {
    Accept(P),
    Cut(CutRecord),
}

#[derive(Debug)]
pub enum Feasibility<P> {
    Accepted { point: Vector, payload: P, cuts: Vec<CutRecord> },
    Infeasible { cuts: Vec<CutRecord> },
}

/// Relative slack allowed when checking that a cut passes through or below the center.
pub const CUT_CONTRACT_TOL: f64 = 1e-9;

/// Central-cut ellipsoid search. Stops at the first accepted center, or once log-volume drops below
/// `log_vol_threshold`.
pub fn ellipsoid_feasibility<P>(
    init: Ellipsoid,
    mut cutter: impl FnMut(&Vector) -> Result<CutterResponse<P>>,
    log_vol_threshold: f64,
) -> Result<Feasibility<P>> {
    let mut ell = init;
    let mut cuts = Vec::new();
    while ell.log_volume() >= log_vol_threshold {
        let c = ell.center().clone();
        match cutter(&c)? {
            CutterResponse::Accept(payload) => return Ok(Feasibility::Accepted { point: c, payload, cuts }),
            CutterResponse::Cut(rec) => {
                apply_recorded_cut(&mut ell, &rec)?;
                cuts.push(rec);
            }
        }
    }
    Ok(Feasibility::Infeasible { cuts })
}

/// Checks the cut excludes the current center (a.c >= b) and applies it as a central cut.
pub fn apply_recorded_cut(ell: &mut Ellipsoid, rec: &CutRecord) -> Result<()> {
    let c = ell.center();
    let ac = rec.a.dot(c);
    let tol = CUT_CONTRACT_TOL * (1.0 + rec.b.abs() + rec.a.norm() * c.norm());
    if ac < rec.b - tol {
        return Err(Error::Contract(format!(
            "{:?} cut does not exclude the center: a.c = {ac:e} < b = {:e} after {} cuts",
            rec.kind,
            rec.b,
            ell.cuts()
        )));
    }
    ell.central_cut(&rec.a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_volumes() {
        assert!((log_unit_ball_volume(2) - std::f64::consts::PI.ln()).abs() < 1e-13);
        assert!((log_unit_ball_volume(3) - (4.0 / 3.0 * std::f64::consts::PI).ln()).abs() < 1e-13);
    }

    #[test]
    fn tracked_log_det_matches_cholesky() {
        let mut e = Ellipsoid::ball(Vector::zeros(4), 2.0);
        for k in 0..40 {
            let a = Vector::from_fn(4, |i, _| ((i + 3 * k) as f64).sin() + 0.1);
            e.central_cut(&a).unwrap();
        }
        let direct = e.log_det_direct().unwrap();
        assert!((direct - e.log_det()).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn one_dimensional_cut_halves_interval() {
        let mut e = Ellipsoid::ball(Vector::from_vec(vec![0.0]), 1.0);
        e.central_cut(&Vector::from_vec(vec![1.0])).unwrap();
        assert!((e.center()[0] + 0.5).abs() < 1e-15);
        assert!((e.shape()[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn accept_at_center() {
        let r = ellipsoid_feasibility(Ellipsoid::ball(Vector::zeros(2), 1.0), |_| Ok(CutterResponse::Accept(7)), -50.0)
            .unwrap();
        match r {
            Feasibility::Accepted { point, payload, cuts } => {
                assert_eq!(payload, 7);
                assert_eq!(point, Vector::zeros(2));
                assert!(cuts.is_empty());
            }
            _ => panic!(),
        }
    }

    #[test]
    fn cut_that_misses_center_is_rejected() {
        let r = ellipsoid_feasibility::<()>(
            Ellipsoid::ball(Vector::zeros(2), 1.0),
            |_| {
                Ok(CutterResponse::Cut(CutRecord::new(
                    CutKind::Feasibility,
                    Vector::from_vec(vec![1.0, 0.0]),
                    0.5,
                    Witness::None,
                )?))
            },
            -50.0,
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn witness_kind_checked() {
        let r = CutRecord::new(CutKind::Endomorphism, Vector::from_vec(vec![1.0]), 0.0, Witness::None);
        assert!(r.is_err());
    }
}
