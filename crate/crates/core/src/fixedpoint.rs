//! Expected-fixed-point solvers: EFP, quadratic EFP, the concave-EFP iteration scheme, and the
//! Mahalanobis unknown-contraction reduction built on them.

use crate::certificate::{solve_certificate, CertificateOptions, DualBall, DualSet, QuadraticDualBox};
use crate::distributions::SupportDistribution;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{maximize_concave, ConvexBody, CutKind, CutRecord, Witness};
use crate::hope::{run_hope, HopeCut, HopeOptions, HopeOutcome, HopeStats, Probe};
use crate::linalg::{self, Matrix, Vector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Deterministic evaluation oracle x -> phi(x) in R^d; not trusted to map into any body.
#[derive(Clone)]
pub struct PointMap {
    dim: usize,
    f: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

impl std::fmt::Debug for PointMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PointMap(dim = {})", self.dim)
    }
}

impl PointMap {
    pub fn new(dim: usize, f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        PointMap { dim, f: Arc::new(f) }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, |x| x.clone())
    }

    pub fn constant(target: Vector) -> Self {
        Self::new(target.len(), move |_| target.clone())
    }

    /// x -> M x + c.
    pub fn affine(m: Matrix, c: Vector) -> Self {
        Self::new(c.len(), move |x| &m * x + &c)
    }

    /// x -> x* + (1 - gamma)(x - x*).
    pub fn contraction(center: Vector, gamma: f64) -> Self {
        Self::new(center.len(), move |x| &center + (x - &center) * (1.0 - gamma))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len(), "point map input")?;
        let y = (self.f)(x);
        check_dim(self.dim, y.len(), "point map output")?;
        check_finite(y.as_slice(), "point map output")?;
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub enum FixedPointResult {
    Certificate(SupportDistribution),
    /// A point whose image the body's separation oracle rejects.
    NotEndomorphism(Vector),
}

impl FixedPointResult {
    pub fn certificate(&self) -> Option<&SupportDistribution> {
        match self {
            FixedPointResult::Certificate(mu) => Some(mu),
            FixedPointResult::NotEndomorphism(_) => None,
        }
    }
}

/// Residuals of a distribution against the quadratic fixed-point conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QefpResiduals {
    /// |E (phi(x) - x)|.
    pub efp_norm: f64,
    /// 2 * negative eigen-mass of sym(E x (phi(x) - x)^T).
    pub psd_term: f64,
    /// sup over v in the body of E <phi(x) - x, v - x>.
    pub evi_residual: f64,
}

impl QefpResiduals {
    /// sup over the dual box of E <b - A x, phi(x) - x>.
    pub fn quadratic_value(&self) -> f64 {
        self.efp_norm + self.psd_term
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverReport {
    pub stats: HopeStats,
    pub support_size: usize,
}

fn displacement_moments(mu: &SupportDistribution, phi: &PointMap) -> Result<(Vector, Matrix, f64)> {
    let d = mu.dim();
    check_dim(phi.dim(), d, "distribution vs point map")?;
    let mut mean_w = Vector::zeros(d);
    let mut cross = Matrix::zeros(d, d);
    let mut inner = 0.0;
    for (p, x) in mu.iter() {
        let w = phi.eval(x)? - x;
        mean_w.axpy(p, &w, 1.0);
        cross.ger(p, x, &w, 1.0);
        inner += p * w.dot(x);
    }
    Ok((mean_w, cross, inner))
}

/// (efp_norm, psd_term, evi_residual) of mu. The EVI supremum is a linear maximization over the
/// body, computed exactly for analytic bodies.
pub fn qefp_residual(mu: &SupportDistribution, phi: &PointMap, body: &ConvexBody) -> Result<QefpResiduals> {
    let (mean_w, cross, inner) = displacement_moments(mu, phi)?;
    let efp_norm = mean_w.norm();
    let psd_term = 2.0 * linalg::negative_eigen_mass(&cross);
    let evi_residual = if efp_norm == 0.0 { -inner } else { body.support(&mean_w)?.0 - inner };
    Ok(QefpResiduals { efp_norm, psd_term, evi_residual })
}

/// Dual functional of a probe x: (b, A) -> <b - A x, w> with w = phi(x) - x, in (b, svec A) form.
fn quadratic_functional(x: &Vector, w: &Vector) -> Vector {
    let m = linalg::sym(&(x * w.transpose()));
    linalg::concat(&[w, &(-linalg::svec(&m))])
}

fn distribution_from(lambda: &[f64], points: &[Vector]) -> Result<SupportDistribution> {
    let max = lambda.iter().copied().fold(0.0, f64::max);
    let weights: Vec<f64> = lambda.iter().map(|l| if *l > 1e-12 * max { *l } else { 0.0 }).collect();
    SupportDistribution::from_weighted(points.to_vec(), weights)
}

fn not_endomorphism(body: &ConvexBody, y: &Vector) -> Result<bool> {
    Ok(!body.contains(y))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Usage(format!("eps must be positive and finite, got {eps}")));
    }
    Ok(())
}

/// Runs of the solvers, with every recorded hope cut.
pub struct FixedPointRun {
    pub result: FixedPointResult,
    pub report: SolverReport,
    /// Main cuts as records {z : a.z <= b} with the probed point as witness.
    pub cuts: Vec<CutRecord>,
}

fn finish_run(
    outcome: HopeOutcome<Vector, Vector>,
    stats: HopeStats,
    eps: f64,
    verify: impl Fn(&SupportDistribution) -> Result<f64>,
) -> Result<FixedPointRun> {
    match outcome {
        HopeOutcome::Exit(x) => Ok(FixedPointRun {
            result: FixedPointResult::NotEndomorphism(x),
            report: SolverReport { stats, support_size: 0 },
            cuts: Vec::new(),
        }),
        HopeOutcome::Certificate { lambda, cuts, .. } => {
            // Fixed-point duals never emit conic cuts: the dual box is handled in closed form.
            let points: Vec<Vector> = cuts.iter().map(|c| c.witness.clone()).collect();
            let mu = distribution_from(&lambda, &points)?;
            let value = verify(&mu)?;
            if value > eps * (1.0 + 1e-9) {
                return Err(Error::Certificate(format!("certificate value {value:e} exceeds eps {eps:e}")));
            }
            let records = cuts
                .into_iter()
                .filter(|c| c.w.iter().any(|v| *v != 0.0))
                .map(|c| hope_record(c, eps))
                .collect::<Result<Vec<_>>>()?;
            Ok(FixedPointRun {
                report: SolverReport { stats, support_size: mu.len() },
                result: FixedPointResult::Certificate(mu),
                cuts: records,
            })
        }
    }
}

fn hope_record(c: HopeCut<Vector>, eps: f64) -> Result<CutRecord> {
    CutRecord::new(CutKind::Hope, -c.w, c.offset - eps, Witness::Point(c.witness))
}

/// Solves the expected fixed point problem: |E_mu (phi(x) - x)| <= eps, or finds x with phi(x)
/// outside the body.
pub fn efp_solve(phi: &PointMap, body: &ConvexBody, eps: f64) -> Result<FixedPointResult> {
    Ok(efp_run(phi, body, eps)?.result)
}

pub fn efp_run(phi: &PointMap, body: &ConvexBody, eps: f64) -> Result<FixedPointRun> {
    check_eps(eps)?;
    let d = body.dim();
    check_dim(d, phi.dim(), "point map vs body")?;
    let set = DualBall { dim: d, radius: 1.0 };
    let options = HopeOptions::new(eps, eps / 4.0, d);
    let (outcome, stats) = run_hope(&set, &options, |v| {
        let x = if v.iter().all(|t| *t == 0.0) {
            body.center().clone()
        } else if let Some(x) = body.linear_argmax(v) {
            x
        } else {
            let tol = eps / 4.0;
            maximize_concave(body, |y: &Vector| (v.dot(y), v.clone()), tol)?.x
        };
        let y = phi.eval(&x)?;
        if not_endomorphism(body, &y)? {
            return Ok(Probe::Exit(x));
        }
        let w = y - &x;
        if w.iter().all(|t| *t == 0.0) {
            return Ok(Probe::Exact(HopeCut { w, offset: 0.0, witness: x }));
        }
        Ok(Probe::Cut(HopeCut { w, offset: 0.0, witness: x }))
    })?;
    finish_run(outcome, stats, eps, |mu| Ok(qefp_residual(mu, phi, body)?.efp_norm))
}

/// Solves the quadratic expected fixed point problem:
/// sup over 0 <= A <= 2I, |b| <= 1 of E_mu <b - A x, phi(x) - x> <= eps.
pub fn qefp_solve(phi: &PointMap, body: &ConvexBody, eps: f64) -> Result<FixedPointResult> {
    Ok(qefp_run(phi, body, eps)?.result)
}

pub fn qefp_run(phi: &PointMap, body: &ConvexBody, eps: f64) -> Result<FixedPointRun> {
    check_eps(eps)?;
    let d = body.dim();
    check_dim(d, phi.dim(), "point map vs body")?;
    let set = QuadraticDualBox { d };
    let options = HopeOptions::new(eps, eps / 4.0, set.dim());
    let (outcome, stats) = run_hope(&set, &options, |z| {
        let (b, a) = set.split(z);
        let tol = eps / 4.0;
        let x = maximize_concave(
            body,
            |y: &Vector| {
                let ay = &a * y;
                (b.dot(y) - 0.5 * y.dot(&ay), &b - ay)
            },
            tol,
        )?
        .x;
        let y = phi.eval(&x)?;
        if not_endomorphism(body, &y)? {
            return Ok(Probe::Exit(x));
        }
        let w = y - &x;
        if w.iter().all(|t| *t == 0.0) {
            return Ok(Probe::Exact(HopeCut { w: Vector::zeros(set.dim()), offset: 0.0, witness: x }));
        }
        Ok(Probe::Cut(HopeCut { w: quadratic_functional(&x, &w), offset: 0.0, witness: x }))
    })?;
    finish_run(outcome, stats, eps, |mu| Ok(qefp_residual(mu, phi, body)?.quadratic_value()))
}

/// Certificate weights over the witnesses of recorded hope cuts, minimizing
/// g(lambda) = |sum lambda_j w_j| + 2 negmass(sym(sum lambda_j x_j w_j^T)); fails if g > eps.
pub fn qefp_certificate(cuts: &[CutRecord], phi: &PointMap, eps: f64) -> Result<SupportDistribution> {
    check_eps(eps)?;
    let mut points = Vec::with_capacity(cuts.len());
    let mut functionals = Vec::with_capacity(cuts.len());
    for c in cuts {
        let x = match &c.witness {
            Witness::Point(x) => x.clone(),
            _ => return Err(Error::Usage("certificate extraction needs point witnesses".into())),
        };
        let w = phi.eval(&x)? - &x;
        functionals.push(quadratic_functional(&x, &w));
        points.push(x);
    }
    let d = phi.dim();
    let set = QuadraticDualBox { d };
    let offsets = vec![0.0; points.len()];
    let kinds = vec![false; points.len()];
    if points.is_empty() {
        return Err(Error::Usage("certificate extraction needs at least one cut".into()));
    }
    let sol = solve_certificate(&set, &functionals, &offsets, &kinds, &CertificateOptions::new(eps, 200_000), None)?;
    if sol.value > eps {
        return Err(Error::Certificate(format!(
            "certificate value {:e} exceeds eps {eps:e} after {} iterations",
            sol.value, sol.iterations
        )));
    }
    distribution_from(&sol.lambda, &points)
}

/// Iterates of the concave-EFP scheme together with its outcome.
#[derive(Clone, Debug)]
pub struct CefpRun {
    pub result: FixedPointResult,
    /// x^(0), ..., x^(M) on success; up to the exiting iterate otherwise.
    pub iterates: Vec<Vector>,
}

/// Concave EFP by plain iteration: mu is uniform over x^(0..M-1) with M = ceil(1/eps), so
/// E_mu[u(phi(x)) - u(x)] = (u(x^(M)) - u(x^(0))) / M for every u.
pub fn cefp_fptas(phi: &PointMap, body: &ConvexBody, eps: f64, x0: Option<Vector>) -> Result<FixedPointResult> {
    Ok(cefp_run(phi, body, eps, x0)?.result)
}

pub fn cefp_run(phi: &PointMap, body: &ConvexBody, eps: f64, x0: Option<Vector>) -> Result<CefpRun> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Usage(format!("cefp needs eps in (0, 1], got {eps}")));
    }
    check_dim(body.dim(), phi.dim(), "point map vs body")?;
    let x0 = x0.unwrap_or_else(|| body.center().clone());
    check_dim(body.dim(), x0.len(), "start point")?;
    if !body.contains(&x0) {
        return Err(Error::Usage("cefp start point lies outside the body".into()));
    }
    let m = (1.0 / eps).ceil() as usize;
    let mut iterates = vec![x0];
    for _ in 0..m {
        let x = iterates.last().expect("nonempty");
        let y = phi.eval(x)?;
        if not_endomorphism(body, &y)? {
            let x = x.clone();
            return Ok(CefpRun { result: FixedPointResult::NotEndomorphism(x), iterates });
        }
        iterates.push(y);
    }
    let mu = SupportDistribution::uniform(iterates[..m].to_vec())?;
    Ok(CefpRun { result: FixedPointResult::Certificate(mu), iterates })
}

/// Unknown-contraction solver for Q(x) = (x - x*)^T A (x - x*): a QEFP at precision delta * gamma.
pub fn mahalanobis_unkcontr(f: &PointMap, body: &ConvexBody, gamma: f64, delta: f64) -> Result<SupportDistribution> {
    if !(gamma > 0.0 && gamma <= 1.0) || !(delta > 0.0) {
        return Err(Error::Usage(format!("need gamma in (0, 1] and delta > 0, got {gamma}, {delta}")));
    }
    match qefp_solve(f, body, delta * gamma)? {
        FixedPointResult::Certificate(mu) => Ok(mu),
        FixedPointResult::NotEndomorphism(x) => Err(Error::Promise(format!(
            "map sends {:?} outside the body; not a contraction of it",
            x.as_slice()
        ))),
    }
}

/// Maximum refinement rounds of [`point_extract`].
pub const EXTRACT_ROUNDS: usize = 10;

/// Turns a distributional solver into a point solver: re-solve at delta / s, where s is the
/// support size, and return the heaviest atom (Q(top) <= s * E Q <= delta).
pub fn point_extract(
    mu: &SupportDistribution,
    mut refine: impl FnMut(f64) -> Result<SupportDistribution>,
    delta: f64,
) -> Result<Vector> {
    if !(delta > 0.0) {
        return Err(Error::Usage("point extraction needs delta > 0".into()));
    }
    if mu.len() == 1 {
        return Ok(mu.atoms()[0].clone());
    }
    let mut s = mu.len();
    for _ in 0..EXTRACT_ROUNDS {
        let nu = refine(delta / s as f64)?;
        if nu.len() <= s {
            return Ok(nu.top_atom().clone());
        }
        s = nu.len();
    }
    Err(Error::Resource(format!("point extraction did not settle within {EXTRACT_ROUNDS} refinements")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_point_mass() {
        let body = ConvexBody::unit_ball(3);
        let phi = PointMap::identity(3);
        for r in [efp_solve(&phi, &body, 1e-3).unwrap(), qefp_solve(&phi, &body, 1e-3).unwrap()] {
            let mu = r.certificate().unwrap();
            assert_eq!(mu.len(), 1);
        }
    }

    #[test]
    fn exterior_shift_is_not_endomorphism() {
        let body = ConvexBody::unit_ball(2);
        let phi = PointMap::new(2, |x| x + Vector::from_vec(vec![3.0, 0.0]));
        match efp_solve(&phi, &body, 1e-2).unwrap() {
            FixedPointResult::NotEndomorphism(x) => assert!(!body.contains(&phi.eval(&x).unwrap())),
            _ => panic!("expected a witness"),
        }
    }

    #[test]
    fn cefp_constant_exterior() {
        let body = ConvexBody::unit_ball(2);
        let phi = PointMap::constant(Vector::from_vec(vec![5.0, 0.0]));
        let r = cefp_fptas(&phi, &body, 0.5, None).unwrap();
        assert!(matches!(r, FixedPointResult::NotEndomorphism(x) if x == Vector::zeros(2)));
    }

    #[test]
    fn extract_rule_arithmetic() {
        let atoms: Vec<Vector> = (0..4).map(|i| Vector::from_vec(vec![i as f64])).collect();
        let mu = SupportDistribution::uniform(atoms).unwrap();
        let mut asked = Vec::new();
        let x = point_extract(
            &mu,
            |p| {
                asked.push(p);
                SupportDistribution::from_weighted(
                    vec![Vector::from_vec(vec![1.0]), Vector::from_vec(vec![2.0])],
                    vec![0.3, 0.7],
                )
            },
            0.1,
        )
        .unwrap();
        assert_eq!(asked, vec![0.025]);
        assert_eq!(x[0], 2.0);
    }
}
