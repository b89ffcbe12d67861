//! Phi_m-regret minimization over a convex strategy set: gradient descent on transforms K under
//! shrinking outer approximations ("shells") of the endomorphic set, with concave expected fixed
//! points played at every round.
//!
//! A shell is the Frobenius ball of radius D intersected with halfspaces produced by
//! [`endomorphism_cut`]; every such halfspace contains every endomorphic K, so shells only shrink
//! toward Phi_m and never cut into it.

use crate::distributions::SupportDistribution;
use crate::error::{check_dim, Error, Result};
use crate::fixedpoint::{cefp_run, FixedPointResult};
use crate::geometry::{log_ball_volume, maximize_concave_best_effort, ConvexBody, Ellipsoid, Halfspace};
use crate::linalg::{self, Matrix, Vector};
use crate::phi::{default_d, endomorphic_k_body, endomorphism_cut, FeatureMap, LinearTransform};
use crate::sampling::SeededRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A concave utility on the strategy set with its gradient.
#[derive(Clone)]
pub struct ConcaveUtility {
    value: Arc<dyn Fn(&Vector) -> f64 + Send + Sync>,
    gradient: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

impl std::fmt::Debug for ConcaveUtility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ConcaveUtility")
    }
}

impl ConcaveUtility {
    pub fn new(
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        ConcaveUtility { value: Arc::new(value), gradient: Arc::new(gradient) }
    }

    /// x -> <c, x>.
    pub fn linear(c: Vector) -> Self {
        let g = c.clone();
        Self::new(move |x| c.dot(x), move |_| g.clone())
    }

    /// x -> b.x - x^T A x with A symmetric PSD.
    pub fn quadratic(b: Vector, a: Matrix) -> Self {
        let (b2, a2) = (b.clone(), a.clone());
        Self::new(move |x| b.dot(x) - x.dot(&(&a * x)), move |x| &b2 - &a2 * x * 2.0)
    }

    /// x -> -|x - target|^2.
    pub fn concave_peak(target: Vector) -> Self {
        let t2 = target.clone();
        Self::new(move |x| -(x - &target).norm_squared(), move |x| (&t2 - x) * 2.0)
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
}

/// B_D(0) in flattened K-space intersected with halfspaces that contain every endomorphic K.
#[derive(Clone, Debug)]
pub struct ShellSet {
    pub dim: usize,
    pub radius: f64,
    pub cuts: Vec<Halfspace>,
}

impl ShellSet {
    pub fn new(dim: usize, radius: f64) -> Self {
        ShellSet { dim, radius, cuts: Vec::new() }
    }

    /// A constraint violated by k (the ball first), as a halfspace a.k <= b.
    pub fn violated(&self, k: &Vector) -> Option<Halfspace> {
        let n = k.norm();
        if n > self.radius {
            return Some(Halfspace::new(k / n, self.radius));
        }
        self.cuts.iter().find(|h| h.value(k) > 0.0).cloned()
    }

    pub fn contains(&self, k: &Vector, tol: f64) -> bool {
        k.norm() <= self.radius + tol && self.cuts.iter().all(|h| h.contains(k, tol))
    }

    /// Euclidean projection by Dykstra's alternating projections over the ball and the cuts.
    pub fn project(&self, target: &Vector) -> Vector {
        if self.contains(target, 0.0) {
            return target.clone();
        }
        let sets = self.cuts.len() + 1;
        let mut x = target.clone();
        let mut incr = vec![Vector::zeros(self.dim); sets];
        for _ in 0..20_000 {
            let prev = x.clone();
            for (j, inc) in incr.iter_mut().enumerate() {
                let y = &x + &*inc;
                let p = if j == 0 {
                    let n = y.norm();
                    if n > self.radius {
                        &y * (self.radius / n)
                    } else {
                        y.clone()
                    }
                } else {
                    let h = &self.cuts[j - 1];
                    let v = h.value(&y);
                    if v > 0.0 {
                        &y - &h.a * (v / h.a.norm_squared())
                    } else {
                        y.clone()
                    }
                };
                *inc = &y - &p;
                x = p;
            }
            if (&x - &prev).norm() <= 1e-13 * (1.0 + self.radius) {
                break;
            }
        }
        x
    }
}

/// A concave expected fixed point of x -> K m(x) built from the iterates x^(0..M).
#[derive(Clone, Debug)]
pub struct CefpPoint {
    pub mu: SupportDistribution,
    pub first: Vector,
    pub last: Vector,
    pub steps: usize,
}

impl CefpPoint {
    /// E_mu[u(K m(x)) - u(x)] by telescoping.
    pub fn telescoped(&self, u: &ConcaveUtility) -> f64 {
        (u.value(&self.last) - u.value(&self.first)) / self.steps as f64
    }
}

#[derive(Clone, Debug)]
pub enum ShellOutcome {
    Found { k: Vector, cefp: CefpPoint },
    /// Halfspaces containing every endomorphic K whose intersection with the searched region has
    /// volume below the requested precision.
    Polytope(Vec<Halfspace>),
}

/// Runs the concave fixed-point scheme at K; a miss yields the endomorphism cut through K.
fn cefp_at(body: &ConvexBody, map: &FeatureMap, k: &Vector, cefp_eps: f64) -> Result<std::result::Result<CefpPoint, Halfspace>> {
    let t = LinearTransform::from_flat(k, map.clone())?;
    let run = cefp_run(&t.to_point_map(), body, cefp_eps, None)?;
    match run.result {
        FixedPointResult::Certificate(mu) => {
            let steps = run.iterates.len() - 1;
            Ok(Ok(CefpPoint {
                mu,
                first: run.iterates[0].clone(),
                last: run.iterates[steps].clone(),
                steps,
            }))
        }
        FixedPointResult::NotEndomorphism(x) => {
            let h = endomorphism_cut(body, &t, &x)?;
            if !(h.value(k) > 0.0) {
                return Err(Error::Contract("endomorphism cut does not exclude its transform".into()));
            }
            Ok(Err(h))
        }
    }
}

/// Searches F = shell ∩ B_q(center) for a transform with a concave expected fixed point, or
/// certifies with endomorphism cuts that F ∩ Phi_m has volume below that of B_{vol_radius}.
pub fn shell_ellipsoid(
    shell: &ShellSet,
    center: &Vector,
    q: f64,
    body: &ConvexBody,
    map: &FeatureMap,
    cefp_eps: f64,
    vol_radius: f64,
) -> Result<ShellOutcome> {
    check_dim(shell.dim, center.len(), "shell center")?;
    check_dim(body.dim() * map.out_dim(), shell.dim, "shell vs feature map")?;
    if !(q >= 0.0) || !(vol_radius > 0.0) {
        return Err(Error::Usage("shell ellipsoid needs q >= 0 and a positive precision".into()));
    }
    let mut found_cuts: Vec<Halfspace> = Vec::new();
    if q == 0.0 {
        if shell.violated(center).is_some() {
            return Ok(ShellOutcome::Polytope(found_cuts));
        }
        return Ok(match cefp_at(body, map, center, cefp_eps)? {
            Ok(cefp) => ShellOutcome::Found { k: center.clone(), cefp },
            Err(h) => ShellOutcome::Polytope(vec![h]),
        });
    }
    let threshold = log_ball_volume(shell.dim, vol_radius);
    let mut ell = Ellipsoid::ball(center.clone(), q);
    while ell.log_volume() >= threshold {
        let c = ell.center().clone();
        let off = &c - center;
        let normal = if off.norm() > q {
            off
        } else if let Some(h) = shell.violated(&c) {
            h.a
        } else if let Some(h) = found_cuts.iter().find(|h| h.value(&c) > 0.0) {
            h.a.clone()
        } else {
            match cefp_at(body, map, &c, cefp_eps)? {
                Ok(cefp) => return Ok(ShellOutcome::Found { k: c, cefp }),
                Err(h) => {
                    let a = h.a.clone();
                    found_cuts.push(h);
                    a
                }
            }
        };
        if ell.central_cut(&normal).is_err() {
            // Degenerate localizer: its volume is already negligible.
            break;
        }
    }
    Ok(ShellOutcome::Polytope(found_cuts))
}

#[derive(Clone, Debug)]
pub struct ShellProjection {
    pub shell: ShellSet,
    pub k: Vector,
    pub cefp: CefpPoint,
    /// Radius at which the transform was found.
    pub radius: f64,
    pub sweeps: usize,
}

/// Approximate projection of `target` onto the endomorphic set through growing balls around it:
/// q runs over multiples of eps / (4D), each failed ball adding its endomorphism cuts to the shell.
///
/// Radii below the current distance from the target to the shell are skipped, since the ball
/// misses the shell there and the search would return no cuts.
pub fn shell_project(
    shell: &ShellSet,
    target: &Vector,
    body: &ConvexBody,
    map: &FeatureMap,
    eps: f64,
    cefp_eps: f64,
) -> Result<ShellProjection> {
    if !(eps > 0.0) {
        return Err(Error::Usage("projection precision must be positive".into()));
    }
    let d = shell.radius;
    if target.norm() > 2.0 * d * (1.0 + 1e-9) {
        return Err(Error::Usage("projection target must lie in the ball of radius 2D".into()));
    }
    let delta = eps / (4.0 * d);
    let vol_radius = eps / (16.0 * d * shell.dim as f64);
    let mut shell = shell.clone();
    let start = |s: &ShellSet| -> usize {
        let dist = (target - s.project(target)).norm();
        ((dist / delta).floor() as usize).saturating_sub(1)
    };
    let mut j = start(&shell);
    let mut sweeps = 0usize;
    loop {
        let q = j as f64 * delta;
        if q > 2.0 * d + delta {
            return Err(Error::Contract(format!("shell projection swept past radius {q:e} without a fixed point")));
        }
        sweeps += 1;
        match shell_ellipsoid(&shell, target, q, body, map, cefp_eps, vol_radius)? {
            ShellOutcome::Found { k, cefp } => return Ok(ShellProjection { shell, k, cefp, radius: q, sweeps }),
            ShellOutcome::Polytope(cuts) => {
                let grew = !cuts.is_empty();
                shell.cuts.extend(cuts);
                j = if grew { (j + 1).max(start(&shell)) } else { j + 1 };
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegretOptions {
    pub horizon: usize,
    /// Projection precision; also the default fixed-point precision.
    pub eps: f64,
    pub cefp_eps: f64,
    /// Learning rate; defaults to D / (G sqrt(T)).
    pub eta: Option<f64>,
    /// Shell radius; defaults to [`default_d`].
    pub d_radius: Option<f64>,
    /// Bound on utility gradients over the body.
    pub grad_bound: f64,
    pub probe_seed: u64,
}

impl RegretOptions {
    /// Fixed-point and projection precision 1/sqrt(T), capped at 0.1.
    pub fn new(horizon: usize) -> Self {
        let eps = (1.0 / (horizon.max(1) as f64).sqrt()).min(0.1);
        RegretOptions { horizon, eps, cefp_eps: eps, eta: None, d_radius: None, grad_bound: 1.0, probe_seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub round: usize,
    /// Played transform K^(t), flattened.
    pub k: Vector,
    pub cefp: CefpPoint,
    pub utility: ConcaveUtility,
    /// E_mu u(x).
    pub expected_utility: f64,
    /// U^(t) = E_mu grad u(K m(x)) m(x)^T, flattened.
    pub u_matrix: Vector,
    /// E_mu[u(K m(x)) - u(x)].
    pub cefp_residual: f64,
    pub shell_cuts: usize,
    pub sweeps: usize,
}

/// One Phi_m-regret learner over a strategy set.
pub struct Learner {
    body: ConvexBody,
    map: FeatureMap,
    shell: ShellSet,
    k: Vector,
    cefp: CefpPoint,
    eta: f64,
    options: RegretOptions,
    rounds: Vec<RoundRecord>,
}

impl Learner {
    pub fn new(body: ConvexBody, map: FeatureMap, options: RegretOptions) -> Result<Self> {
        check_dim(body.dim(), map.in_dim(), "feature map vs body")?;
        if options.horizon == 0 || !(options.eps > 0.0) || !(options.cefp_eps > 0.0 && options.cefp_eps <= 1.0) {
            return Err(Error::Usage("regret needs T >= 1, eps > 0 and fixed-point eps in (0, 1]".into()));
        }
        let d = match options.d_radius {
            Some(d) => d,
            None => default_d(&body, &map, &mut SeededRng::seed_from_u64(options.probe_seed))?,
        };
        let id = linalg::flatten(map.identity_k());
        if id.norm() > d {
            return Err(Error::Usage("shell radius D does not contain the identity transform".into()));
        }
        let g = options.grad_bound * map.norm_bound();
        let eta = options.eta.unwrap_or(d / (g * (options.horizon as f64).sqrt()));
        let shell = ShellSet::new(id.len(), d);
        let cefp = match cefp_at(&body, &map, &id, options.cefp_eps)? {
            Ok(c) => c,
            Err(_) => return Err(Error::Contract("identity transform is not endomorphic".into())),
        };
        Ok(Learner { body, map, shell, k: id, cefp, eta, options, rounds: Vec::new() })
    }

    pub fn distribution(&self) -> &SupportDistribution {
        &self.cefp.mu
    }

    pub fn transform(&self) -> Matrix {
        linalg::unflatten(&self.k, self.body.dim(), self.map.out_dim())
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn shell(&self) -> &ShellSet {
        &self.shell
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn map(&self) -> &FeatureMap {
        &self.map
    }

    /// Receives the round's utility, records the accounting, and takes one shell gradient step.
    pub fn observe(&mut self, u: ConcaveUtility) -> Result<&RoundRecord> {
        let km = self.transform();
        let (rows, cols) = km.shape();
        let mut grad = Matrix::zeros(rows, cols);
        let mut expected = 0.0;
        let mut residual = 0.0;
        for (p, x) in self.cefp.mu.iter() {
            let f = self.map.eval(x)?;
            let y = &km * &f;
            let g = u.gradient(&y);
            check_dim(rows, g.len(), "utility gradient")?;
            grad.ger(p, &g, &f, 1.0);
            let ux = u.value(x);
            expected += p * ux;
            residual += p * (u.value(&y) - ux);
        }
        let telescoped = self.cefp.telescoped(&u);
        if (residual - telescoped).abs() > 1e-8 * (1.0 + residual.abs() + u.value(&self.cefp.first).abs()) {
            return Err(Error::Contract(format!(
                "fixed-point residual {residual:e} disagrees with its telescoped value {telescoped:e}"
            )));
        }
        let u_flat = linalg::flatten(&grad);
        let step = shell_gd_step(self, &u_flat)?;
        let record = RoundRecord {
            round: self.rounds.len() + 1,
            k: std::mem::replace(&mut self.k, step.k),
            cefp: std::mem::replace(&mut self.cefp, step.cefp),
            utility: u,
            expected_utility: expected,
            u_matrix: u_flat,
            cefp_residual: residual,
            shell_cuts: step.shell.cuts.len(),
            sweeps: step.sweeps,
        };
        self.shell = step.shell;
        self.rounds.push(record);
        Ok(self.rounds.last().expect("just pushed"))
    }
}

/// Projected step K + eta U onto the learner's shell.
pub fn shell_gd_step(learner: &Learner, u: &Vector) -> Result<ShellProjection> {
    check_dim(learner.k.len(), u.len(), "feedback matrix")?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feedback".into()));
    }
    let mut target = &learner.k + u * learner.eta;
    let cap = 2.0 * learner.shell.radius;
    if target.norm() > cap {
        target *= cap / target.norm();
    }
    shell_project(&learner.shell, &target, &learner.body, &learner.map, learner.options.eps, learner.options.cefp_eps)
}

/// sum_t E_{mu_t}[u_t(K m(x)) - u_t(x)].
pub fn phi_regret(rounds: &[RoundRecord], map: &FeatureMap, k: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for r in rounds {
        for (p, x) in r.cefp.mu.iter() {
            let y = k * map.eval(x)?;
            total += p * (r.utility.value(&y) - r.utility.value(x));
        }
    }
    Ok(total)
}

/// Gradient of [`phi_regret`] in K.
fn phi_regret_gradient(rounds: &[RoundRecord], map: &FeatureMap, k: &Matrix) -> Result<(f64, Matrix)> {
    let mut total = 0.0;
    let mut grad = Matrix::zeros(k.nrows(), k.ncols());
    for r in rounds {
        for (p, x) in r.cefp.mu.iter() {
            let f = map.eval(x)?;
            let y = k * &f;
            total += p * (r.utility.value(&y) - r.utility.value(x));
            grad.ger(p, &r.utility.gradient(&y), &f, 1.0);
        }
    }
    Ok((total, grad))
}

/// sum_t <U_t, K - K_t>: the shell gradient descent's external regret against K.
pub fn linearized_regret(rounds: &[RoundRecord], k: &Matrix) -> f64 {
    let kf = linalg::flatten(k);
    rounds.iter().map(|r| r.u_matrix.dot(&(&kf - &r.k))).sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegretTraceRow {
    pub round: usize,
    pub utility: f64,
    /// Cumulative linearized regret against the identity transform.
    pub regret_vs_identity: f64,
    /// Cumulative Phi_m-regret against the best fixed K in hindsight.
    pub regret_vs_best_k: f64,
    pub cefp_residual: f64,
    pub shell_cuts: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegretSummary {
    pub rounds: usize,
    pub eta: f64,
    pub d_radius: f64,
    /// Phi_m-regret of the best K found in hindsight (a lower bound on the true sup).
    pub best_k_regret: f64,
    pub best_k: Vec<f64>,
    /// Largest Phi_m-regret among sampled endomorphic K.
    pub sampled_regret: f64,
    /// Linearized regret against the best K plus the summed fixed-point residuals.
    pub chain_bound: f64,
    pub cefp_residual_total: f64,
    /// D^2 / (2 eta) + eta sum_t |U_t|^2.
    pub gd_bound: f64,
}

/// Regret summary: the best fixed K found by concave maximization over the endomorphic set
/// (probe-checked, intersected with the final shell) and a batch of sampled endomorphic K.
pub fn summarize(learner: &Learner, samples: usize, seed: u64) -> Result<RegretSummary> {
    let rounds = learner.rounds();
    let map = &learner.map;
    let body = &learner.body;
    let (rows, cols) = (body.dim(), map.out_dim());
    let mut rng = SeededRng::seed_from_u64(seed);
    let (kbody, features) = endomorphic_k_body(body, map, learner.shell.radius, &learner.shell.cuts, &mut rng)?;
    let total_u: f64 = rounds.iter().map(|r| r.u_matrix.norm_squared()).sum();
    let scale = (total_u.sqrt() * body.outer_radius()).max(1e-12);
    let opt = maximize_concave_best_effort(
        &kbody,
        |kv| match phi_regret_gradient(rounds, map, &linalg::unflatten(kv, rows, cols)) {
            Ok((v, g)) => (v, linalg::flatten(&g)),
            Err(_) => (f64::NAN, Vector::zeros(rows * cols)),
        },
        1e-5 * scale,
    )?;
    let mut best = (opt.value, opt.x.clone());
    let id = map.identity_k();
    let id_regret = phi_regret(rounds, map, id)?;
    if id_regret > best.0 {
        best = (id_regret, linalg::flatten(id));
    }
    let mut sampled = f64::NEG_INFINITY;
    use rand::Rng;
    for _ in 0..samples {
        let y = body.sample(&mut rng);
        let kc = map.constant_k(&y).unwrap_or_else(|| id.clone());
        let s: f64 = rng.random();
        let k = id * (1.0 - s) + kc * s;
        if features.iter().all(|f| body.contains(&(&k * f))) {
            sampled = sampled.max(phi_regret(rounds, map, &k)?);
        }
    }
    let best_k = linalg::unflatten(&best.1, rows, cols);
    let cefp_total: f64 = rounds.iter().map(|r| r.cefp_residual).sum();
    let d = learner.shell.radius;
    Ok(RegretSummary {
        rounds: rounds.len(),
        eta: learner.eta,
        d_radius: d,
        best_k_regret: best.0,
        best_k: best.1.as_slice().to_vec(),
        sampled_regret: sampled,
        chain_bound: linearized_regret(rounds, &best_k) + cefp_total,
        cefp_residual_total: cefp_total,
        gd_bound: d * d / (2.0 * learner.eta) + learner.eta * total_u,
    })
}

/// Per-round trace with cumulative regrets against the identity and against `best_k`.
pub fn trace_rows(learner: &Learner, best_k: &Matrix) -> Result<Vec<RegretTraceRow>> {
    let map = &learner.map;
    let id = linalg::flatten(map.identity_k());
    let mut out = Vec::new();
    let (mut vs_id, mut vs_best) = (0.0, 0.0);
    for r in learner.rounds() {
        vs_id += r.u_matrix.dot(&(&id - &r.k));
        vs_best += phi_regret(std::slice::from_ref(r), map, best_k)?;
        out.push(RegretTraceRow {
            round: r.round,
            utility: r.expected_utility,
            regret_vs_identity: vs_id,
            regret_vs_best_k: vs_best,
            cefp_residual: r.cefp_residual,
            shell_cuts: r.shell_cuts,
        });
    }
    Ok(out)
}

/// Utility streams for standalone regret runs.
#[derive(Clone, Debug)]
pub enum Adversary {
    Constant(ConcaveUtility),
    /// +<c, x> on odd rounds, -<c, x> on even rounds.
    Alternating(Vector),
    /// Cycles through the given utilities.
    Sequence(Vec<ConcaveUtility>),
}

impl Adversary {
    pub fn utility(&self, round: usize) -> ConcaveUtility {
        match self {
            Adversary::Constant(u) => u.clone(),
            Adversary::Alternating(c) => {
                ConcaveUtility::linear(if round % 2 == 1 { c.clone() } else { -c.clone() })
            }
            Adversary::Sequence(us) => us[(round - 1) % us.len()].clone(),
        }
    }
}

pub struct RegretRun {
    pub learner: Learner,
    pub summary: RegretSummary,
    pub trace: Vec<RegretTraceRow>,
}

pub fn run_regret(body: ConvexBody, map: FeatureMap, adversary: &Adversary, options: RegretOptions) -> Result<RegretRun> {
    let horizon = options.horizon;
    let seed = options.probe_seed;
    let mut learner = Learner::new(body, map, options)?;
    for t in 1..=horizon {
        learner.observe(adversary.utility(t))?;
    }
    let summary = summarize(&learner, 64, seed)?;
    let best = linalg::unflatten(&Vector::from_vec(summary.best_k.clone()), learner.body.dim(), learner.map.out_dim());
    let trace = trace_rows(&learner, &best)?;
    Ok(RegretRun { learner, summary, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_ball_and_cut() {
        let mut s = ShellSet::new(2, 1.0);
        s.cuts.push(Halfspace::new(Vector::from_vec(vec![1.0, 0.0]), 0.5));
        let p = s.project(&Vector::from_vec(vec![2.0, 0.0]));
        assert!((p[0] - 0.5).abs() < 1e-9 && p[1].abs() < 1e-9);
    }

    #[test]
    fn identity_center_found_immediately() {
        let body = ConvexBody::unit_ball(2);
        let map = FeatureMap::affine(2, 1.0);
        let s = ShellSet::new(6, 5.0);
        let id = linalg::flatten(map.identity_k());
        match shell_ellipsoid(&s, &id, 0.0, &body, &map, 0.1, 1e-3).unwrap() {
            ShellOutcome::Found { k, .. } => assert_eq!(k, id),
            ShellOutcome::Polytope(_) => panic!("identity is endomorphic"),
        }
    }
}
