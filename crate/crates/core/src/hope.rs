//! Generic ellipsoid-against-hope loop over a compact dual set.
//!
//! The dual asks for z in Z with l_j(z) = <w_j, z> + c_j >= eps for every probe j. Each probe at
//! the current center returns a linear functional that is at most `center_bound` there, and the
//! ellipsoid keeps {z : l_j(z) >= l_j(center)}. If min over the simplex of
//! F(lambda) = sup_Z sum_j lambda_j l_j exceeded eps, some z* in Z has l_j(z*) > eps for all j, and
//! the shrunken copy (1 - t) z* + t B(anchor, r) with t = (eps - bound) / (eps + L) survives every
//! cut (L bounds |l_j| on Z). Once the ellipsoid is smaller than that ball a certificate exists;
//! it is extracted by [`crate::certificate::solve_certificate`] and verified before returning.

use crate::certificate::{solve_certificate, CertificateOptions, DualSet};
use crate::error::{Error, Result};
use crate::geometry::{log_ball_volume, Ellipsoid};
use crate::linalg::Vector;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// A hope constraint l(z) = <w, z> + offset together with whatever produced it.
#[derive(Clone, Debug)]
pub struct HopeCut<W> {
    pub w: Vector,
    pub offset: f64,
    pub witness: W,
}

pub enum Probe<W, E> {
    Cut(HopeCut<W>),
    /// A halfspace {a.z <= b} containing the dual target set and excluding the center. It
    /// shrinks the ellipsoid and enters certificates with a nonnegative multiplier.
    Conic { a: Vector, b: f64, witness: W },
    /// Stop with a payload (typically a non-endomorphism witness).
    Exit(E),
    /// A constant functional (zero normal) at most eps: a certificate by itself.
    Exact(HopeCut<W>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutCounts {
    pub feasibility: usize,
    pub objective: usize,
    pub endomorphism: usize,
    pub hope: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct HopeStats {
    pub iterations: usize,
    pub cuts: CutCounts,
    pub certificate_checks: usize,
    pub certificate_iterations: usize,
    /// F(lambda) of the returned certificate.
    pub certificate_value: f64,
    /// Whether the certificate was found before the volume threshold.
    pub early_exit: bool,
    pub wall_time_secs: f64,
}

pub enum HopeOutcome<W, E> {
    /// `lambda[j]` weighs `cuts[j]`; conic cuts (with `conic[j]`) store (w, offset) = (-a, b).
    Certificate { lambda: Vec<f64>, cuts: Vec<HopeCut<W>>, conic: Vec<bool>, value: f64 },
    Exit(E),
}

#[derive(Clone, Debug)]
pub struct HopeOptions {
    pub eps: f64,
    /// Upper bound on l_j(center) guaranteed by the probe; must be below eps.
    pub center_bound: f64,
    /// Try extracting a certificate after this many hope cuts, then geometrically more often.
    pub first_check: usize,
    pub check_growth: f64,
    /// Iteration budget of each intermediate certificate attempt.
    pub check_iterations: usize,
    /// Iteration budget of the attempt at the volume threshold.
    pub final_iterations: usize,
    /// Hard cap on ellipsoid iterations.
    pub max_iterations: usize,
    /// Radius of a ball inside the dual target set, when smaller than the set's own.
    pub inner_radius: Option<f64>,
}

impl HopeOptions {
    pub fn new(eps: f64, center_bound: f64, dual_dim: usize) -> Self {
        HopeOptions {
            eps,
            center_bound,
            first_check: (4 * dual_dim).max(16),
            check_growth: 1.5,
            check_iterations: 4_000,
            final_iterations: 200_000,
            max_iterations: 5_000_000,
            inner_radius: None,
        }
    }
}

/// Sup of |l| over the set.
fn functional_bound<Z: DualSet>(set: &Z, w: &Vector, offset: f64) -> f64 {
    let hi = set.support(w).0 + offset;
    let lo = -set.support(&(-w)).0 + offset;
    hi.abs().max(lo.abs())
}

/// Log-volume below which a certificate with F <= eps is guaranteed to exist.
pub fn certificate_threshold(dual_dim: usize, inner_radius: f64, eps: f64, center_bound: f64, bound: f64) -> f64 {
    let t = (eps - center_bound) / (eps + bound);
    log_ball_volume(dual_dim, t * inner_radius)
}

pub fn run_hope<Z, W, E>(
    set: &Z,
    options: &HopeOptions,
    mut probe: impl FnMut(&Vector) -> Result<Probe<W, E>>,
) -> Result<(HopeOutcome<W, E>, HopeStats)>
where
    Z: DualSet,
    W: Clone,
{
    if !(options.eps > 0.0) || !(options.center_bound < options.eps) {
        return Err(Error::Usage("hope run needs eps > 0 and center_bound < eps".into()));
    }
    let start = Instant::now();
    let p = set.dim();
    let mut ell = Ellipsoid::ball(set.anchor(), set.radius() * (1.0 + 1e-9));
    let mut stats = HopeStats::default();
    let mut cuts: Vec<HopeCut<W>> = Vec::new();
    let mut ws: Vec<Vector> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut conic: Vec<bool> = Vec::new();
    let mut hope_count = 0usize;
    let inner = options.inner_radius.unwrap_or_else(|| set.inner_radius());
    let mut bound = 0.0f64;
    let mut next_check = options.first_check as f64;
    let mut warm: Option<Vec<f64>> = None;

    let finish =
        |lambda: Vec<f64>, value: f64, cuts: Vec<HopeCut<W>>, conic: Vec<bool>, mut stats: HopeStats, early: bool| {
            stats.certificate_value = value;
            stats.early_exit = early;
            stats.wall_time_secs = start.elapsed().as_secs_f64();
            Ok((HopeOutcome::Certificate { lambda, cuts, conic, value }, stats))
        };

    loop {
        let threshold = certificate_threshold(p, inner, options.eps, options.center_bound, bound);
        let below = hope_count > 0 && ell.log_volume() < threshold;
        let scheduled = hope_count as f64 >= next_check;
        if below || scheduled {
            let budget = if below { options.final_iterations } else { options.check_iterations };
            let target = options.eps;
            let copts = CertificateOptions::new(target, budget);
            let sol = solve_certificate(set, &ws, &cs, &conic, &copts, warm.as_deref())?;
            stats.certificate_checks += 1;
            stats.certificate_iterations += sol.iterations;
            if sol.value <= target {
                return finish(sol.lambda, sol.value, cuts, conic, stats, !below);
            }
            if below {
                return Err(Error::Certificate(format!(
                    "volume threshold reached after {} hope cuts but best certificate value {:e} exceeds eps {:e}",
                    hope_count,
                    sol.value,
                    options.eps
                )));
            }
            warm = Some(sol.lambda);
            next_check *= options.check_growth;
        }
        if stats.iterations >= options.max_iterations {
            return Err(Error::Resource(format!("hope run exceeded {} iterations", options.max_iterations)));
        }
        stats.iterations += 1;
        let c = ell.center().clone();
        let normal = if let Some((a, _)) = set.separate(&c) {
            stats.cuts.feasibility += 1;
            a
        } else {
            match probe(&c)? {
                Probe::Exit(e) => {
                    stats.wall_time_secs = start.elapsed().as_secs_f64();
                    return Ok((HopeOutcome::Exit(e), stats));
                }
                Probe::Exact(cut) => {
                    if cut.w.iter().any(|x| *x != 0.0) || !(cut.offset <= options.eps) {
                        return Err(Error::Contract("exact certificate must be a constant at most eps".into()));
                    }
                    let value = cut.offset;
                    return finish(vec![1.0], value, vec![cut], vec![false], stats, true);
                }
                Probe::Conic { a, b, witness } => {
                    let ac = a.dot(&c);
                    let tol = 1e-9 * (1.0 + b.abs() + a.norm() * c.norm());
                    if ac < b - tol || a.iter().all(|x| *x == 0.0) {
                        return Err(Error::Contract(format!("conic cut a.c = {ac:e} does not exclude the center (b = {b:e})")));
                    }
                    stats.cuts.endomorphism += 1;
                    ws.push(-&a);
                    cs.push(b);
                    conic.push(true);
                    cuts.push(HopeCut { w: -&a, offset: b, witness });
                    a
                }
                Probe::Cut(hc) => {
                    let val = hc.w.dot(&c) + hc.offset;
                    let tol = 1e-9 * (1.0 + hc.w.norm() * c.norm() + hc.offset.abs());
                    if val > options.center_bound + tol {
                        return Err(Error::Contract(format!(
                            "hope cut value {val:e} at the center exceeds the promised bound {:e}",
                            options.center_bound
                        )));
                    }
                    if hc.w.iter().all(|x| *x == 0.0) {
                        return Err(Error::Contract("hope cut with zero normal".into()));
                    }
                    bound = bound.max(functional_bound(set, &hc.w, hc.offset));
                    stats.cuts.hope += 1;
                    hope_count += 1;
                    ws.push(hc.w.clone());
                    cs.push(hc.offset);
                    conic.push(false);
                    let a = -&hc.w;
                    cuts.push(hc);
                    a
                }
            }
        };
        if let Err(e) = ell.central_cut(&normal) {
            // The ellipsoid can no longer be trusted; the recorded cuts may still certify.
            if hope_count == 0 {
                return Err(e);
            }
            let copts = CertificateOptions::new(options.eps, options.final_iterations);
            let sol = solve_certificate(set, &ws, &cs, &conic, &copts, warm.as_deref())?;
            stats.certificate_checks += 1;
            stats.certificate_iterations += sol.iterations;
            if sol.value <= options.eps {
                return finish(sol.lambda, sol.value, cuts, conic, stats, true);
            }
            return Err(Error::Numeric(format!("{e}; best certificate value {:e} exceeds eps {:e}", sol.value, options.eps)));
        }
    }
}
