use super::body::{ConvexBody, Separation};
use super::ellipsoid::Ellipsoid;
use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Clone, Debug)]
pub struct MaxResult {
    pub x: Vector,
    pub value: f64,
    /// Gradient of the objective at x.
    pub grad: Vector,
    /// max over the body of <grad, y - x>; at most the requested tolerance.
    pub first_order_gap: f64,
    pub iterations: usize,
}

/// Cut budget per unit of log-radius reduction, per dimension squared.
const BUDGET_FACTOR: f64 = 4.0;

/// Eigenvalue ratio at which the localizing ellipsoid is replaced by an enclosing ball.
const RESTART_RATIO: f64 = 1e-9;

/// Maximizes a concave differentiable `f` (returning value and gradient) over the body.
///
/// Central-cut ellipsoid localization; every interior center is followed by one line-searched
/// conditional-gradient step toward the body's support point, and the first candidate whose
/// first-order gap max_y <g, y - x> is at most `tol` is returned (so f(x) >= sup f - tol).
/// Bodies without an analytic linear maximizer skip the conditional-gradient step and stop on the
/// ellipsoid's own bound on the optimality gap.
/// When the shape matrix nears the conditioning floor it is replaced by the smallest ball
/// around the center enclosing it, which still contains every maximizer.
pub fn maximize_concave<F>(body: &ConvexBody, f: F, tol: f64) -> Result<MaxResult>
where
    F: FnMut(&Vector) -> (f64, Vector),
{
    maximize(body, f, tol, true)
}

/// Like [`maximize_concave`], but on budget exhaustion returns the best candidate found; its
/// `first_order_gap` then exceeds `tol` and its value is only a lower bound on the supremum.
pub fn maximize_concave_best_effort<F>(body: &ConvexBody, f: F, tol: f64) -> Result<MaxResult>
where
    F: FnMut(&Vector) -> (f64, Vector),
{
    maximize(body, f, tol, false)
}

fn maximize<F>(body: &ConvexBody, mut f: F, tol: f64, strict: bool) -> Result<MaxResult>
where
    F: FnMut(&Vector) -> (f64, Vector),
{
    if !(tol > 0.0) {
        return Err(Error::Usage("maximize_concave needs tol > 0".into()));
    }
    let d = body.dim();
    let init_radius = (body.center().norm() + body.outer_radius()) * (1.0 + 1e-9) + 1e-12;
    let mut ell = Ellipsoid::ball(body.center().clone(), init_radius);

    let (v0, g0) = f(body.center());
    check_eval(v0, &g0, d)?;
    let lip_scale = g0.norm().max(1.0);
    let span = (init_radius * lip_scale / tol).max(std::f64::consts::E).ln();
    let analytic = body.linear_argmax(&g0).is_some();
    // Without conditional-gradient steps the gap bound needs every semi-axis small.
    let factor = if analytic { BUDGET_FACTOR } else { 4.0 * BUDGET_FACTOR };
    let budget = (factor * (d * (d + 1)) as f64 * (span + 8.0)).ceil() as usize + 64;

    let mut best: Option<MaxResult> = None;
    let mut evals = 0usize;
    let mut first = true;
    for it in 0..budget {
        let c = ell.center().clone();
        match body.separate_unchecked(&c) {
            Separation::Outside(h) => cut_or_restart(&mut ell, &h.a)?,
            Separation::Inside => {
                let (val, g) = if first { (v0, g0.clone()) } else { f(&c) };
                first = false;
                evals += 1;
                check_eval(val, &g, d)?;
                if !analytic {
                    // Every maximizer lies in the ellipsoid, so f* - f(c) <= sqrt(g^T P g).
                    let gap = g.dot(&(ell.shape() * &g)).max(0.0).sqrt();
                    consider(&mut best, &c, val, &g, gap, it);
                    if gap <= tol {
                        return Ok(finish(best, it));
                    }
                    cut_or_restart(&mut ell, &(-&g))?;
                    continue;
                }
                let y = support_point(body, &g)?;
                let dir = &y - &c;
                let slope0 = g.dot(&dir).max(0.0);
                consider(&mut best, &c, val, &g, slope0, it);
                if slope0 <= tol {
                    return Ok(finish(best, it));
                }
                // Conditional-gradient step with a secant line search on the directional derivative.
                let (vy, gy) = f(&y);
                evals += 1;
                check_eval(vy, &gy, d)?;
                let slope1 = gy.dot(&dir);
                let gamma = if slope1 >= 0.0 { 1.0 } else { slope0 / (slope0 - slope1) };
                let (xp, vp, gp) = if gamma >= 1.0 {
                    (y, vy, gy)
                } else {
                    let xp = &c + &dir * gamma;
                    let (vp, gp) = f(&xp);
                    evals += 1;
                    check_eval(vp, &gp, d)?;
                    (xp, vp, gp)
                };
                if body.contains(&xp) {
                    let gap = first_order_gap(body, &xp, &gp)?;
                    consider(&mut best, &xp, vp, &gp, gap, it);
                    if gap <= tol {
                        return Ok(finish(best, it));
                    }
                }
                // Keep {y : g.(y - c) >= 0}.
                cut_or_restart(&mut ell, &(-&g))?;
            }
        }
    }
    if !strict {
        if let Some(b) = best {
            return Ok(b);
        }
    }
    let detail = best.map_or("no interior center found".to_string(), |b| {
        format!("best first-order gap {:e} at value {:e}", b.first_order_gap, b.value)
    });
    Err(Error::Numeric(format!(
        "maximize_concave: iteration budget {budget} exhausted ({evals} evaluations) before reaching tol {tol:e}; {detail}"
    )))
}

fn consider(best: &mut Option<MaxResult>, x: &Vector, value: f64, grad: &Vector, gap: f64, it: usize) {
    if best.as_ref().map_or(true, |b| gap < b.first_order_gap) {
        *best = Some(MaxResult { x: x.clone(), value, grad: grad.clone(), first_order_gap: gap, iterations: it + 1 });
    }
}

fn finish(best: Option<MaxResult>, it: usize) -> MaxResult {
    let mut out = best.expect("candidate recorded before returning");
    out.iterations = it + 1;
    out
}

fn cut_or_restart(ell: &mut Ellipsoid, a: &Vector) -> Result<()> {
    ell.central_cut(a)?;
    if ell.cuts() % ell.dim() == ell.dim() - 1 || ell.dim() == 1 {
        let ev = nalgebra::SymmetricEigen::new(ell.shape().clone()).eigenvalues;
        let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().copied().fold(0.0, f64::max);
        if lo < RESTART_RATIO * hi {
            *ell = Ellipsoid::ball(ell.center().clone(), hi.sqrt());
        }
    }
    Ok(())
}

fn support_point(body: &ConvexBody, g: &Vector) -> Result<Vector> {
    body.linear_argmax(g).ok_or_else(|| Error::Usage("support point of a custom body".into()))
}

fn check_eval(v: f64, g: &Vector, d: usize) -> Result<()> {
    if g.len() != d {
        return Err(Error::Usage("objective gradient dimension mismatch".into()));
    }
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("objective returned a non-finite value".into()));
    }
    Ok(())
}

/// max over the body of <g, y - x>.
pub fn first_order_gap(body: &ConvexBody, x: &Vector, g: &Vector) -> Result<f64> {
    if g.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let y = match body.linear_argmax(g) {
        Some(y) => y,
        None => body.support(g)?.1,
    };
    Ok(g.dot(&(y - x)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_over_ball() {
        let body = ConvexBody::unit_ball(3);
        let v = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let r = maximize_concave(&body, |x| (v.dot(x), v.clone()), 1e-6).unwrap();
        let target = &v / v.norm();
        assert!((r.value - v.norm()).abs() <= 1e-6);
        assert!((r.x - target).norm() < 1e-2);
    }

    #[test]
    fn linear_over_box() {
        let body = ConvexBody::cube(Vector::from_element(4, -1.0), Vector::from_element(4, 1.0)).unwrap();
        let v = Vector::from_vec(vec![0.3, -1.0, 2.0, -0.1]);
        let r = maximize_concave(&body, |x| (v.dot(x), v.clone()), 1e-7).unwrap();
        for i in 0..4 {
            assert!((r.x[i] - v[i].signum()).abs() < 1e-5);
        }
    }
}
