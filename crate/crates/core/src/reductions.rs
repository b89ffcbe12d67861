//! Games built from contractions, with verifiers for the inequalities that turn their equilibria
//! into approximate fixed points.
//!
//! Utilities are rescaled into [0, 1] using the body's diameter bound 2R: squared distances are
//! divided by (2R)^2 and distances by 2R. Verifiers report quantities in the rescaled units, so
//! every eps comparison uses the same normalization as the equilibrium solvers.

use crate::distributions::SupportDistribution;
use crate::error::{check_dim, Error, Result};
use crate::fixedpoint::PointMap;
use crate::games::{ConcaveGame, ProfileFn, QuadraticGame};
use crate::geometry::ConvexBody;
use crate::linalg::{Matrix, Vector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Two-player game u_1 = -|x - y|^2, u_2 = -|y - f(x)|^2 (rescaled) on a shared body.
pub struct NfceReduction {
    pub game: QuadraticGame,
    pub f: PointMap,
    /// (2R)^2: rescaled utility = 1 - |.|^2 / scale.
    pub scale: f64,
}

impl NfceReduction {
    /// Rescaled utility including the terms that do not depend on the player's own block (the
    /// quadratic game's own-block form omits them; deviation benefits agree).
    pub fn utility(&self, player: usize, x: &Vector, y: &Vector) -> Result<f64> {
        let d = match player {
            0 => (x - y).norm_squared(),
            1 => (y - self.f.eval(x)?).norm_squared(),
            _ => return Err(Error::Usage("the reduction has two players".into())),
        };
        Ok(1.0 - d / self.scale)
    }

    /// The lemma's decrease check in rescaled units, for Q 1-Lipschitz in the Euclidean norm.
    pub fn verify_lemma_decrease(&self, mu: &SupportDistribution, q: &dyn Fn(&Vector) -> f64, eps: f64) -> Result<LemmaReport> {
        lemma_report(mu, &self.f, q, eps, self.scale.sqrt())
    }
}

pub fn nfce_game_from_map(f: PointMap, body: &ConvexBody) -> Result<NfceReduction> {
    check_dim(body.dim(), f.dim(), "map vs body")?;
    let d = body.dim();
    let r = body.outer_radius();
    let scale = (2.0 * r).powi(2);
    let a = Matrix::identity(d, d) / scale;
    let a_fn: ProfileFn<Matrix> = Arc::new(move |_: &[Vector]| a.clone());
    let b1: ProfileFn<Vector> = Arc::new(move |p: &[Vector]| &p[1] * (2.0 / scale));
    let fb = f.clone();
    let b2: ProfileFn<Vector> = Arc::new(move |p: &[Vector]| {
        fb.eval(&p[0]).unwrap_or_else(|_| Vector::from_element(p[0].len(), f64::NAN)) * (2.0 / scale)
    });
    let game = QuadraticGame::new(vec![body.clone(), body.clone()], vec![a_fn.clone(), a_fn], vec![b1, b2])?;
    Ok(NfceReduction { game, f, scale })
}

/// Bit-exact key of a block.
fn key(v: &Vector) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// (probability, conditional mean of g over the cell) for each cell of equal `cell` blocks.
fn conditional_means(
    mu: &SupportDistribution,
    cell: impl Fn(&Vector) -> Vector,
    g: impl Fn(&Vector) -> Result<Vector>,
) -> Result<Vec<(f64, Vector, Vector)>> {
    let mut cells: BTreeMap<Vec<u64>, (f64, Vector, Vector)> = BTreeMap::new();
    for (p, z) in mu.iter() {
        let c = cell(z);
        let gz = g(z)?;
        let e = cells.entry(key(&c)).or_insert_with(|| (0.0, c.clone(), Vector::zeros(gz.len())));
        e.0 += p;
        e.2.axpy(p, &gz, 1.0);
    }
    Ok(cells
        .into_values()
        .filter(|(p, _, _)| *p > 0.0)
        .map(|(p, c, s)| {
            let m = s / p;
            (p, c, m)
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NfceResiduals {
    /// E_x |x - E[y | x]|^2.
    pub x_residual: f64,
    /// E_y |y - E[f(x) | y]|^2.
    pub y_residual: f64,
}

/// Both conditions of the NFCE characterization, computed exactly on a finite support over pairs
/// (x, y), divided by `scale^2`.
pub fn nfce_residuals(mu: &SupportDistribution, f: &PointMap, scale: f64) -> Result<NfceResiduals> {
    let d = f.dim();
    check_dim(2 * d, mu.dim(), "pair distribution")?;
    let xs = |z: &Vector| z.rows(0, d).into_owned();
    let ys = |z: &Vector| z.rows(d, d).into_owned();
    let by_x = conditional_means(mu, xs, |z| Ok(ys(z)))?;
    let by_y = conditional_means(mu, ys, |z| f.eval(&xs(z)))?;
    let x_residual = by_x.iter().map(|(p, x, m)| p * (x - m).norm_squared()).sum::<f64>();
    let y_residual = by_y.iter().map(|(p, y, m)| p * (y - m).norm_squared()).sum::<f64>();
    let s2 = scale * scale;
    Ok(NfceResiduals { x_residual: x_residual / s2, y_residual: y_residual / s2 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaReport {
    /// E_x[Q(x) - Q(f(x))] in rescaled units.
    pub decrease: f64,
    pub residuals: NfceResiduals,
    /// max of the two residuals.
    pub eps_hat: f64,
    /// 2 sqrt(eps_hat).
    pub bound: f64,
    pub holds: bool,
    /// Whether mu is an eps-NFCE of the reduction (eps_hat <= eps).
    pub nfce_within_eps: bool,
    /// decrease <= 2 sqrt(eps).
    pub holds_at_eps: bool,
}

/// E_x[Q(x) - Q(f(x))] <= 2 sqrt(eps_hat) on a distribution over pairs (x, y), with Q convex and
/// 1-Lipschitz. Assumes a body of diameter at most 1; see [`NfceReduction::verify_lemma_decrease`]
/// for rescaled bodies.
pub fn verify_lemma_decrease(mu: &SupportDistribution, f: &PointMap, q: &dyn Fn(&Vector) -> f64, eps: f64) -> Result<LemmaReport> {
    lemma_report(mu, f, q, eps, 1.0)
}

fn lemma_report(mu: &SupportDistribution, f: &PointMap, q: &dyn Fn(&Vector) -> f64, eps: f64, scale: f64) -> Result<LemmaReport> {
    let d = f.dim();
    let residuals = nfce_residuals(mu, f, scale)?;
    let mut decrease = 0.0;
    for (p, z) in mu.iter() {
        let x = z.rows(0, d).into_owned();
        decrease += p * (q(&x) - q(&f.eval(&x)?));
    }
    decrease /= scale;
    let eps_hat = residuals.x_residual.max(residuals.y_residual);
    let bound = 2.0 * eps_hat.sqrt();
    let tol = 1e-12 * (1.0 + decrease.abs());
    Ok(LemmaReport {
        decrease,
        eps_hat,
        bound,
        holds: decrease <= bound + tol,
        nfce_within_eps: eps_hat <= eps,
        holds_at_eps: decrease <= 2.0 * eps.sqrt() + tol,
        residuals,
    })
}

/// A norm with a subgradient oracle and its Lipschitz constant with respect to the Euclidean norm.
#[derive(Clone)]
pub struct NormOracle {
    value: Arc<dyn Fn(&Vector) -> f64 + Send + Sync>,
    subgradient: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
    lipschitz: f64,
}

impl NormOracle {
    pub fn new(
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        subgradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        NormOracle { value: Arc::new(value), subgradient: Arc::new(subgradient), lipschitz: 1.0 }
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn l2() -> Self {
        Self::new(|v| v.norm(), |v| {
            let n = v.norm();
            if n > 0.0 {
                v / n
            } else {
                Vector::zeros(v.len())
            }
        })
    }

    /// Sum-of-magnitudes norm on R^d (Lipschitz constant sqrt(d)).
    pub fn l1(d: usize) -> Self {
        Self::new(|v| v.lp_norm(1), |v| v.map(|x| if x == 0.0 { 0.0 } else { x.signum() }))
            .with_lipschitz((d as f64).sqrt())
    }

    /// Max-coordinate norm; the subgradient picks the first maximal coordinate.
    pub fn linf() -> Self {
        Self::new(|v| v.amax(), |v| {
            let mut g = Vector::zeros(v.len());
            if let Some((i, x)) = v.iter().enumerate().fold(None, |best: Option<(usize, f64)>, (i, x)| match best {
                Some((_, b)) if x.abs() <= b.abs() => best,
                _ => Some((i, *x)),
            }) {
                if x != 0.0 {
                    g[i] = x.signum();
                }
            }
            g
        })
    }

    pub fn value(&self, v: &Vector) -> f64 {
        (self.value)(v)
    }

    pub fn subgradient(&self, v: &Vector) -> Vector {
        (self.subgradient)(v)
    }
}

/// Two-player game u_1 = -|x - y|, u_2 = -|y - f(x)| (rescaled by 2R) whose deviation sets are
/// both the singleton {f}.
pub struct PhiEqReduction {
    pub game: ConcaveGame,
    pub f: PointMap,
    pub norm: NormOracle,
    /// 2R times the norm's Lipschitz constant: rescaled utility = 1 - |.| / scale.
    pub scale: f64,
}

pub fn phieq_game_from_contraction(f: PointMap, norm: NormOracle, body: &ConvexBody) -> Result<PhiEqReduction> {
    check_dim(body.dim(), f.dim(), "map vs body")?;
    if !(norm.lipschitz > 0.0 && norm.lipschitz.is_finite()) {
        return Err(Error::Usage("norm Lipschitz constant must be positive".into()));
    }
    let scale = 2.0 * body.outer_radius() * norm.lipschitz;
    let (n1, n2, n3, n4) = (norm.clone(), norm.clone(), norm.clone(), norm.clone());
    let (f1, f2) = (f.clone(), f.clone());
    let nan = |d: usize| Vector::from_element(d, f64::NAN);
    let utilities: Vec<ProfileFn<f64>> = vec![
        Arc::new(move |p: &[Vector]| 1.0 - n1.value(&(&p[0] - &p[1])) / scale),
        Arc::new(move |p: &[Vector]| match f1.eval(&p[0]) {
            Ok(fx) => 1.0 - n2.value(&(&p[1] - fx)) / scale,
            Err(_) => f64::NAN,
        }),
    ];
    let gradients: Vec<ProfileFn<Vector>> = vec![
        Arc::new(move |p: &[Vector]| -n3.subgradient(&(&p[0] - &p[1])) / scale),
        Arc::new(move |p: &[Vector]| match f2.eval(&p[0]) {
            Ok(fx) => -n4.subgradient(&(&p[1] - fx)) / scale,
            Err(_) => nan(p[1].len()),
        }),
    ];
    let game = ConcaveGame::new(vec![body.clone(), body.clone()], utilities, gradients)?;
    Ok(PhiEqReduction { game, f, norm, scale })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhiEqChain {
    /// E[u_1(f(x), y) - u_1(x, y)].
    pub benefit_x: f64,
    /// E[u_2(x, f(y)) - u_2(x, y)].
    pub benefit_y: f64,
    pub summed_benefit: f64,
    /// gamma E|x - y|.
    pub gamma_distance: f64,
    /// E|y - f(y)|.
    pub fixed_point_error: f64,
    /// max(summed benefit, benefit_y, 0).
    pub eps_hat: f64,
    /// 3 eps_hat / gamma.
    pub bound: f64,
    /// summed benefit >= gamma E|x - y|.
    pub first_step_holds: bool,
    /// E|y - f(y)| <= eps_hat (1 + 2 / gamma) <= 3 eps_hat / gamma.
    pub holds: bool,
}

impl PhiEqReduction {
    /// The contraction chain on mu over pairs (x, y), in rescaled units; f must be a
    /// (1 - gamma)-contraction in the norm with gamma in (0, 1].
    pub fn verify_chain(&self, mu: &SupportDistribution, gamma: f64) -> Result<PhiEqChain> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Usage("gamma must lie in (0, 1]".into()));
        }
        let d = self.f.dim();
        check_dim(2 * d, mu.dim(), "pair distribution")?;
        let s = self.scale;
        let nv = |v: Vector| self.norm.value(&v) / s;
        let (mut bx, mut by, mut dist, mut fp) = (0.0, 0.0, 0.0, 0.0);
        for (p, z) in mu.iter() {
            let x = z.rows(0, d).into_owned();
            let y = z.rows(d, d).into_owned();
            let fx = self.f.eval(&x)?;
            let fy = self.f.eval(&y)?;
            bx += p * (nv(&x - &y) - nv(&fx - &y));
            by += p * (nv(&y - &fx) - nv(&fy - &fx));
            dist += p * nv(&x - &y);
            fp += p * nv(&y - &fy);
        }
        let summed = bx + by;
        let eps_hat = summed.max(by).max(0.0);
        let bound = 3.0 * eps_hat / gamma;
        let tol = 1e-12;
        Ok(PhiEqChain {
            benefit_x: bx,
            benefit_y: by,
            summed_benefit: summed,
            gamma_distance: gamma * dist,
            fixed_point_error: fp,
            eps_hat,
            bound,
            first_step_holds: summed + tol >= gamma * dist,
            holds: fp <= eps_hat * (1.0 + 2.0 / gamma) + tol && fp <= bound + tol,
        })
    }
}
