//! Concave games with oracle utilities, the quadratic subclass, and deviation benefits under
//! finite-support correlated distributions.
//!
//! A profile is a list of per-player blocks; distributions over profiles store the concatenation
//! x = (x_1, ..., x_n).

use crate::distributions::SupportDistribution;
use crate::error::{check_dim, Error, Result};
use crate::fixedpoint::PointMap;
use crate::geometry::{maximize_concave_best_effort, BodySpec, ConvexBody};
use crate::linalg::{self, Matrix, Vector};
use crate::phi::{endomorphic_k_body, FeatureMap};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Constant-player assumption.
pub const MAX_PLAYERS: usize = 4;

pub type ProfileFn<T> = Arc<dyn Fn(&[Vector]) -> T + Send + Sync>;

/// n-player game, each utility concave in the player's own block.
#[derive(Clone)]
pub struct ConcaveGame {
    bodies: Vec<ConvexBody>,
    offsets: Vec<usize>,
    utilities: Vec<ProfileFn<f64>>,
    gradients: Vec<ProfileFn<Vector>>,
    quadratic: Option<QuadraticGame>,
}

impl std::fmt::Debug for ConcaveGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConcaveGame").field("dims", &self.dims()).field("quadratic", &self.quadratic.is_some()).finish()
    }
}

fn check_players(n: usize) -> Result<()> {
    if n == 0 || n > MAX_PLAYERS {
        return Err(Error::Usage(format!("games need 1..={MAX_PLAYERS} players, got {n}")));
    }
    Ok(())
}

fn offsets_of(bodies: &[ConvexBody]) -> Vec<usize> {
    let mut out = vec![0];
    for b in bodies {
        out.push(out.last().expect("nonempty") + b.dim());
    }
    out
}

impl ConcaveGame {
    /// `gradients[i]` returns the gradient of `utilities[i]` in block i; both must accept own blocks
    /// slightly outside X_i.
    pub fn new(bodies: Vec<ConvexBody>, utilities: Vec<ProfileFn<f64>>, gradients: Vec<ProfileFn<Vector>>) -> Result<Self> {
        check_players(bodies.len())?;
        if utilities.len() != bodies.len() || gradients.len() != bodies.len() {
            return Err(Error::Usage("one utility and one gradient oracle per player".into()));
        }
        let offsets = offsets_of(&bodies);
        Ok(ConcaveGame { bodies, offsets, utilities, gradients, quadratic: None })
    }

    pub fn players(&self) -> usize {
        self.bodies.len()
    }

    pub fn body(&self, i: usize) -> &ConvexBody {
        &self.bodies[i]
    }

    pub fn bodies(&self) -> &[ConvexBody] {
        &self.bodies
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bodies.iter().map(|b| b.dim()).collect()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().expect("nonempty")
    }

    pub fn is_quadratic(&self) -> bool {
        self.quadratic.is_some()
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticGame> {
        self.quadratic.as_ref()
    }

    pub fn split(&self, x: &Vector) -> Result<Vec<Vector>> {
        check_dim(self.total_dim(), x.len(), "profile")?;
        Ok((0..self.players()).map(|i| x.rows(self.offsets[i], self.bodies[i].dim()).into_owned()).collect())
    }

    pub fn join(&self, blocks: &[Vector]) -> Result<Vector> {
        check_dim(self.players(), blocks.len(), "profile blocks")?;
        for (b, body) in blocks.iter().zip(&self.bodies) {
            check_dim(body.dim(), b.len(), "profile block")?;
        }
        let refs: Vec<&Vector> = blocks.iter().collect();
        Ok(linalg::concat(&refs))
    }

    pub fn utility(&self, i: usize, profile: &[Vector]) -> f64 {
        (self.utilities[i])(profile)
    }

    pub fn own_gradient(&self, i: usize, profile: &[Vector]) -> Vector {
        (self.gradients[i])(profile)
    }
}

/// Player i's utility b_i(x_-i)^T x_i - x_i^T A_i(x_-i) x_i. The oracles receive the full profile
/// and must ignore block i.
#[derive(Clone)]
pub struct QuadraticGame {
    bodies: Vec<ConvexBody>,
    a: Vec<ProfileFn<Matrix>>,
    b: Vec<ProfileFn<Vector>>,
}

impl QuadraticGame {
    pub fn new(bodies: Vec<ConvexBody>, a: Vec<ProfileFn<Matrix>>, b: Vec<ProfileFn<Vector>>) -> Result<Self> {
        check_players(bodies.len())?;
        if a.len() != bodies.len() || b.len() != bodies.len() {
            return Err(Error::Usage("one A and one b oracle per player".into()));
        }
        Ok(QuadraticGame { bodies, a, b })
    }

    /// Constant A_i and b_i(x_-i) = c_i + sum_j B_ij x_j.
    pub fn polymatrix(
        bodies: Vec<ConvexBody>,
        own: Vec<Matrix>,
        linear: Vec<Vector>,
        cross: Vec<Vec<Option<Matrix>>>,
    ) -> Result<Self> {
        let n = bodies.len();
        check_players(n)?;
        if own.len() != n || linear.len() != n || cross.len() != n || cross.iter().any(|r| r.len() != n) {
            return Err(Error::Usage("polymatrix coefficient lists must have one entry per player".into()));
        }
        for i in 0..n {
            let di = bodies[i].dim();
            check_dim(di, linear[i].len(), "linear coefficient")?;
            if own[i].shape() != (di, di) {
                return Err(Error::Usage("own quadratic coefficient has the wrong shape".into()));
            }
            if linalg::sym_eigenvalues(&own[i])[0] < -1e-12 || (&own[i] - own[i].transpose()).norm() > 1e-12 {
                return Err(Error::Usage(format!("A_{i} must be symmetric positive semidefinite")));
            }
            for j in 0..n {
                if let Some(m) = &cross[i][j] {
                    if i == j || m.shape() != (di, bodies[j].dim()) {
                        return Err(Error::Usage(format!("cross coefficient ({i}, {j}) is invalid")));
                    }
                }
            }
        }
        let a: Vec<ProfileFn<Matrix>> = own
            .into_iter()
            .map(|m| {
                let f: ProfileFn<Matrix> = Arc::new(move |_: &[Vector]| m.clone());
                f
            })
            .collect();
        let b: Vec<ProfileFn<Vector>> = linear
            .into_iter()
            .zip(cross)
            .map(|(c, row)| {
                let f: ProfileFn<Vector> = Arc::new(move |x: &[Vector]| {
                    let mut v = c.clone();
                    for (j, m) in row.iter().enumerate() {
                        if let Some(m) = m {
                            v += m * &x[j];
                        }
                    }
                    v
                });
                f
            })
            .collect();
        Self::new(bodies, a, b)
    }

    pub fn from_spec(spec: &QuadraticGameSpec) -> Result<Self> {
        let n = spec.players.len();
        check_players(n)?;
        let bodies = spec.players.iter().map(|p| ConvexBody::from_spec(&p.body)).collect::<Result<Vec<_>>>()?;
        let mut own = Vec::new();
        let mut linear = Vec::new();
        let mut cross = vec![vec![None; n]; n];
        for (i, p) in spec.players.iter().enumerate() {
            let d = bodies[i].dim();
            own.push(match &p.quadratic {
                Some(rows) => matrix_from_rows(rows, d, d)?,
                None => Matrix::zeros(d, d),
            });
            linear.push(match &p.linear {
                Some(v) => Vector::from_vec(v.clone()),
                None => Vector::zeros(d),
            });
            for c in &p.cross {
                if c.player >= n {
                    return Err(Error::Usage(format!("cross term references player {}", c.player)));
                }
                cross[i][c.player] = Some(matrix_from_rows(&c.matrix, d, bodies[c.player].dim())?);
            }
        }
        Self::polymatrix(bodies, own, linear, cross)
    }

    pub fn players(&self) -> usize {
        self.bodies.len()
    }

    pub fn body(&self, i: usize) -> &ConvexBody {
        &self.bodies[i]
    }

    pub fn a(&self, i: usize, profile: &[Vector]) -> Matrix {
        (self.a[i])(profile)
    }

    pub fn b(&self, i: usize, profile: &[Vector]) -> Vector {
        (self.b[i])(profile)
    }

    pub fn utility(&self, i: usize, profile: &[Vector]) -> f64 {
        let x = &profile[i];
        self.b(i, profile).dot(x) - x.dot(&(self.a(i, profile) * x))
    }

    /// The same game through the generic oracle interface.
    pub fn to_concave(&self) -> ConcaveGame {
        let n = self.players();
        let mut utilities: Vec<ProfileFn<f64>> = Vec::new();
        let mut gradients: Vec<ProfileFn<Vector>> = Vec::new();
        for i in 0..n {
            let (a, b) = (self.a[i].clone(), self.b[i].clone());
            utilities.push(Arc::new(move |x: &[Vector]| {
                let xi = &x[i];
                b(x).dot(xi) - xi.dot(&(a(x) * xi))
            }));
            let (a, b) = (self.a[i].clone(), self.b[i].clone());
            gradients.push(Arc::new(move |x: &[Vector]| b(x) - a(x) * &x[i] * 2.0));
        }
        ConcaveGame {
            offsets: offsets_of(&self.bodies),
            bodies: self.bodies.clone(),
            utilities,
            gradients,
            quadratic: Some(self.clone()),
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], r: usize, c: usize) -> Result<Matrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Usage(format!("expected a {r} x {c} matrix")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Config form of a polymatrix quadratic game.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticGameSpec {
    pub players: Vec<QuadraticPlayerSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticPlayerSpec {
    pub body: BodySpec,
    /// A_i (PSD); zero when absent.
    #[serde(default)]
    pub quadratic: Option<Vec<Vec<f64>>>,
    /// Constant part of b_i.
    #[serde(default)]
    pub linear: Option<Vec<f64>>,
    /// Terms B_ij x_j of b_i.
    #[serde(default)]
    pub cross: Vec<CrossTerm>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossTerm {
    pub player: usize,
    pub matrix: Vec<Vec<f64>>,
}

/// E_mu[u_i(dev(x_i), x_-i) - u_i(x)], plus the first atom whose deviation leaves X_i.
#[derive(Clone, Debug)]
pub struct Benefit {
    pub value: f64,
    pub exit: Option<Vector>,
}

pub fn deviation_benefit(game: &ConcaveGame, i: usize, mu: &SupportDistribution, dev: &PointMap) -> Result<Benefit> {
    if i >= game.players() {
        return Err(Error::Usage(format!("player {i} out of range")));
    }
    check_dim(game.total_dim(), mu.dim(), "distribution vs game")?;
    check_dim(game.body(i).dim(), dev.dim(), "deviation vs strategy set")?;
    let mut value = 0.0;
    let mut exit = None;
    for (p, x) in mu.iter() {
        let mut blocks = game.split(x)?;
        let base = game.utility(i, &blocks);
        let y = dev.eval(&blocks[i])?;
        if exit.is_none() && !game.body(i).contains(&y) {
            exit = Some(blocks[i].clone());
        }
        blocks[i] = y;
        value += p * (game.utility(i, &blocks) - base);
    }
    Ok(Benefit { value, exit })
}

/// sum_j w_j grad_i u_i(K m(x_ij), x_-ij) m(x_ij)^T.
pub fn expected_feature_gradient(
    game: &ConcaveGame,
    i: usize,
    mu: &SupportDistribution,
    k: &Matrix,
    m: &FeatureMap,
) -> Result<Matrix> {
    Ok(transform_benefit(game, i, mu, k, m)?.1)
}

/// Benefit of x_i -> K m(x_i) and its gradient in K (a d_i x k' matrix).
pub fn transform_benefit(
    game: &ConcaveGame,
    i: usize,
    mu: &SupportDistribution,
    k: &Matrix,
    m: &FeatureMap,
) -> Result<(f64, Matrix)> {
    check_dim(game.total_dim(), mu.dim(), "distribution vs game")?;
    if k.shape() != (game.body(i).dim(), m.out_dim()) {
        return Err(Error::Usage("transform matrix shape does not match player and feature map".into()));
    }
    let mut value = 0.0;
    let mut grad = Matrix::zeros(k.nrows(), k.ncols());
    for (p, x) in mu.iter() {
        let mut blocks = game.split(x)?;
        let base = game.utility(i, &blocks);
        let feat = m.eval(&blocks[i])?;
        blocks[i] = k * &feat;
        let u = game.utility(i, &blocks);
        let g = game.own_gradient(i, &blocks);
        if !u.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "utility or gradient undefined at transformed point {:?}",
                blocks[i].as_slice()
            )));
        }
        value += p * (u - base);
        grad.ger(p, &g, &feat, 1.0);
    }
    Ok((value, grad))
}

/// Per-player outcome of an equilibrium audit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlayerAudit {
    /// Benefit of the ellipsoid-maximized endomorphic K.
    pub optimized_benefit: f64,
    pub optimized_k: Vec<f64>,
    /// Optimality gap bound of the maximization (above the tolerance when its budget ran out).
    pub optimized_gap: f64,
    /// Largest benefit among random endomorphic samples.
    pub sampled_benefit: f64,
    pub sampled_k: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub players: Vec<PlayerAudit>,
    /// max over players of the best benefit found.
    pub max_benefit: f64,
    /// Sum over players of the best benefit found.
    pub summed_benefit: f64,
    pub eps: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Audits mu against every player's Phi_m deviations: an ellipsoid-maximized K per player plus
/// `audit_budget` random endomorphic K. Passes iff every benefit found is at most eps + tolerance.
pub fn verify_equilibrium<R: Rng + ?Sized>(
    game: &ConcaveGame,
    mu: &SupportDistribution,
    maps: &[FeatureMap],
    eps: f64,
    tolerance: f64,
    audit_budget: usize,
    rng: &mut R,
) -> Result<EquilibriumReport> {
    check_dim(game.players(), maps.len(), "feature maps per player")?;
    let mut players = Vec::new();
    for (i, m) in maps.iter().enumerate() {
        let body = game.body(i);
        let (rows, cols) = (body.dim(), m.out_dim());
        let d_radius = crate::phi::default_d(body, m, rng)?;
        let (kbody, features) = endomorphic_k_body(body, m, d_radius, &[], rng)?;
        let objective = |kv: &Vector| -> (f64, Vector) {
            let k = linalg::unflatten(kv, rows, cols);
            match transform_benefit(game, i, mu, &k, m) {
                Ok((v, g)) => (v, linalg::flatten(&g)),
                Err(_) => (f64::NAN, Vector::zeros(rows * cols)),
            }
        };
        let opt = maximize_concave_best_effort(&kbody, objective, (tolerance * 0.5).max(1e-9))?;
        let is_endo = |k: &Matrix| features.iter().all(|f| body.contains(&(k * f)));
        let id = m.identity_k().clone();
        let mut best_sample = (0.0, linalg::flatten(&id));
        for _ in 0..audit_budget {
            let k = random_endomorphic(body, m, &id, &is_endo, rng);
            let (v, _) = transform_benefit(game, i, mu, &k, m)?;
            if v > best_sample.0 {
                best_sample = (v, linalg::flatten(&k));
            }
        }
        players.push(PlayerAudit {
            optimized_benefit: opt.value,
            optimized_k: opt.x.as_slice().to_vec(),
            optimized_gap: opt.first_order_gap,
            sampled_benefit: best_sample.0,
            sampled_k: best_sample.1.as_slice().to_vec(),
        });
    }
    let best: Vec<f64> = players.iter().map(|p| p.optimized_benefit.max(p.sampled_benefit)).collect();
    let max_benefit = best.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let summed_benefit = best.iter().sum();
    Ok(EquilibriumReport { players, max_benefit, summed_benefit, eps, tolerance, pass: max_benefit <= eps + tolerance })
}

/// Convex combination of the identity, a constant map into the body, and a random perturbation
/// shrunk until the result is endomorphic on the probes.
fn random_endomorphic<R: Rng + ?Sized>(
    body: &ConvexBody,
    m: &FeatureMap,
    id: &Matrix,
    is_endo: &impl Fn(&Matrix) -> bool,
    rng: &mut R,
) -> Matrix {
    let y = body.sample(rng);
    let kc = m.constant_k(&y).unwrap_or_else(|| id.clone());
    let s: f64 = rng.random();
    let base = id * (1.0 - s) + kc * s;
    let mut pert = Matrix::from_fn(id.nrows(), id.ncols(), |_, _| crate::sampling::standard_normal(rng));
    pert *= body.outer_radius() / pert.norm().max(1e-300);
    for _ in 0..40 {
        let k = &base + &pert;
        if is_endo(&k) {
            return k;
        }
        pert *= 0.5;
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game() -> QuadraticGame {
        let b = ConvexBody::unit_ball(2);
        QuadraticGame::polymatrix(
            vec![b.clone(), b],
            vec![Matrix::identity(2, 2) * 0.5, Matrix::zeros(2, 2)],
            vec![Vector::from_vec(vec![0.1, 0.0]), Vector::from_vec(vec![0.0, -0.2])],
            vec![
                vec![None, Some(Matrix::identity(2, 2) * 0.3)],
                vec![Some(Matrix::from_row_slice(2, 2, &[0.0, 0.2, -0.2, 0.0])), None],
            ],
        )
        .unwrap()
    }

    #[test]
    fn views_agree() {
        let q = game();
        let g = q.to_concave();
        let x = vec![Vector::from_vec(vec![0.2, -0.1]), Vector::from_vec(vec![0.4, 0.3])];
        for i in 0..2 {
            assert_eq!(q.utility(i, &x), g.utility(i, &x));
        }
    }

    #[test]
    fn identity_deviation_gains_nothing() {
        let g = game().to_concave();
        let mu = SupportDistribution::point_mass(Vector::from_vec(vec![0.2, -0.1, 0.4, 0.3]));
        let b = deviation_benefit(&g, 0, &mu, &PointMap::identity(2)).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.exit.is_none());
    }
}
