//! Phi_m-equilibria: ellipsoid against hope for quadratic games, and the regret-based FPTAS for
//! general concave games.
//!
//! The dual searches stacked transforms K = (K_1, ..., K_n), each flattened row-major, inside a
//! Frobenius ball of radius D. At every center each player's transform is semi-separated at
//! precision eps / n, so the product of the returned distributions gains at most eps / 2 in total.

use crate::certificate::DualBall;
use crate::distributions::{mix, product, SupportDistribution};
use crate::error::{check_dim, Error, Result};
use crate::games::{transform_benefit, ConcaveGame};
use crate::geometry::{CutKind, CutRecord, Witness};
use crate::hope::{run_hope, HopeCut, HopeOptions, HopeOutcome, HopeStats, Probe};
use crate::linalg::{self, Vector};
use crate::phi::{default_d, endomorphism_cut, semi_separate, FeatureMap, LinearTransform, SemiSeparation, SemiSeparationMode};
use crate::regret::{ConcaveUtility, Learner, RegretOptions};
use crate::sampling::SeededRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::convert::Infallible;
use std::sync::Arc;

#[derive(Clone, Debug)]
pub enum EahWitness {
    /// Product distribution of the semi-separation outputs, with the linearization of the summed
    /// benefit at the center: benefit(K) <= <grad, K> + offset.
    Hope { dist: SupportDistribution, grad: Vector, offset: f64 },
    Endomorphism { player: usize, point: Vector },
}

#[derive(Clone, Debug)]
pub struct EahTrace {
    pub dual_dim: usize,
    /// Stacked Frobenius radius of the searched K-ball.
    pub d_radius: f64,
    /// Hope cuts carry `Witness::Hope`; endomorphism cuts carry the violating point.
    pub cuts: Vec<CutRecord>,
    /// Player of each endomorphism cut (None for hope cuts).
    pub cut_players: Vec<Option<usize>>,
    /// Simplex weights on hope cuts, nonnegative multipliers on endomorphism cuts.
    pub final_weights: Vec<f64>,
    /// h at the final weights.
    pub certificate_value: f64,
    pub stats: HopeStats,
}

#[derive(Clone, Debug)]
pub struct EahOptions {
    /// Stacked D; defaults to the root of the sum of per-player [`default_d`] squares.
    pub d_radius: Option<f64>,
    /// Seed for the probe points behind the default D.
    pub probe_seed: u64,
    pub max_iterations: usize,
}

impl Default for EahOptions {
    fn default() -> Self {
        EahOptions { d_radius: None, probe_seed: 0, max_iterations: 200_000 }
    }
}

pub struct EahResult {
    pub mu: SupportDistribution,
    pub trace: EahTrace,
}

/// eps-approximate Phi_m-equilibrium of a quadratic game (summed-benefit form).
pub fn eah_quadratic(game: &ConcaveGame, maps: &[FeatureMap], eps: f64) -> Result<SupportDistribution> {
    Ok(eah_run(game, maps, eps, &EahOptions::default())?.mu)
}

pub fn eah_run(game: &ConcaveGame, maps: &[FeatureMap], eps: f64, options: &EahOptions) -> Result<EahResult> {
    if !game.is_quadratic() {
        return Err(Error::Usage("ellipsoid against hope needs a quadratic game".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Usage("eps must be positive".into()));
    }
    let n = game.players();
    if maps.len() != n {
        return Err(Error::Usage("one feature map per player".into()));
    }
    let shapes: Vec<(usize, usize)> = maps.iter().map(|m| (m.in_dim(), m.out_dim())).collect();
    for (i, (d, _)) in shapes.iter().enumerate() {
        if *d != game.body(i).dim() {
            return Err(Error::Usage(format!("feature map {i} does not match the strategy set")));
        }
    }
    let offsets: Vec<usize> = shapes
        .iter()
        .scan(0, |acc, (d, k)| {
            let o = *acc;
            *acc += d * k;
            Some(o)
        })
        .collect();
    let p: usize = shapes.iter().map(|(d, k)| d * k).sum();
    let d_radius = match options.d_radius {
        Some(d) => d,
        None => {
            let mut rng = SeededRng::seed_from_u64(options.probe_seed);
            let mut s = 0.0;
            for (i, m) in maps.iter().enumerate() {
                s += default_d(game.body(i), m, &mut rng)?.powi(2);
            }
            s.sqrt()
        }
    };
    let inner = (0..n)
        .map(|i| game.body(i).inner_radius() / maps[i].norm_bound())
        .fold(f64::INFINITY, f64::min);
    let set = DualBall { dim: p, radius: d_radius };
    let mut hope = HopeOptions::new(eps, eps / 2.0, p);
    hope.inner_radius = Some(inner);
    hope.max_iterations = options.max_iterations;

    let blocks = |z: &Vector| -> Vec<LinearTransform> {
        (0..n)
            .map(|i| {
                let (d, k) = shapes[i];
                let v = z.rows(offsets[i], d * k).into_owned();
                LinearTransform { k: linalg::unflatten(&v, d, k), map: maps[i].clone() }
            })
            .collect()
    };

    let (outcome, stats) = run_hope::<_, EahWitness, Infallible>(&set, &hope, |z| {
        let ts = blocks(z);
        let mut mus = Vec::with_capacity(n);
        for (i, t) in ts.iter().enumerate() {
            match semi_separate(game, i, t, eps / n as f64, SemiSeparationMode::Quadratic)? {
                SemiSeparation::Safe(mu) => mus.push(mu),
                SemiSeparation::NotEndomorphism(x) => {
                    let h = endomorphism_cut(game.body(i), t, &x)?;
                    let mut a = Vector::zeros(p);
                    a.rows_mut(offsets[i], h.a.len()).copy_from(&h.a);
                    return Ok(Probe::Conic { a, b: h.b, witness: EahWitness::Endomorphism { player: i, point: x } });
                }
            }
        }
        let joint = product(&mus)?;
        let mut total = 0.0;
        let mut grad = Vector::zeros(p);
        for (i, t) in ts.iter().enumerate() {
            let (v, g) = transform_benefit(game, i, &joint, &t.k, &t.map)?;
            total += v;
            grad.rows_mut(offsets[i], g.len()).copy_from(&linalg::flatten(&g));
        }
        let offset = total - grad.dot(z);
        let witness = EahWitness::Hope { dist: joint, grad: grad.clone(), offset };
        if grad.iter().all(|g| *g == 0.0) {
            return Ok(Probe::Exact(HopeCut { w: grad, offset: total, witness }));
        }
        Ok(Probe::Cut(HopeCut { w: grad, offset, witness }))
    })?;

    let (lambda, cuts, conic, value) = match outcome {
        HopeOutcome::Certificate { lambda, cuts, conic, value } => (lambda, cuts, conic, value),
        HopeOutcome::Exit(never) => match never {},
    };
    let mut weights = Vec::new();
    let mut dists = Vec::new();
    for ((l, c), k) in lambda.iter().zip(&cuts).zip(&conic) {
        if !*k && *l > 0.0 {
            if let EahWitness::Hope { dist, .. } = &c.witness {
                weights.push(*l);
                dists.push(dist.clone());
            }
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let mu = mix(&weights, &dists)?;

    let recheck = certificate_h(d_radius, &cuts, &lambda);
    if recheck > eps * (1.0 + 1e-9) {
        return Err(Error::Certificate(format!("certificate value {recheck:e} exceeds eps {eps:e}")));
    }
    let mut records = Vec::with_capacity(cuts.len());
    let mut cut_players = Vec::with_capacity(cuts.len());
    for c in cuts {
        match c.witness {
            EahWitness::Hope { dist, grad, offset } => {
                records.push(CutRecord::new(CutKind::Hope, -&c.w, c.offset - eps, Witness::Hope { dist, grad, offset })?);
                cut_players.push(None);
            }
            EahWitness::Endomorphism { player, point } => {
                // Stored as (w, offset) = (-a, b).
                records.push(CutRecord::new(CutKind::Endomorphism, -&c.w, c.offset, Witness::Point(point))?);
                cut_players.push(Some(player));
            }
        }
    }
    Ok(EahResult {
        mu,
        trace: EahTrace {
            dual_dim: p,
            d_radius,
            cuts: records,
            cut_players,
            final_weights: lambda,
            certificate_value: value.max(recheck),
            stats,
        },
    })
}

/// h = D |sum_j lambda_j w_j| + sum_j lambda_j c_j over hope and conic cuts alike.
fn certificate_h(d: f64, cuts: &[HopeCut<EahWitness>], lambda: &[f64]) -> f64 {
    let p = cuts.first().map_or(0, |c| c.w.len());
    let mut agg = Vector::zeros(p);
    let mut lin = 0.0;
    for (c, l) in cuts.iter().zip(lambda) {
        agg.axpy(*l, &c.w, 1.0);
        lin += l * c.offset;
    }
    d * agg.norm() + lin
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FptasOptions {
    /// T = ceil(poly_factor / eps^2); defaults to D^2 k with D the stacked shell radius and k the
    /// stacked transform dimension.
    pub poly_factor: Option<f64>,
    /// Overrides T outright.
    pub rounds: Option<usize>,
    /// Per-round fixed-point and projection precision; defaults to the regret module's choice.
    pub learner_eps: Option<f64>,
    /// Bound on own-utility gradients.
    pub grad_bound: f64,
    pub probe_seed: u64,
}

impl Default for FptasOptions {
    fn default() -> Self {
        FptasOptions { poly_factor: None, rounds: None, learner_eps: None, grad_bound: 1.0, probe_seed: 0 }
    }
}

pub struct FptasResult {
    pub mu: SupportDistribution,
    pub rounds: usize,
    pub learners: Vec<Learner>,
}

/// eps-approximate Phi_m-equilibrium of a concave game by self-play of Phi_m-regret learners.
pub fn fptas_equilibrium(game: &ConcaveGame, maps: &[FeatureMap], eps: f64) -> Result<SupportDistribution> {
    Ok(fptas_run(game, maps, eps, &FptasOptions::default())?.mu)
}

pub fn fptas_run(game: &ConcaveGame, maps: &[FeatureMap], eps: f64, options: &FptasOptions) -> Result<FptasResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Usage("fptas needs eps in (0, 1]".into()));
    }
    let n = game.players();
    if maps.len() != n {
        return Err(Error::Usage("one feature map per player".into()));
    }
    let mut rng = SeededRng::seed_from_u64(options.probe_seed);
    let mut radii = Vec::with_capacity(n);
    for (i, m) in maps.iter().enumerate() {
        check_dim(game.body(i).dim(), m.in_dim(), "feature map vs strategy set")?;
        radii.push(default_d(game.body(i), m, &mut rng)?);
    }
    let d2: f64 = radii.iter().map(|r| r * r).sum();
    let k: usize = maps.iter().map(|m| m.in_dim() * m.out_dim()).sum();
    let rounds = match options.rounds {
        Some(t) => t.max(1),
        None => (options.poly_factor.unwrap_or(d2 * k as f64) / (eps * eps)).ceil() as usize,
    };
    let mut learners = Vec::with_capacity(n);
    for (i, m) in maps.iter().enumerate() {
        let mut o = RegretOptions::new(rounds);
        if let Some(e) = options.learner_eps {
            o.eps = e;
            o.cefp_eps = e.min(1.0);
        }
        o.d_radius = Some(radii[i]);
        o.grad_bound = options.grad_bound;
        o.probe_seed = options.probe_seed;
        learners.push(Learner::new(game.body(i).clone(), m.clone(), o)?);
    }
    let mut joints = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mus: Vec<SupportDistribution> = learners.iter().map(|l| l.distribution().clone()).collect();
        joints.push(product(&mus)?);
        for (i, learner) in learners.iter_mut().enumerate() {
            learner.observe(expected_utility(game, i, &mus)?)?;
        }
    }
    let w = vec![1.0 / rounds as f64; rounds];
    let mu = mix(&w, &joints)?;
    Ok(FptasResult { mu, rounds, learners })
}

/// x_i -> E u_i(x_i, x_-i) with the opponents drawn independently from their distributions.
fn expected_utility(game: &ConcaveGame, i: usize, mus: &[SupportDistribution]) -> Result<ConcaveUtility> {
    let others: Vec<SupportDistribution> =
        mus.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m.clone()).collect();
    let dims = game.dims();
    let profiles: Vec<(f64, Vec<Vector>)> = if others.is_empty() {
        vec![(1.0, vec![Vector::zeros(dims[i])])]
    } else {
        let joint = product(&others)?;
        joint
            .iter()
            .map(|(p, x)| {
                let mut blocks = Vec::with_capacity(dims.len());
                let mut off = 0;
                for (j, d) in dims.iter().enumerate() {
                    if j == i {
                        blocks.push(Vector::zeros(*d));
                    } else {
                        blocks.push(x.rows(off, *d).into_owned());
                        off += d;
                    }
                }
                (p, blocks)
            })
            .collect()
    };
    let profiles = Arc::new(profiles);
    let (g1, g2) = (game.clone(), game.clone());
    let p2 = profiles.clone();
    Ok(ConcaveUtility::new(
        move |x: &Vector| {
            profiles
                .iter()
                .map(|(p, b)| {
                    let mut b = b.clone();
                    b[i] = x.clone();
                    p * g1.utility(i, &b)
                })
                .sum()
        },
        move |x: &Vector| {
            let mut acc = Vector::zeros(x.len());
            for (p, b) in p2.iter() {
                let mut b = b.clone();
                b[i] = x.clone();
                acc.axpy(*p, &g2.own_gradient(i, &b), 1.0);
            }
            acc
        },
    ))
}
