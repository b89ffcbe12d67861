//! Random-sign embeddings of normal-form adversaries into a tree-form decision problem, and exact
//! swap-regret measurement against linear utilities.
//!
//! Pure strategies pick a row i in [k] and a sign vector in {-1/sqrt(n), +1/sqrt(n)}^n; as
//! vectors in R^{k x n} they have exactly one nonzero row and unit norm.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A pure strategy of the tree-form problem. `signs[j]` is true for +1/sqrt(n).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PureStrategy {
    pub row: usize,
    pub signs: Vec<bool>,
}

impl PureStrategy {
    pub fn n(&self) -> usize {
        self.signs.len()
    }

    /// <x, y> as realization vectors.
    pub fn inner(&self, other: &PureStrategy) -> f64 {
        if self.row != other.row || self.n() != other.n() {
            return 0.0;
        }
        let agree = self.signs.iter().zip(&other.signs).filter(|(a, b)| a == b).count() as i64;
        (2 * agree - self.n() as i64) as f64 / self.n() as f64
    }

    pub fn to_vector(&self, k: usize) -> Vec<f64> {
        let n = self.n();
        let s = 1.0 / (n as f64).sqrt();
        let mut v = vec![0.0; k * n];
        for (j, b) in self.signs.iter().enumerate() {
            v[self.row * n + j] = if *b { s } else { -s };
        }
        v
    }

    /// Inverse of [`Self::to_vector`] for valid realization vectors.
    pub fn from_vector(v: &[f64], k: usize, n: usize) -> Option<Self> {
        if v.len() != k * n || n == 0 {
            return None;
        }
        let s = 1.0 / (n as f64).sqrt();
        let rows: Vec<usize> = (0..k).filter(|i| v[i * n..(i + 1) * n].iter().any(|x| *x != 0.0)).collect();
        if rows.len() != 1 {
            return None;
        }
        let row = rows[0];
        let seg = &v[row * n..(row + 1) * n];
        if seg.iter().any(|x| (x.abs() - s).abs() > 1e-12) {
            return None;
        }
        Some(PureStrategy { row, signs: seg.iter().map(|x| *x > 0.0).collect() })
    }
}

/// The tree-form problem: k root choices, n observations, one binary action per observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeFormProblem {
    pub k: usize,
    pub n: usize,
}

impl TreeFormProblem {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::Usage("tree-form problems need k, n >= 1".into()));
        }
        Ok(TreeFormProblem { k, n })
    }

    pub fn random_strategy<R: Rng + ?Sized>(&self, row: usize, rng: &mut R) -> PureStrategy {
        PureStrategy { row, signs: (0..self.n).map(|_| rng.random::<bool>()).collect() }
    }
}

/// A normal-form action: (cell i, index j) in A_i, or the reserved action that is never played.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Regular { cell: usize, index: usize },
    Reserved,
}

pub trait NormalFormAdversary {
    /// N_i for each cell.
    fn cell_sizes(&self) -> Vec<usize>;
    fn horizon(&self) -> usize;
    fn draw(&self, seed: u64) -> Vec<Action>;
}

/// Uniform random cells; each cell's subsequence is a sorted uniform multiset of its actions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineAdversary {
    pub sizes: Vec<usize>,
    pub horizon: usize,
}

impl BaselineAdversary {
    /// N actions split evenly over k cells (the first N mod k cells get one more).
    pub fn even(k: usize, total: usize, horizon: usize) -> Self {
        let sizes = (0..k).map(|i| total / k + usize::from(i < total % k)).collect();
        BaselineAdversary { sizes, horizon }
    }
}

impl NormalFormAdversary for BaselineAdversary {
    fn cell_sizes(&self) -> Vec<usize> {
        self.sizes.clone()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn draw(&self, seed: u64) -> Vec<Action> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let live: Vec<usize> = (0..self.sizes.len()).filter(|i| self.sizes[*i] > 0).collect();
        if live.is_empty() {
            return Vec::new();
        }
        let cells: Vec<usize> = (0..self.horizon).map(|_| live[rng.random_range(0..live.len())]).collect();
        let mut queues: BTreeMap<usize, std::vec::IntoIter<usize>> = BTreeMap::new();
        for &i in &live {
            let count = cells.iter().filter(|c| **c == i).count();
            let mut picks: Vec<usize> = (0..count).map(|_| rng.random_range(0..self.sizes[i])).collect();
            picks.sort_unstable();
            queues.insert(i, picks.into_iter());
        }
        cells
            .into_iter()
            .map(|cell| Action::Regular { cell, index: queues.get_mut(&cell).and_then(|q| q.next()).expect("counted") })
            .collect()
    }
}

/// Checks that the reserved action never occurs and each cell is played in increasing order.
pub fn check_adversary_sequence(seq: &[Action], sizes: &[usize]) -> Result<()> {
    let mut last: Vec<Option<usize>> = vec![None; sizes.len()];
    for (t, a) in seq.iter().enumerate() {
        match a {
            Action::Reserved => return Err(Error::Contract(format!("reserved action played at round {}", t + 1))),
            Action::Regular { cell, index } => {
                if *cell >= sizes.len() || *index >= sizes[*cell] {
                    return Err(Error::Usage(format!("action ({cell}, {index}) outside the partition")));
                }
                if last[*cell].is_some_and(|p| *index < p) {
                    return Err(Error::Contract(format!("cell {cell} played out of order at round {}", t + 1)));
                }
                last[*cell] = Some(*index);
            }
        }
    }
    Ok(())
}

/// psi: A_i -> Pi_i, drawn uniformly and independently.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Embedding {
    pub problem: TreeFormProblem,
    pub psi: Vec<Vec<PureStrategy>>,
    pub seed: u64,
}

impl Embedding {
    pub fn draw(problem: TreeFormProblem, sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() != problem.k {
            return Err(Error::Usage(format!("{} cells for a problem with k = {}", sizes.len(), problem.k)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = sizes
            .iter()
            .enumerate()
            .map(|(i, &ni)| (0..ni).map(|_| problem.random_strategy(i, &mut rng)).collect())
            .collect();
        Ok(Embedding { problem, psi, seed })
    }

    pub fn total(&self) -> usize {
        self.psi.iter().map(Vec::len).sum()
    }

    pub fn image(&self, a: Action) -> Result<&PureStrategy> {
        match a {
            Action::Regular { cell, index } => self
                .psi
                .get(cell)
                .and_then(|c| c.get(index))
                .ok_or_else(|| Error::Usage(format!("action ({cell}, {index}) not embedded"))),
            Action::Reserved => Err(Error::Usage("the reserved action has no image".into())),
        }
    }
}

/// Largest action universe accepted by [`embed`].
pub const DEFAULT_ACTION_CAP: usize = 1 << 16;

/// Draws the adversary's sequence and its image under a fresh embedding. Seeds for the two are
/// derived from `seed`.
pub fn embed(adv: &dyn NormalFormAdversary, k: usize, n: usize, seed: u64) -> Result<(Embedding, Vec<Action>, Vec<PureStrategy>)> {
    let problem = TreeFormProblem::new(k, n)?;
    let sizes = adv.cell_sizes();
    if sizes.iter().sum::<usize>() > DEFAULT_ACTION_CAP {
        return Err(Error::Resource(format!("action universe exceeds {DEFAULT_ACTION_CAP}")));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let (emb_seed, adv_seed) = (seeder.random::<u64>(), seeder.random::<u64>());
    let emb = Embedding::draw(problem, &sizes, emb_seed)?;
    let actions = adv.draw(adv_seed);
    check_adversary_sequence(&actions, &sizes)?;
    let utils = actions.iter().map(|a| emb.image(*a).cloned()).collect::<Result<Vec<_>>>()?;
    Ok((emb, actions, utils))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// max |<psi(a), psi(a')>| over distinct actions in the same cell.
    pub max_offdiag: f64,
    /// N^2 exp(-n eps^2 / 2).
    pub predicted_failure: f64,
    pub violated: bool,
}

pub fn check_concentration(emb: &Embedding, eps: f64) -> ConcentrationReport {
    let mut max_offdiag: f64 = 0.0;
    for cell in &emb.psi {
        for (a, x) in cell.iter().enumerate() {
            for y in &cell[a + 1..] {
                max_offdiag = max_offdiag.max(x.inner(y).abs());
            }
        }
    }
    let n_total = emb.total() as f64;
    ConcentrationReport {
        max_offdiag,
        predicted_failure: n_total * n_total * (-(emb.problem.n as f64) * eps * eps / 2.0).exp(),
        violated: max_offdiag > eps,
    }
}

/// A round's mixed strategy: pure strategies with probabilities.
pub type MixedPlay = Vec<(PureStrategy, f64)>;

#[derive(Clone, Debug)]
pub enum Candidates {
    /// All of Pi (best responses computed coordinatewise, exact at any n).
    Full,
    List(Vec<PureStrategy>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwapDeviation {
    /// (x, phi(x)) for every strategy with positive cumulative mass, in lexicographic order.
    pub phi: Vec<(PureStrategy, PureStrategy)>,
    /// (1/T) sum_x [<phi(x), W_x> - <x, W_x>] with W_x = sum_t mu_t(x) u_t.
    pub swap_regret: f64,
}

/// Weighted utility rows of one cell: row -> per-coordinate sum of mu_t(x) * (+-1/sqrt(n)).
type CellWeights = BTreeMap<usize, Vec<f64>>;

fn payoff(x: &PureStrategy, w: &CellWeights) -> f64 {
    w.get(&x.row).map_or(0.0, |r| x.signs.iter().zip(r).map(|(s, v)| if *s { *v } else { -*v }).sum())
        / (x.n() as f64).sqrt()
}

/// Best response to W over Pi: per row the sign of each coordinate (+ on ties), then the best row
/// (smallest index on ties). Rows with no weight are worth 0.
fn full_best_response(w: &CellWeights, k: usize, n: usize) -> (PureStrategy, f64) {
    let mut best = (PureStrategy { row: 0, signs: vec![true; n] }, 0.0);
    let mut found = false;
    for row in 0..k {
        let (signs, value) = match w.get(&row) {
            Some(r) => (r.iter().map(|v| *v >= 0.0).collect(), r.iter().map(|v| v.abs()).sum::<f64>() / (n as f64).sqrt()),
            None => (vec![true; n], 0.0),
        };
        if !found || value > best.1 {
            best = (PureStrategy { row, signs }, value);
            found = true;
        }
    }
    best
}

/// Best swap deviation Pi -> candidates under linear utilities. phi(x) = x whenever x is itself a
/// best response.
pub fn best_swap_deviation(
    problem: TreeFormProblem,
    play: &[MixedPlay],
    utils: &[PureStrategy],
    candidates: &Candidates,
) -> Result<SwapDeviation> {
    if play.len() != utils.len() {
        return Err(Error::Usage("one utility per round of play".into()));
    }
    if let Candidates::List(c) = candidates {
        if c.is_empty() {
            return Err(Error::Usage("empty candidate set".into()));
        }
    }
    let n = problem.n;
    let s = 1.0 / (n as f64).sqrt();
    let mut cells: BTreeMap<PureStrategy, CellWeights> = BTreeMap::new();
    for (mix, u) in play.iter().zip(utils) {
        if u.row >= problem.k || u.n() != n {
            return Err(Error::Usage("utility is not a strategy of this problem".into()));
        }
        for (x, p) in mix {
            if x.row >= problem.k || x.n() != n {
                return Err(Error::Usage("played strategy is not in Pi".into()));
            }
            if *p <= 0.0 {
                continue;
            }
            let rows = cells.entry(x.clone()).or_default();
            let r = rows.entry(u.row).or_insert_with(|| vec![0.0; n]);
            for (v, sgn) in r.iter_mut().zip(&u.signs) {
                *v += if *sgn { p * s } else { -p * s };
            }
        }
    }
    let t = play.len().max(1) as f64;
    let mut phi = Vec::with_capacity(cells.len());
    let mut gain = 0.0;
    for (x, w) in cells {
        let own = payoff(&x, &w);
        let (br, value) = match candidates {
            Candidates::Full => full_best_response(&w, problem.k, n),
            Candidates::List(list) => {
                let mut best = (list[0].clone(), payoff(&list[0], &w));
                for c in &list[1..] {
                    let v = payoff(c, &w);
                    if v > best.1 {
                        best = (c.clone(), v);
                    }
                }
                best
            }
        };
        let tol = 1e-12 * (1.0 + own.abs());
        if value > own + tol {
            gain += value - own;
            phi.push((x, br));
        } else {
            phi.push((x.clone(), x));
        }
    }
    Ok(SwapDeviation { phi, swap_regret: gain / t })
}

/// Best fixed strategy in hindsight minus realized utility, averaged over rounds.
pub fn external_regret(problem: TreeFormProblem, play: &[MixedPlay], utils: &[PureStrategy]) -> f64 {
    let n = problem.n;
    let s = 1.0 / (n as f64).sqrt();
    let mut w: CellWeights = BTreeMap::new();
    let mut realized = 0.0;
    for (mix, u) in play.iter().zip(utils) {
        let r = w.entry(u.row).or_insert_with(|| vec![0.0; n]);
        for (v, sgn) in r.iter_mut().zip(&u.signs) {
            *v += if *sgn { s } else { -s };
        }
        realized += mix.iter().map(|(x, p)| p * x.inner(u)).sum::<f64>();
    }
    let (_, best) = full_best_response(&w, problem.k, n);
    (best - realized) / play.len().max(1) as f64
}

/// A learner on the tree-form problem facing linear utilities.
pub trait TreeLearner {
    fn play(&mut self, round: usize) -> MixedPlay;
    fn observe(&mut self, utility: &PureStrategy);
}

/// Always the same pure strategy.
pub struct FixedLearner(pub PureStrategy);

impl TreeLearner for FixedLearner {
    fn play(&mut self, _round: usize) -> MixedPlay {
        vec![(self.0.clone(), 1.0)]
    }

    fn observe(&mut self, _utility: &PureStrategy) {}
}

/// Uniform over a fixed list of strategies.
pub struct UniformLearner(pub Vec<PureStrategy>);

impl TreeLearner for UniformLearner {
    fn play(&mut self, _round: usize) -> MixedPlay {
        let p = 1.0 / self.0.len() as f64;
        self.0.iter().map(|x| (x.clone(), p)).collect()
    }

    fn observe(&mut self, _utility: &PureStrategy) {}
}

/// Plays the best response over Pi to the cumulative utility (row 0, all + before any feedback).
pub struct FollowTheLeader {
    problem: TreeFormProblem,
    cumulative: CellWeights,
}

impl FollowTheLeader {
    pub fn new(problem: TreeFormProblem) -> Self {
        FollowTheLeader { problem, cumulative: BTreeMap::new() }
    }
}

impl TreeLearner for FollowTheLeader {
    fn play(&mut self, _round: usize) -> MixedPlay {
        vec![(full_best_response(&self.cumulative, self.problem.k, self.problem.n).0, 1.0)]
    }

    fn observe(&mut self, u: &PureStrategy) {
        let s = 1.0 / (self.problem.n as f64).sqrt();
        let r = self.cumulative.entry(u.row).or_insert_with(|| vec![0.0; self.problem.n]);
        for (v, sgn) in r.iter_mut().zip(&u.signs) {
            *v += if *sgn { s } else { -s };
        }
    }
}

/// Parameters of the lower-bound recipe for reference: eps = 1/(4 C k^6) and
/// n = 2 ln(20 C N^2 k^6) / eps^2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecipeParameters {
    pub c: f64,
    pub eps: f64,
    pub n: f64,
    pub dimension: f64,
}

pub fn recipe(k: usize, total_actions: usize, c: f64) -> RecipeParameters {
    let k6 = (k as f64).powi(6);
    let eps = 1.0 / (4.0 * c * k6);
    let nn = total_actions as f64;
    let n = 2.0 * (20.0 * c * nn * nn * k6).ln() / (eps * eps);
    RecipeParameters { c, eps, n, dimension: k as f64 * n }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBoundRound {
    pub round: usize,
    pub cell: usize,
    pub action: usize,
    pub learner_utility: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub k: usize,
    pub n: usize,
    pub horizon: usize,
    pub total_actions: usize,
    pub rounds: Vec<LowerBoundRound>,
    pub swap_regret: f64,
    pub external_regret: f64,
    pub deviation: SwapDeviation,
    pub concentration: ConcentrationReport,
    pub concentration_eps: f64,
    pub recipe: RecipeParameters,
}

pub fn run_lower_bound_experiment(
    learner: &mut dyn TreeLearner,
    adv: &dyn NormalFormAdversary,
    k: usize,
    n: usize,
    seed: u64,
    c: f64,
) -> Result<LowerBoundReport> {
    let (emb, actions, utils) = embed(adv, k, n, seed)?;
    let problem = emb.problem;
    let mut play = Vec::with_capacity(utils.len());
    let mut rounds = Vec::with_capacity(utils.len());
    for (t, (a, u)) in actions.iter().zip(&utils).enumerate() {
        let mix = learner.play(t + 1);
        let total: f64 = mix.iter().map(|(_, p)| p).sum();
        if mix.iter().any(|(_, p)| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("learner emitted an invalid distribution at round {}", t + 1)));
        }
        let value = mix.iter().map(|(x, p)| p * x.inner(u)).sum();
        let (cell, action) = match a {
            Action::Regular { cell, index } => (*cell, *index),
            Action::Reserved => unreachable!("checked by embed"),
        };
        rounds.push(LowerBoundRound { round: t + 1, cell, action, learner_utility: value });
        learner.observe(u);
        play.push(mix);
    }
    let deviation = best_swap_deviation(problem, &play, &utils, &Candidates::Full)?;
    let total_actions = emb.total();
    let rec = recipe(k, total_actions.max(1), c);
    let conc_eps = 0.5;
    Ok(LowerBoundReport {
        k,
        n,
        horizon: utils.len(),
        total_actions,
        rounds,
        swap_regret: deviation.swap_regret,
        external_regret: external_regret(problem, &play, &utils),
        deviation,
        concentration: check_concentration(&emb, conc_eps),
        concentration_eps: conc_eps,
        recipe: rec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_roundtrip() {
        let x = PureStrategy { row: 1, signs: vec![true, false, true, true] };
        let v = x.to_vector(3);
        assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(PureStrategy::from_vector(&v, 3, 4), Some(x.clone()));
        assert_eq!(x.inner(&x), 1.0);
    }

    #[test]
    fn baseline_respects_order() {
        let adv = BaselineAdversary::even(3, 10, 50);
        let seq = adv.draw(7);
        assert_eq!(seq.len(), 50);
        check_adversary_sequence(&seq, &adv.sizes).unwrap();
    }
}
