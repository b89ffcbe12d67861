//! Config-driven experiment runner: JSON configs in, a JSON report and CSV traces out.
//!
//! Every component seed is derived from the config's root seed by [`split_seed`]. Reports embed the
//! config hash and root seed; CSV traces contain no timing data, so identical configs produce
//! byte-identical traces.

use crate::distributions::SupportDistribution;
use crate::eqcomp::{eah_run, fptas_run, EahOptions, FptasOptions};
use crate::error::Error;
use crate::fixedpoint::{cefp_run, efp_run, qefp_residual, qefp_run, FixedPointResult, FixedPointRun, PointMap};
use crate::games::{verify_equilibrium, QuadraticGame, QuadraticGameSpec};
use crate::geometry::{BodySpec, ConvexBody, CutKind};
use crate::linalg::{Matrix, Vector};
use crate::lowerbound::{
    check_adversary_sequence, run_lower_bound_experiment, Action, BaselineAdversary, FixedLearner, FollowTheLeader,
    LowerBoundReport, NormalFormAdversary, TreeFormProblem, TreeLearner, UniformLearner,
};
use crate::phi::{FeatureMap, FeatureSpec};
use crate::reductions::{nfce_game_from_map, phieq_game_from_contraction, NormOracle};
use crate::regret::{run_regret, Adversary, ConcaveUtility, RegretOptions};
use crate::sampling::{unit_vector, SeededRng};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Solver(#[from] Error),
}

impl HarnessError {
    /// Process exit status: 2 for config problems, 3 for I/O and solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Solver(Error::Usage(_)) => 2,
            _ => 3,
        }
    }
}

type HResult<T> = std::result::Result<T, HarnessError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub seed: u64,
    #[serde(default)]
    pub name: Option<String>,
    pub experiment: Experiment,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Experiment {
    Fp(FpConfig),
    Eq(EqConfig),
    Regret(RegretConfig),
    Lb(LbConfig),
    Reduce(ReduceConfig),
}

impl Experiment {
    pub fn command(&self) -> &'static str {
        match self {
            Experiment::Fp(_) => "fp",
            Experiment::Eq(_) => "eq",
            Experiment::Regret(_) => "regret",
            Experiment::Lb(_) => "lb",
            Experiment::Reduce(_) => "reduce",
        }
    }
}

/// Registered point maps.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Identity { dim: usize },
    Constant { point: Vec<f64> },
    /// x -> center + (1 - gamma)(x - center).
    Contraction { center: Vec<f64>, gamma: f64 },
    /// x -> M x + offset.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

impl MapSpec {
    pub fn to_point_map(&self) -> HResult<PointMap> {
        Ok(match self {
            MapSpec::Identity { dim } => PointMap::identity(*dim),
            MapSpec::Constant { point } => PointMap::constant(Vector::from_vec(point.clone())),
            MapSpec::Contraction { center, gamma } => {
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(HarnessError::Config(format!("contraction gamma must lie in (0, 1], got {gamma}")));
                }
                PointMap::contraction(Vector::from_vec(center.clone()), *gamma)
            }
            MapSpec::Affine { matrix, offset } => {
                let d = offset.len();
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(HarnessError::Config(format!("affine map needs a {d} x {d} matrix")));
                }
                PointMap::affine(Matrix::from_fn(d, d, |i, j| matrix[i][j]), Vector::from_vec(offset.clone()))
            }
        })
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            MapSpec::Contraction { gamma, .. } => Some(*gamma),
            MapSpec::Constant { .. } => Some(1.0),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FpSolver {
    Efp,
    Qefp,
    Cefp,
    Unkcontr,
}

/// Hidden Mahalanobis potential (x - center)^T A (x - center) for unkcontr reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub matrix: Vec<Vec<f64>>,
    pub center: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpConfig {
    pub solver: FpSolver,
    pub body: BodySpec,
    pub map: MapSpec,
    /// Precision for efp, qefp and cefp.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Contraction factor for unkcontr (defaults to the map's own).
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Target potential for unkcontr.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqMethod {
    #[default]
    Eah,
    Fptas,
}

fn default_audit_budget() -> usize {
    1000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqConfig {
    pub game: QuadraticGameSpec,
    pub features: FeatureSpec,
    pub eps: f64,
    #[serde(default)]
    pub method: EqMethod,
    /// Ellipsoid iteration budget (eah).
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Self-play rounds (fptas).
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub audit: Option<bool>,
    #[serde(default = "default_audit_budget")]
    pub audit_budget: usize,
    /// Audit slack above eps; defaults to eps / 10.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversarySpec {
    /// +<c, x> on odd rounds, -<c, x> on even rounds.
    Alternating { c: Vec<f64> },
    Linear { c: Vec<f64> },
    /// -|x - target|^2.
    Peak { target: Vec<f64> },
    /// A seeded cycle of `count` linear utilities with gradient norm `norm`.
    RandomLinear { count: usize, norm: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegretConfig {
    pub body: BodySpec,
    pub features: FeatureSpec,
    pub horizon: usize,
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub grad_bound: Option<f64>,
    /// Random endomorphic transforms in the summary.
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LbLearnerSpec {
    Fixed,
    Uniform { count: usize },
    FollowTheLeader,
}

fn one() -> usize {
    1
}

fn default_c() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbConfig {
    pub k: usize,
    pub n: usize,
    pub total_actions: usize,
    pub horizon: usize,
    pub learner: LbLearnerSpec,
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Worker threads for the seed sweep; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReduceKind {
    Nfce,
    Phieq,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    L2,
    L1,
    Linf,
}

fn default_reduce_eps() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub kind: ReduceKind,
    pub map: MapSpec,
    pub body: BodySpec,
    #[serde(default)]
    pub norm: NormKind,
    /// Contraction factor (defaults to the map's own).
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_reduce_eps")]
    pub eps: f64,
    /// Distribution over pairs (x, y) to check, as a JSON file relative to the config.
    #[serde(default)]
    pub check: Option<PathBuf>,
    /// Inline alternative to `check`.
    #[serde(default)]
    pub distribution: Option<SupportDistribution>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    #[serde(default)]
    pub name: Option<String>,
    pub metric: String,
    pub op: Comparison,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub observed: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub trace_version: u32,
    pub command: String,
    pub name: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub details: serde_json::Value,
    pub traces: Vec<String>,
    pub assertions: Vec<AssertionOutcome>,
    pub pass: bool,
}

impl Report {
    pub fn failed(&self) -> Vec<&str> {
        self.assertions.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect()
    }
}

/// Component seed: the first 8 bytes (little endian) of SHA-256("phieq-seed" || root || label).
pub fn split_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"phieq-seed");
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn config_hash(config: &Config) -> String {
    let canon = serde_json::to_string(config).expect("serializable config");
    let digest = Sha256::digest(canon.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_config(text: &str) -> HResult<Config> {
    let config: Config = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    if config.version != CONFIG_VERSION {
        return Err(HarnessError::Config(format!(
            "unsupported config version {} (expected {CONFIG_VERSION})",
            config.version
        )));
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> HResult<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_config(&text)
}

/// Collected output of one experiment before it is written.
struct Output {
    metrics: BTreeMap<String, f64>,
    details: serde_json::Value,
    traces: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn new() -> Self {
        Output { metrics: BTreeMap::new(), details: serde_json::Value::Null, traces: Vec::new() }
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.to_string(), v);
    }

    fn flag(&mut self, name: &str, v: bool) {
        self.metric(name, if v { 1.0 } else { 0.0 });
    }

    fn trace<S: Serialize>(&mut self, file: &str, rows: impl IntoIterator<Item = S>) -> HResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| HarnessError::Config(format!("trace {file}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Config(format!("trace {file}: {e}")))?;
        self.traces.push((file.to_string(), bytes));
        Ok(())
    }
}

#[derive(Serialize)]
struct AtomRow {
    atom: usize,
    weight: f64,
    point: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn atom_rows(mu: &SupportDistribution) -> Vec<AtomRow> {
    mu.iter().enumerate().map(|(i, (w, x))| AtomRow { atom: i, weight: w, point: join(x.as_slice()) }).collect()
}

#[derive(Serialize)]
struct CutRow {
    cut: usize,
    kind: String,
    player: Option<usize>,
    offset: f64,
    normal_norm: f64,
    weight: Option<f64>,
}

fn kind_name(k: CutKind) -> String {
    format!("{k:?}").to_lowercase()
}

/// Runs a config and writes `report.json` plus its CSV traces into `out_dir`.
pub fn run_config(path: &Path, out_dir: &Path) -> HResult<Report> {
    let config = load_config(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_parsed(&config, &base, out_dir)
}

/// Runs an already parsed config; relative paths inside it resolve against `base`.
pub fn run_parsed(config: &Config, base: &Path, out_dir: &Path) -> HResult<Report> {
    let hash = config_hash(config);
    log(1, &format!("running {} (config {})", config.experiment.command(), &hash[..12]));
    let out = match &config.experiment {
        Experiment::Fp(c) => run_fp(c)?,
        Experiment::Eq(c) => run_eq(c, config.seed)?,
        Experiment::Regret(c) => run_regret_experiment(c, config.seed)?,
        Experiment::Lb(c) => run_lb(c, config.seed)?,
        Experiment::Reduce(c) => run_reduce(c, base)?,
    };
    let assertions: Vec<AssertionOutcome> = config
        .assertions
        .iter()
        .map(|a| {
            let observed = out.metrics.get(&a.metric).copied();
            let pass = observed.is_some_and(|v| match a.op {
                Comparison::Le => v <= a.value,
                Comparison::Lt => v < a.value,
                Comparison::Ge => v >= a.value,
                Comparison::Gt => v > a.value,
                Comparison::Eq => v == a.value,
            });
            let name = a.name.clone().unwrap_or_else(|| format!("{} {:?} {}", a.metric, a.op, a.value));
            AssertionOutcome { name, observed, pass }
        })
        .collect();
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut traces = Vec::new();
    for (file, bytes) in &out.traces {
        let p = out_dir.join(file);
        std::fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
        traces.push(file.clone());
    }
    let report = Report {
        version: CONFIG_VERSION,
        trace_version: TRACE_VERSION,
        command: config.experiment.command().to_string(),
        name: config.name.clone(),
        config_hash: hash,
        seed: config.seed,
        pass: assertions.iter().all(|a| a.pass),
        metrics: out.metrics,
        details: out.details,
        traces,
        assertions,
    };
    let p = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report).expect("serializable report");
    std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    Ok(report)
}

/// Stderr logging gated by PHIEQ_LOG (0 = quiet, 1 = info, 2 = debug).
pub fn log(level: u8, msg: &str) {
    let max = std::env::var("PHIEQ_LOG").ok().and_then(|v| v.parse::<u8>().ok()).unwrap_or(0);
    if level <= max {
        eprintln!("[phieq] {msg}");
    }
}

fn budget_context(e: Error, budget: Option<usize>) -> HarnessError {
    match (e, budget) {
        (Error::Resource(m), Some(b)) => {
            HarnessError::Solver(Error::Resource(format!("iteration budget max_iterations = {b} exhausted: {m}")))
        }
        (e, _) => HarnessError::Solver(e),
    }
}

fn run_fp(c: &FpConfig) -> HResult<Output> {
    let body = ConvexBody::from_spec(&c.body)?;
    let phi = c.map.to_point_map()?;
    let mut out = Output::new();
    let need = |v: Option<f64>, what: &str| v.ok_or_else(|| HarnessError::Config(format!("fp {what} is required")));
    let hope_run = |run: FixedPointRun, out: &mut Output, eps: f64| -> HResult<()> {
        out.metric("eps", eps);
        out.metric("cuts", run.cuts.len() as f64);
        out.details = serde_json::to_value(&run.report).expect("serializable");
        let rows: Vec<CutRow> = run
            .cuts
            .iter()
            .enumerate()
            .map(|(i, r)| CutRow { cut: i, kind: kind_name(r.kind), player: None, offset: r.b, normal_norm: r.a.norm(), weight: None })
            .collect();
        out.trace("cuts.csv", rows)?;
        finish_fp(run.result, &phi, &body, out)
    };
    match c.solver {
        FpSolver::Efp => hope_run(efp_run(&phi, &body, need(c.eps, "eps")?)?, &mut out, c.eps.unwrap_or_default())?,
        FpSolver::Qefp => hope_run(qefp_run(&phi, &body, need(c.eps, "eps")?)?, &mut out, c.eps.unwrap_or_default())?,
        FpSolver::Unkcontr => {
            let gamma = c.gamma.or(c.map.gamma()).ok_or_else(|| HarnessError::Config("unkcontr needs gamma".into()))?;
            let delta = need(c.delta, "delta")?;
            out.metric("gamma", gamma);
            out.metric("delta", delta);
            hope_run(qefp_run(&phi, &body, delta * gamma)?, &mut out, delta * gamma)?;
        }
        FpSolver::Cefp => {
            let eps = need(c.eps, "eps")?;
            let x0 = c.x0.clone().map(Vector::from_vec);
            let run = cefp_run(&phi, &body, eps, x0)?;
            out.metric("eps", eps);
            out.metric("iterates", run.iterates.len() as f64);
            #[derive(Serialize)]
            struct IterRow {
                step: usize,
                point: String,
            }
            let rows: Vec<IterRow> =
                run.iterates.iter().enumerate().map(|(i, x)| IterRow { step: i, point: join(x.as_slice()) }).collect();
            out.trace("iterates.csv", rows)?;
            finish_fp(run.result, &phi, &body, &mut out)?;
        }
    }
    if let (Some(p), Some(mu)) = (&c.potential, out_certificate(&out)) {
        let d = p.center.len();
        if p.matrix.len() != d || p.matrix.iter().any(|r| r.len() != d) {
            return Err(HarnessError::Config(format!("potential needs a {d} x {d} matrix")));
        }
        let a = Matrix::from_fn(d, d, |i, j| p.matrix[i][j]);
        let center = Vector::from_vec(p.center.clone());
        let ev = mu.expect_scalar(|x| {
            let z = x - &center;
            z.dot(&(&a * &z))
        })?;
        out.metric("expected_potential", ev);
    }
    Ok(out)
}

fn out_certificate(out: &Output) -> Option<SupportDistribution> {
    out.traces
        .iter()
        .find(|(f, _)| f == "atoms.csv")
        .and_then(|_| out.details.get("certificate"))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn finish_fp(result: FixedPointResult, phi: &PointMap, body: &ConvexBody, out: &mut Output) -> HResult<()> {
    match result {
        FixedPointResult::Certificate(mu) => {
            let r = qefp_residual(&mu, phi, body)?;
            out.flag("not_endomorphism", false);
            out.metric("support_size", mu.len() as f64);
            out.metric("efp_norm", r.efp_norm);
            out.metric("psd_term", r.psd_term);
            out.metric("evi_residual", r.evi_residual);
            out.metric("quadratic_residual", r.quadratic_value());
            out.trace("atoms.csv", atom_rows(&mu))?;
            let mut details = match std::mem::take(&mut out.details) {
                serde_json::Value::Object(m) => m,
                _ => serde_json::Map::new(),
            };
            details.insert("certificate".into(), serde_json::to_value(&mu).expect("serializable"));
            out.details = serde_json::Value::Object(details);
        }
        FixedPointResult::NotEndomorphism(x) => {
            out.flag("not_endomorphism", true);
            out.details = serde_json::json!({ "exit_point": x.as_slice() });
        }
    }
    Ok(())
}

fn feature_maps(game: &QuadraticGame, spec: &FeatureSpec) -> Vec<FeatureMap> {
    (0..game.players())
        .map(|i| {
            let b = game.body(i);
            FeatureMap::from_spec(spec, b.dim(), b.outer_radius())
        })
        .collect()
}

fn run_eq(c: &EqConfig, seed: u64) -> HResult<Output> {
    let qgame = QuadraticGame::from_spec(&c.game)?;
    let game = qgame.to_concave();
    let maps = feature_maps(&qgame, &c.features);
    let probe_seed = split_seed(seed, "eq/probe");
    let mut out = Output::new();
    out.metric("eps", c.eps);
    let mu = match c.method {
        EqMethod::Eah => {
            let mut opts = EahOptions { probe_seed, ..EahOptions::default() };
            if let Some(m) = c.max_iterations {
                opts.max_iterations = m;
            }
            let r = eah_run(&game, &maps, c.eps, &opts).map_err(|e| budget_context(e, Some(opts.max_iterations)))?;
            let t = &r.trace;
            out.metric("certificate_value", t.certificate_value);
            out.metric("d_radius", t.d_radius);
            out.metric("hope_cuts", t.cuts.iter().filter(|c| c.kind == CutKind::Hope).count() as f64);
            out.metric("endomorphism_cuts", t.cuts.iter().filter(|c| c.kind == CutKind::Endomorphism).count() as f64);
            out.details = serde_json::to_value(&t.stats).expect("serializable");
            let rows: Vec<CutRow> = t
                .cuts
                .iter()
                .enumerate()
                .map(|(i, r)| CutRow {
                    cut: i,
                    kind: kind_name(r.kind),
                    player: t.cut_players[i],
                    offset: r.b,
                    normal_norm: r.a.norm(),
                    weight: t.final_weights.get(i).copied(),
                })
                .collect();
            out.trace("cuts.csv", rows)?;
            r.mu
        }
        EqMethod::Fptas => {
            let opts = FptasOptions { rounds: c.rounds, probe_seed, ..FptasOptions::default() };
            let r = fptas_run(&game, &maps, c.eps, &opts)?;
            out.metric("rounds", r.rounds as f64);
            r.mu
        }
    };
    out.metric("support_size", mu.len() as f64);
    out.trace("atoms.csv", atom_rows(&mu))?;
    if c.audit.unwrap_or(true) {
        let tol = c.tolerance.unwrap_or(0.1 * c.eps);
        let mut rng = SeededRng::seed_from_u64(split_seed(seed, "eq/audit"));
        let audit = verify_equilibrium(&game, &mu, &maps, c.eps, tol, c.audit_budget, &mut rng)?;
        out.metric("max_benefit", audit.max_benefit);
        out.metric("summed_benefit", audit.summed_benefit);
        out.flag("audit_pass", audit.pass);
        let details = serde_json::json!({ "solver": out.details, "audit": audit });
        out.details = details;
    }
    Ok(out)
}

fn run_regret_experiment(c: &RegretConfig, seed: u64) -> HResult<Output> {
    let body = ConvexBody::from_spec(&c.body)?;
    let map = FeatureMap::from_spec(&c.features, body.dim(), body.outer_radius());
    let d = body.dim();
    let vec_of = |v: &[f64]| -> HResult<Vector> {
        if v.len() != d {
            return Err(HarnessError::Config(format!("adversary vector has length {}, body dimension is {d}", v.len())));
        }
        Ok(Vector::from_vec(v.to_vec()))
    };
    let adversary = match &c.adversary {
        AdversarySpec::Alternating { c } => Adversary::Alternating(vec_of(c)?),
        AdversarySpec::Linear { c } => Adversary::Constant(ConcaveUtility::linear(vec_of(c)?)),
        AdversarySpec::Peak { target } => Adversary::Constant(ConcaveUtility::concave_peak(vec_of(target)?)),
        AdversarySpec::RandomLinear { count, norm } => {
            if *count == 0 {
                return Err(HarnessError::Config("random_linear needs count >= 1".into()));
            }
            let mut rng = SeededRng::seed_from_u64(split_seed(seed, "regret/adversary"));
            Adversary::Sequence((0..*count).map(|_| ConcaveUtility::linear(unit_vector(&mut rng, d) * *norm)).collect())
        }
    };
    let mut opts = RegretOptions::new(c.horizon);
    if let Some(e) = c.eps {
        opts.eps = e;
        opts.cefp_eps = e;
    }
    opts.eta = c.eta;
    if let Some(g) = c.grad_bound {
        opts.grad_bound = g;
    }
    opts.probe_seed = split_seed(seed, "regret/probe");
    let grad_bound = opts.grad_bound * map.norm_bound();
    let mut run = run_regret(body, map, &adversary, opts)?;
    if let Some(s) = c.samples {
        run.summary = crate::regret::summarize(&run.learner, s, split_seed(seed, "regret/summary"))?;
    }
    let s = &run.summary;
    let t = s.rounds as f64;
    let mut out = Output::new();
    out.metric("rounds", t);
    out.metric("eta", s.eta);
    out.metric("d_radius", s.d_radius);
    out.metric("best_k_regret", s.best_k_regret);
    out.metric("average_regret", s.best_k_regret / t.max(1.0));
    out.metric("sampled_regret", s.sampled_regret);
    out.metric("chain_bound", s.chain_bound);
    out.metric("cefp_residual_total", s.cefp_residual_total);
    out.metric("gd_bound", s.gd_bound);
    let bound = s.d_radius * s.d_radius / (2.0 * s.eta) + s.eta * t * grad_bound * grad_bound + s.cefp_residual_total;
    out.metric("regret_bound", bound);
    out.flag("bound_holds", s.best_k_regret <= bound && s.sampled_regret <= bound);
    out.details = serde_json::to_value(s).expect("serializable");
    out.trace("regret.csv", run.trace.iter())?;
    Ok(out)
}

#[derive(Serialize)]
struct LbRow {
    seed_index: usize,
    round: usize,
    cell: usize,
    action: usize,
    learner_utility: f64,
}

fn lb_one(c: &LbConfig, seed: u64) -> crate::error::Result<LowerBoundReport> {
    let adv = BaselineAdversary::even(c.k, c.total_actions, c.horizon);
    let problem = TreeFormProblem::new(c.k, c.n)?;
    let mut rng = SeededRng::seed_from_u64(split_seed(seed, "learner"));
    let mut learner: Box<dyn TreeLearner> = match &c.learner {
        LbLearnerSpec::Fixed => Box::new(FixedLearner(problem.random_strategy(0, &mut rng))),
        LbLearnerSpec::Uniform { count } => Box::new(UniformLearner(
            (0..(*count).max(1)).map(|i| problem.random_strategy(i % c.k, &mut rng)).collect(),
        )),
        LbLearnerSpec::FollowTheLeader => Box::new(FollowTheLeader::new(problem)),
    };
    run_lower_bound_experiment(learner.as_mut(), &adv, c.k, c.n, split_seed(seed, "embed"), c.c)
}

fn run_lb(c: &LbConfig, seed: u64) -> HResult<Output> {
    if c.seeds == 0 {
        return Err(HarnessError::Config("lb needs seeds >= 1".into()));
    }
    let seeds: Vec<u64> = (0..c.seeds).map(|i| split_seed(seed, &format!("lb/{i}"))).collect();
    let workers = c
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, c.seeds);
    let mut results: Vec<Option<crate::error::Result<LowerBoundReport>>> = (0..c.seeds).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = results.chunks_mut(c.seeds.div_ceil(workers)).zip(seeds.chunks(c.seeds.div_ceil(workers))).collect();
        for (slots, ss) in chunks {
            s.spawn(move || {
                for (slot, sd) in slots.iter_mut().zip(ss) {
                    *slot = Some(lb_one(c, *sd));
                }
            });
        }
    });
    let reports: Vec<LowerBoundReport> =
        results.into_iter().map(|r| r.expect("every slot filled")).collect::<crate::error::Result<_>>()?;
    let sizes = BaselineAdversary::even(c.k, c.total_actions, c.horizon).cell_sizes();
    let mut out = Output::new();
    let mut rows = Vec::new();
    let mut sequence_violations = 0usize;
    for (i, r) in reports.iter().enumerate() {
        let seq: Vec<Action> = r.rounds.iter().map(|x| Action::Regular { cell: x.cell, index: x.action }).collect();
        if check_adversary_sequence(&seq, &sizes).is_err() {
            sequence_violations += 1;
        }
        rows.extend(r.rounds.iter().map(|x| LbRow {
            seed_index: i,
            round: x.round,
            cell: x.cell,
            action: x.action,
            learner_utility: x.learner_utility,
        }));
    }
    let nseeds = reports.len() as f64;
    let fold_max = |f: &dyn Fn(&LowerBoundReport) -> f64| reports.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    out.metric("seeds", nseeds);
    out.metric("concentration_violations", reports.iter().filter(|r| r.concentration.violated).count() as f64);
    out.metric("max_offdiag", fold_max(&|r| r.concentration.max_offdiag));
    out.metric("predicted_failure", reports[0].concentration.predicted_failure);
    out.metric("sequence_violations", sequence_violations as f64);
    out.metric("max_swap_regret", fold_max(&|r| r.swap_regret));
    out.metric("mean_swap_regret", reports.iter().map(|r| r.swap_regret).sum::<f64>() / nseeds);
    out.metric("max_external_regret", fold_max(&|r| r.external_regret));
    #[derive(Serialize)]
    struct SeedSummary<'a> {
        swap_regret: f64,
        external_regret: f64,
        concentration: &'a crate::lowerbound::ConcentrationReport,
    }
    let summaries: Vec<SeedSummary> = reports
        .iter()
        .map(|r| SeedSummary { swap_regret: r.swap_regret, external_regret: r.external_regret, concentration: &r.concentration })
        .collect();
    out.details = serde_json::json!({ "recipe": reports[0].recipe, "seeds": summaries });
    out.trace("lb_rounds.csv", rows)?;
    Ok(out)
}

/// Fixed point of a map by iteration from the body's center (exact for registered contractions).
fn fixed_point_of(spec: &MapSpec, phi: &PointMap, body: &ConvexBody) -> HResult<Vector> {
    match spec {
        MapSpec::Contraction { center, .. } => Ok(Vector::from_vec(center.clone())),
        MapSpec::Constant { point } => Ok(Vector::from_vec(point.clone())),
        _ => {
            let mut x = body.center().clone();
            for _ in 0..100_000 {
                let y = phi.eval(&x)?;
                if (&y - &x).norm() <= 1e-14 * (1.0 + x.norm()) {
                    return Ok(y);
                }
                x = y;
            }
            Ok(x)
        }
    }
}

fn run_reduce(c: &ReduceConfig, base: &Path) -> HResult<Output> {
    let body = ConvexBody::from_spec(&c.body)?;
    let phi = c.map.to_point_map()?;
    let xstar = fixed_point_of(&c.map, &phi, &body)?;
    let mu = match (&c.check, &c.distribution) {
        (Some(p), _) => {
            let p = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            SupportDistribution::from_json(&text)?
        }
        (None, Some(mu)) => mu.clone(),
        (None, None) => SupportDistribution::point_mass(crate::linalg::concat(&[&xstar, &xstar])),
    };
    let mut out = Output::new();
    out.metric("support_size", mu.len() as f64);
    match c.kind {
        ReduceKind::Nfce => {
            let red = nfce_game_from_map(phi, &body)?;
            let q = move |x: &Vector| (x - &xstar).norm();
            let r = red.verify_lemma_decrease(&mu, &q, c.eps)?;
            out.metric("scale", red.scale);
            out.metric("x_residual", r.residuals.x_residual);
            out.metric("y_residual", r.residuals.y_residual);
            out.metric("eps_hat", r.eps_hat);
            out.metric("decrease", r.decrease);
            out.metric("bound", r.bound);
            out.flag("holds", r.holds);
            out.flag("nfce_within_eps", r.nfce_within_eps);
            out.details = serde_json::to_value(&r).expect("serializable");
        }
        ReduceKind::Phieq => {
            let gamma = c.gamma.or(c.map.gamma()).ok_or_else(|| HarnessError::Config("phieq needs gamma".into()))?;
            let norm = match c.norm {
                NormKind::L2 => NormOracle::l2(),
                NormKind::L1 => NormOracle::l1(body.dim()),
                NormKind::Linf => NormOracle::linf(),
            };
            let red = phieq_game_from_contraction(phi, norm, &body)?;
            let r = red.verify_chain(&mu, gamma)?;
            out.metric("scale", red.scale);
            out.metric("summed_benefit", r.summed_benefit);
            out.metric("gamma_distance", r.gamma_distance);
            out.metric("fixed_point_error", r.fixed_point_error);
            out.metric("eps_hat", r.eps_hat);
            out.metric("bound", r.bound);
            out.flag("first_step_holds", r.first_step_holds);
            out.flag("holds", r.holds);
            out.details = serde_json::to_value(&r).expect("serializable");
        }
    }
    out.trace("atoms.csv", atom_rows(&mu))?;
    Ok(out)
}
