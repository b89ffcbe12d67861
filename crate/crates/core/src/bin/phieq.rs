use clap::{Args, Parser, Subcommand, ValueEnum};
use phieq::games::QuadraticGameSpec;
use phieq::geometry::BodySpec;
use phieq::harness::{
    load_config, run_parsed, AdversarySpec, Config, EqConfig, EqMethod, Experiment, FpConfig, FpSolver, HarnessError,
    LbConfig, LbLearnerSpec, MapSpec, NormKind, ReduceConfig, ReduceKind, RegretConfig, Report, CONFIG_VERSION,
};
use phieq::phi::FeatureSpec;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Expected fixed points, Phi-equilibria, Phi-regret learners and lower-bound experiments.
#[derive(Parser)]
#[command(name = "phieq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Root seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for report.json and CSV traces.
    #[arg(long, default_value = "phieq-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON config file.
    Run {
        config: PathBuf,
        /// Output directory (defaults to <config stem>-out next to the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expected fixed-point solvers on a centered ball.
    Fp {
        solver: FpSolver,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// `identity`, `contraction`, inline JSON, or a JSON file.
        #[arg(long, default_value = "contraction")]
        map: String,
        /// Contraction center, comma separated (defaults to the origin).
        #[arg(long, value_delimiter = ',')]
        center: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Equilibrium computation.
    Eq {
        #[command(subcommand)]
        action: EqAction,
    },
    /// Phi-regret learning.
    Regret {
        #[command(subcommand)]
        action: RegretAction,
    },
    /// Swap-regret lower-bound harness.
    Lb {
        #[command(subcommand)]
        action: LbAction,
    },
    /// Reductions from contractions and their verifiers.
    Reduce {
        #[arg(long)]
        kind: ReduceKind,
        /// `contraction`, inline JSON, or a JSON file.
        #[arg(long, default_value = "contraction")]
        map: String,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, value_delimiter = ',')]
        center: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        #[arg(long, default_value = "l2")]
        norm: NormKind,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Distribution over pairs (x, y) as JSON [{"weight":..,"point":[..]}].
        #[arg(long)]
        check: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Eah,
    Fptas,
}

#[derive(Subcommand)]
enum EqAction {
    Solve {
        /// Quadratic game spec (JSON).
        #[arg(long)]
        game: PathBuf,
        /// Monomial degree of the feature map (1 = affine).
        #[arg(long, default_value_t = 1)]
        degree: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value = "eah")]
        method: Method,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        audit_budget: usize,
        #[arg(long)]
        no_audit: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AdversaryKind {
    Alternating,
    RandomLinear,
}

#[derive(Subcommand)]
enum RegretAction {
    Run {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value = "alternating")]
        adversary: AdversaryKind,
        #[arg(long)]
        eta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerKind {
    Fixed,
    Uniform,
    FollowTheLeader,
}

#[derive(Subcommand)]
enum LbAction {
    Run {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value = "fixed")]
        learner: LearnerKind,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn ball(dim: usize, radius: f64) -> BodySpec {
    BodySpec::Ball { center: vec![0.0; dim], radius }
}

fn parse_map(s: &str, dim: usize, center: Option<Vec<f64>>, gamma: f64) -> Result<MapSpec, HarnessError> {
    match s {
        "identity" => Ok(MapSpec::Identity { dim }),
        "contraction" => Ok(MapSpec::Contraction { center: center.unwrap_or_else(|| vec![0.0; dim]), gamma }),
        _ => {
            let text = if s.trim_start().starts_with('{') {
                s.to_string()
            } else {
                std::fs::read_to_string(s).map_err(|e| HarnessError::Io { path: s.into(), message: e.to_string() })?
            };
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("map spec: {e}")))
        }
    }
}

fn config(seed: u64, experiment: Experiment) -> Config {
    Config { version: CONFIG_VERSION, seed, name: None, experiment, assertions: Vec::new() }
}

fn build(cmd: Command) -> Result<(Config, PathBuf, PathBuf), HarnessError> {
    let cwd = PathBuf::from(".");
    Ok(match cmd {
        Command::Run { config, out } => {
            let parsed = load_config(&config)?;
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let out = out.unwrap_or_else(|| {
                let stem = config.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
                base.join(format!("{stem}-out"))
            });
            (parsed, base, out)
        }
        Command::Fp { solver, dim, radius, map, center, gamma, eps, delta, common } => {
            let map = parse_map(&map, dim, center, gamma)?;
            let c = FpConfig { solver, body: ball(dim, radius), map, eps, gamma: None, delta, x0: None, potential: None };
            (config(common.seed, Experiment::Fp(c)), cwd, common.out)
        }
        Command::Eq { action: EqAction::Solve { game, degree, eps, method, rounds, max_iterations, audit_budget, no_audit, common } } => {
            let text = std::fs::read_to_string(&game)
                .map_err(|e| HarnessError::Io { path: game.display().to_string(), message: e.to_string() })?;
            let game: QuadraticGameSpec =
                serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("game spec: {e}")))?;
            let features = if degree == 1 { FeatureSpec::Affine } else { FeatureSpec::Monomials { degree } };
            let method = match method {
                Method::Eah => EqMethod::Eah,
                Method::Fptas => EqMethod::Fptas,
            };
            let c = EqConfig {
                game,
                features,
                eps,
                method,
                max_iterations,
                rounds,
                audit: Some(!no_audit),
                audit_budget,
                tolerance: None,
            };
            (config(common.seed, Experiment::Eq(c)), cwd, common.out)
        }
        Command::Regret { action: RegretAction::Run { dim, horizon, adversary, eta, common } } => {
            let adversary = match adversary {
                AdversaryKind::Alternating => {
                    let mut c = vec![0.0; dim];
                    c[0] = 1.0;
                    AdversarySpec::Alternating { c }
                }
                AdversaryKind::RandomLinear => AdversarySpec::RandomLinear { count: 16, norm: 1.0 },
            };
            let c = RegretConfig {
                body: ball(dim, 1.0),
                features: FeatureSpec::Affine,
                horizon,
                adversary,
                eta,
                eps: None,
                grad_bound: None,
                samples: None,
            };
            (config(common.seed, Experiment::Regret(c)), cwd, common.out)
        }
        Command::Lb { action: LbAction::Run { k, n, actions, horizon, learner, seeds, common } } => {
            let learner = match learner {
                LearnerKind::Fixed => LbLearnerSpec::Fixed,
                LearnerKind::Uniform => LbLearnerSpec::Uniform { count: k },
                LearnerKind::FollowTheLeader => LbLearnerSpec::FollowTheLeader,
            };
            let c = LbConfig { k, n, total_actions: actions, horizon, learner, seeds, c: 1.0, workers: None };
            (config(common.seed, Experiment::Lb(c)), cwd, common.out)
        }
        Command::Reduce { kind, map, dim, radius, center, gamma, norm, eps, check, common } => {
            let map = parse_map(&map, dim, center, gamma)?;
            let c = ReduceConfig { kind, map, body: ball(dim, radius), norm, gamma: None, eps, check, distribution: None };
            (config(common.seed, Experiment::Reduce(c)), cwd, common.out)
        }
    })
}

fn print_report(report: &Report, out: &Path) -> std::io::Result<()> {
    let mut w = std::io::stdout().lock();
    writeln!(w, "{} (config {}, seed {})", report.command, &report.config_hash[..12], report.seed)?;
    for (k, v) in &report.metrics {
        writeln!(w, "  {k} = {v}")?;
    }
    for a in &report.assertions {
        writeln!(w, "  [{}] {}", if a.pass { "PASS" } else { "FAIL" }, a.name)?;
    }
    writeln!(w, "  report: {}", out.join("report.json").display())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build(cli.command).and_then(|(config, base, out)| run_parsed(&config, &base, &out).map(|r| (r, out)));
    match result {
        Ok((report, out)) => {
            // A closed stdout is not a failure of the run.
            let _ = print_report(&report, &out);
            if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed assertions: {}", report.failed().join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("phieq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
