use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use twinfid_core::bsm::{compute_dt_bsm, BsmConfig};
use twinfid_core::envgen::{build_real_env, generate_candidates, EnvSpec};
use twinfid_core::estimation::{
    estimate_mdp, sample_sweep, sample_trajectories, Behavior, SweepOptions, SweepPoint,
};
use twinfid_core::harness::{even_odd_split, fit_bound, select, ExperimentRun, Strategy};
use twinfid_core::mdp::{
    accurate_policy_values, optimal_values, q_learning, suboptimality, uniform_distribution, QLearningConfig,
};
use twinfid_core::seed::child_seed;
use twinfid_core::stats::sign_test_p_value;
use twinfid_core::Policy;

use twinfid::config::{RunConfig, SolverName};
use twinfid::error::{IoError, Result};
use twinfid::formats::{
    load_ledger, load_mdp, load_trajectories, save_mdp, save_trajectories, LedgerRow, MetricFile, PoolEntry,
    PoolManifest,
};
use twinfid::fsio::{read_json, to_json_bytes, write_atomic, write_json};
use twinfid::pipeline::run_pipeline;
use twinfid::plot::{emit_plot_data, PlotKind};

#[derive(Parser)]
#[command(name = "twinfid", version, about = "Digital-twin fidelity screening for reinforcement learning")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Convergence tolerance (metric tolerance for `bsm`/`sweep`, planning
    /// tolerance otherwise).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output file, or directory for `gen` and `experiment`. Stdout when
    /// omitted for single-file commands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Inner transport solver for the metric.
    #[arg(long, global = true, value_enum)]
    solver: Option<Solver>,
    /// Run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Treat non-convergence as an error (exit code 3).
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Exact,
    Sinkhorn,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainerArg {
    Exact,
    QLearning,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Evaluation,
    Reward,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Cost,
    Scatter,
    PrefilterBars,
}

#[derive(Subcommand)]
enum Command {
    /// Build the environment and a candidate pool.
    Gen {
        /// Environment spec JSON; built-in default when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 120)]
        pool: usize,
    },
    /// Sample uniform-random (or policy-driven) trajectories.
    Sample {
        env: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        episode_length: usize,
        /// Policy JSON to follow instead of uniform-random actions.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Estimate an MDP from a trajectory file.
    Estimate {
        trajectories: PathBuf,
        /// MDP file whose state/action counts and discount to use.
        #[arg(long)]
        like: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
    },
    /// Pairwise metric between a real and a twin MDP.
    Bsm {
        real: PathBuf,
        dt: PathBuf,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
    },
    /// Train a policy inside an MDP.
    Train {
        mdp: PathBuf,
        #[arg(long, value_enum, default_value_t = TrainerArg::Exact)]
        trainer: TrainerArg,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
    },
    /// Evaluate a policy in an environment.
    Deploy {
        env: PathBuf,
        policy: PathBuf,
    },
    /// Full pre-filtering experiment.
    Experiment,
    /// Select a subset of a ledger.
    Select {
        ledger: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Evaluation)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0.05)]
        ratio: f64,
    },
    /// Cost report or plot data from a ledger.
    Report {
        ledger: PathBuf,
        #[arg(long, value_enum)]
        kind: ReportKind,
        /// Subset file from `select` (cost reports).
        #[arg(long)]
        subset: Option<PathBuf>,
        /// Ratios for the pre-filtering bars.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25")]
        ratios: Vec<f64>,
    },
    /// Fit the additive bound on even rows, hold out odd rows.
    FitBound {
        #[arg(required = true)]
        ledgers: Vec<PathBuf>,
    },
    /// Mismatch of empirical MDPs against sample size.
    Sweep {
        env: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        sizes: Vec<usize>,
        /// Number of sampling seeds, derived from the root seed.
        #[arg(long, default_value_t = 20)]
        n_seeds: usize,
        #[arg(long, default_value_t = 10)]
        episode_length: usize,
    },
}

#[derive(Serialize)]
struct SubsetFile {
    strategy: String,
    ratio: f64,
    seed: u64,
    candidate_ids: Vec<usize>,
    rows: Vec<usize>,
}

#[derive(Serialize)]
struct DeployReport {
    value: f64,
    optimal_value: f64,
    suboptimality: f64,
}

#[derive(Serialize)]
struct SweepReport {
    seeds: Vec<u64>,
    points: Vec<SweepPointOut>,
    /// Seeds where the largest size beats the smallest.
    improved: usize,
    sign_test_p_value: f64,
}

#[derive(Serialize)]
struct SweepPointOut {
    n_steps: usize,
    median: f64,
    values: Vec<f64>,
}

impl From<SweepPoint> for SweepPointOut {
    fn from(p: SweepPoint) -> Self {
        Self { n_steps: p.n_steps, median: p.median, values: p.values }
    }
}

/// Outcome of a command that finished but may carry a convergence warning.
struct Done {
    warning: Option<String>,
}

impl Done {
    fn ok() -> Self {
        Done { warning: None }
    }
}

struct Ctx {
    global: Global,
    config: RunConfig,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.global.seed.unwrap_or(self.config.seeds[0])
    }

    fn planning_tol(&self) -> f64 {
        self.global.tol.unwrap_or(self.config.planning_tol)
    }

    fn bsm(&self, max_iter: usize) -> BsmConfig {
        let solver = match self.global.solver {
            Some(Solver::Exact) => SolverName::Exact,
            Some(Solver::Sinkhorn) => SolverName::Sinkhorn,
            None => self.config.solver,
        };
        BsmConfig { tol: self.global.tol.unwrap_or(self.config.metric_tol), max_iter, solver: solver.inner() }
    }

    fn emit(&self, bytes: &[u8]) -> Result<()> {
        match &self.global.out {
            Some(p) => write_atomic(p, bytes),
            None => {
                use std::io::Write;
                std::io::stdout().write_all(bytes).map_err(|e| IoError::Format(e.to_string()))
            }
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.global.out.clone().or_else(|| self.config.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn load_spec(path: Option<&Path>, fallback: &RunConfig) -> Result<EnvSpec> {
    match path {
        Some(p) => read_json(p),
        None => fallback.env_spec(),
    }
}

fn ledger_runs(path: &Path) -> Result<(Vec<LedgerRow>, Vec<ExperimentRun>)> {
    let rows = load_ledger(path)?;
    let runs = rows.iter().map(LedgerRow::to_run).collect();
    Ok((rows, runs))
}

fn run(ctx: &Ctx, command: &Command) -> Result<Done> {
    match command {
        Command::Gen { spec, pool } => {
            let spec = load_spec(spec.as_deref(), &ctx.config)?;
            let dir = ctx.out_dir();
            let real = build_real_env(&spec)?;
            let seed = ctx.seed();
            let candidates = generate_candidates(&real, &spec, *pool, child_seed(seed, "pool", 0))?;
            save_mdp(&dir.join("real.json"), &real)?;
            let mut entries = Vec::with_capacity(candidates.len());
            for c in &candidates {
                let file = PathBuf::from("candidates").join(format!("{:04}.json", c.id));
                save_mdp(&dir.join(&file), &c.mdp)?;
                entries.push(PoolEntry {
                    id: c.id,
                    family: c.recipe.family().into(),
                    params: c.recipe.params(),
                    seed: c.seed,
                    recipe: c.recipe.clone(),
                    file,
                });
            }
            let manifest = PoolManifest { seed, spec, real: "real.json".into(), candidates: entries };
            write_json(&dir.join("pool.json"), &manifest)?;
            Ok(Done::ok())
        }
        Command::Sample { env, steps, episode_length, policy } => {
            let env = load_mdp(env)?;
            let behavior = match policy {
                Some(p) => Behavior::Policy(read_json::<Policy>(p)?),
                None => Behavior::UniformRandom,
            };
            let batch =
                sample_trajectories(&env, &behavior, *steps, *episode_length, child_seed(ctx.seed(), "sample", 0))?;
            match &ctx.global.out {
                Some(p) => save_trajectories(p, &batch)?,
                None => ctx.emit(&twinfid::formats::trajectories_to_bytes(&batch))?,
            }
            Ok(Done::ok())
        }
        Command::Estimate { trajectories, like, kappa } => {
            let batch = load_trajectories(trajectories)?;
            let like = load_mdp(like)?;
            let est = estimate_mdp(&batch, like.n_states(), like.n_actions(), like.gamma(), *kappa)?;
            ctx.emit(&to_json_bytes(&twinfid::formats::MdpFile::from_mdp(&est)))?;
            Ok(Done::ok())
        }
        Command::Bsm { real, dt, max_iter } => {
            let (real, dt) = (load_mdp(real)?, load_mdp(dt)?);
            let metric = compute_dt_bsm(&real, &dt, &ctx.bsm(*max_iter))?;
            ctx.emit(&to_json_bytes(&MetricFile::from_metric(&metric, None)?))?;
            let warning = (!metric.converged).then(|| {
                format!("metric stopped after {} sweeps with residual {}", metric.iterations, metric.residual)
            });
            Ok(Done { warning })
        }
        Command::Train { mdp, trainer, episodes, horizon } => {
            let mdp = load_mdp(mdp)?;
            let policy = match trainer {
                TrainerArg::Exact => optimal_values(&mdp, ctx.planning_tol())?.policy,
                TrainerArg::QLearning => {
                    let cfg = QLearningConfig::new(*episodes, *horizon, child_seed(ctx.seed(), "q_learning", 0));
                    q_learning(&mdp, &cfg)?.policy
                }
            };
            ctx.emit(&to_json_bytes(&policy))?;
            Ok(Done::ok())
        }
        Command::Deploy { env, policy } => {
            let env = load_mdp(env)?;
            let policy: Policy = read_json(policy)?;
            policy.check(&env)?;
            let tol = ctx.planning_tol();
            let rho = uniform_distribution(env.n_states());
            let value = accurate_policy_values(&env, &policy, tol)?.weighted(&rho);
            let optimal_value = optimal_values(&env, tol)?.values.weighted(&rho);
            let suboptimality = suboptimality(&env, &policy, &rho, tol)?;
            ctx.emit(&to_json_bytes(&DeployReport { value, optimal_value, suboptimality }))?;
            Ok(Done::ok())
        }
        Command::Experiment => {
            let mut cfg = ctx.config.clone();
            cfg.planning_tol = ctx.planning_tol();
            if let Some(s) = ctx.global.solver {
                cfg.solver = match s {
                    Solver::Exact => SolverName::Exact,
                    Solver::Sinkhorn => SolverName::Sinkhorn,
                };
            }
            let seeds = match ctx.global.seed {
                Some(s) => vec![s],
                None => cfg.seeds.clone(),
            };
            let spec = cfg.env_spec()?;
            let dir = ctx.out_dir();
            let mut unconverged = 0;
            for &seed in &seeds {
                let outcome = run_pipeline(&cfg, &spec, seed)?;
                unconverged += outcome.unconverged_metrics.len();
                let target = if seeds.len() == 1 { dir.clone() } else { dir.join(format!("seed-{seed}")) };
                outcome.write(&target, &cfg)?;
            }
            let warning = (unconverged > 0).then(|| format!("{unconverged} candidate metrics did not converge"));
            Ok(Done { warning })
        }
        Command::Select { ledger, strategy, ratio } => {
            let (_, runs) = ledger_runs(ledger)?;
            let seed = ctx.seed();
            let (name, strategy) = match strategy {
                StrategyArg::Evaluation => ("evaluation", Strategy::Evaluation),
                StrategyArg::Reward => ("reward", Strategy::Reward),
                StrategyArg::Random => ("random", Strategy::Random(child_seed(seed, "random_select", 0))),
            };
            let rows = select(&runs, strategy, *ratio)?;
            let file = SubsetFile {
                strategy: name.into(),
                ratio: *ratio,
                seed,
                candidate_ids: rows.iter().map(|&i| runs[i].candidate_id).collect(),
                rows,
            };
            ctx.emit(&to_json_bytes(&file))?;
            Ok(Done::ok())
        }
        Command::Report { ledger, kind, subset, ratios } => {
            let seed_for_random = child_seed(ctx.seed(), "random_select", 0);
            let bytes = match kind {
                ReportKind::Scatter => emit_plot_data(ledger, PlotKind::Scatter, ratios, seed_for_random)?,
                ReportKind::PrefilterBars => {
                    emit_plot_data(ledger, PlotKind::PrefilterBars, ratios, seed_for_random)?
                }
                ReportKind::Cost => {
                    let (_, runs) = ledger_runs(ledger)?;
                    let rows: Vec<usize> = match subset {
                        Some(p) => {
                            let v: serde_json::Value = read_json(p)?;
                            serde_json::from_value(v["rows"].clone()).map_err(|source| IoError::Json {
                                path: p.clone(),
                                source,
                            })?
                        }
                        None => (0..runs.len()).collect(),
                    };
                    let v_star = twinfid::plot::ledger_v_star(&runs);
                    to_json_bytes(&twinfid_core::harness::cost_report(&runs, &rows, v_star)?)
                }
            };
            ctx.emit(&bytes)?;
            Ok(Done::ok())
        }
        Command::FitBound { ledgers } => {
            let mut runs = Vec::new();
            for l in ledgers {
                runs.extend(ledger_runs(l)?.1);
            }
            let (fit, holdout) = even_odd_split(runs.len());
            ctx.emit(&to_json_bytes(&fit_bound(&runs, &fit, &holdout)?))?;
            Ok(Done::ok())
        }
        Command::Sweep { env, sizes, n_seeds, episode_length } => {
            let env = load_mdp(env)?;
            let root = ctx.seed();
            let seeds: Vec<u64> = (0..*n_seeds as u64).map(|i| child_seed(root, "sweep", i)).collect();
            let options = SweepOptions { episode_length: *episode_length, kappa: 0.0, bsm: ctx.bsm(1000) };
            let points = sample_sweep(&env, &env, sizes, &seeds, &options)?;
            let (first, last) = (&points[0], &points[points.len() - 1]);
            let improved = first.values.iter().zip(&last.values).filter(|(a, b)| b < a).count();
            let report = SweepReport {
                seeds,
                improved,
                sign_test_p_value: sign_test_p_value(improved, *n_seeds),
                points: points.into_iter().map(Into::into).collect(),
            };
            ctx.emit(&to_json_bytes(&report))?;
            Ok(Done::ok())
        }
    }
}

fn report_error(e: &IoError) {
    let payload = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{payload}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.global.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            report_error(&e);
            return ExitCode::from(2);
        }
    };
    let ctx = Ctx { global: cli.global, config };
    match run(&ctx, &cli.command) {
        Ok(Done { warning: None }) => ExitCode::SUCCESS,
        Ok(Done { warning: Some(w) }) => {
            let payload = serde_json::json!({ "warning": { "kind": "not_converged", "message": w } });
            eprintln!("{payload}");
            if ctx.global.strict {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            report_error(&e);
            ExitCode::from(if e.is_not_converged() { 3 } else { 2 })
        }
    }
}
