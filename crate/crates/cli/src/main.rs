#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use formation::config::ExperimentConfig;
use formation::eval::{
    compare_rewards, export_metrics, export_trace, find_scenario, import_trace, run_scenario,
    Metrics,
};
use formation::learner::chain_oracle_check;
use formation::net::{gradient_check_nets, load_weights, save_weights, ModelKind, Network, WeightMeta, DEFAULT_ARCH};

const GRADCHECK_TOL: f64 = 1e-4;
const ORACLE_TABULAR_TOL: f64 = 0.01;
const ORACLE_LEARNED_TOL: f64 = 0.05;

#[derive(Parser)]
#[command(name = "formation", version, about = "Train and evaluate leader-follower formation policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a reach or keep model.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        config: PathBuf,
        /// Weight file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Overrides the episode count of the config.
        #[arg(long)]
        episodes: Option<u64>,
        /// Per-episode stats CSV; defaults to the weight path with a `.stats.csv` extension.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Run a named scenario with a reach and a keep model.
    Eval {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        reach: PathBuf,
        #[arg(long)]
        keep: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Trace CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Config supplying world settings and scenarios; built-in defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Number of final steps the error summary covers.
        #[arg(long, default_value_t = 800)]
        tail: u64,
    },
    /// Train keep models under each configured reward and compare time in radius.
    CompareRewards {
        #[arg(long)]
        config: PathBuf,
        /// Directory for per-run stats and the series CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the network gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        nets: usize,
    },
    /// DDQN and tabular Q-learning against value iteration on a chain MDP.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Load a trace file, summarize it and optionally write it back out.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad input, configuration or I/O.
    Usage(String),
    /// The command ran but a checked property did not hold.
    Property(String),
}

impl From<formation::Error> for Failure {
    fn from(e: formation::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Property(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Train {
            model,
            config,
            out,
            seed,
            episodes,
            stats,
        } => train(model, &config, &out, seed, episodes, stats),
        Command::Eval {
            scenario,
            reach,
            keep,
            seed,
            out,
            config,
            metrics,
            tail,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            eval(&cfg, &scenario, &reach, &keep, seed, &out, metrics.as_deref(), tail)
        }
        Command::CompareRewards { config, out } => compare(&config, &out),
        Command::Gradcheck { seed, nets } => gradcheck(seed, nets),
        Command::OracleCheck { seed } => oracle_check(seed),
        Command::Replay { trace, out } => replay(&trace, out.as_deref()),
    }
}

fn train(
    model: ModelKind,
    config: &Path,
    out: &Path,
    seed: u64,
    episodes: Option<u64>,
    stats: Option<PathBuf>,
) -> Outcome {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(n) = episodes {
        cfg.train.episodes = n;
        cfg.validate()?;
    }
    let mut tc = cfg.train_config(model, seed, None);
    tc.stats_path = Some(stats.unwrap_or_else(|| out.with_extension("stats.csv")));
    let outcome = cfg.train_model(&tc)?;
    let meta = WeightMeta {
        model_kind: model,
        seed,
        episodes: tc.episodes,
    };
    save_weights(&outcome.network, cfg.world.d_max, meta, out)?;
    let s = &outcome.stats;
    let last: usize = s.episodes.iter().rev().take(10).map(|e| e.time_in_radius).sum();
    println!(
        "trained {} model: {} episodes, {} env steps, {} gradient steps",
        model.as_str(),
        s.episodes.len(),
        s.env_steps,
        s.gradient_steps
    );
    println!("time in radius, last 10 episodes: {last}");
    println!("weights: {}", out.display());
    Ok(())
}

/// Loads a weight file for the `expected` role, checking it was trained
/// against the configured observation scaling.
fn load_model(path: &Path, expected: ModelKind, cfg: &ExperimentConfig) -> Result<Arc<Network>, Failure> {
    let wf = load_weights(path, &DEFAULT_ARCH)?;
    if wf.meta.model_kind != expected {
        return Err(Failure::Usage(format!(
            "{} holds a {} model, expected {}",
            path.display(),
            wf.meta.model_kind.as_str(),
            expected.as_str()
        )));
    }
    if wf.d_max != cfg.world.d_max {
        return Err(Failure::Usage(format!(
            "{} was trained with d_max {}, config has {}",
            path.display(),
            wf.d_max,
            cfg.world.d_max
        )));
    }
    Ok(Arc::new(wf.network))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    cfg: &ExperimentConfig,
    name: &str,
    reach: &Path,
    keep: &Path,
    seed: u64,
    out: &Path,
    metrics_path: Option<&Path>,
    tail: u64,
) -> Outcome {
    let scenario = find_scenario(&cfg.scenarios, name)?;
    let reach = load_model(reach, ModelKind::Reach, cfg)?;
    let keep = load_model(keep, ModelKind::Keep, cfg)?;
    let run = run_scenario(scenario, reach, keep, seed, &cfg.eval_context())?;
    export_trace(&run.trace, out)?;
    let from = (scenario.steps + 1).saturating_sub(tail.max(1)) as usize;
    let metrics = Metrics::from_trace(&run.trace, cfg.world.robot_radius, from)?;
    if let Some(path) = metrics_path {
        export_metrics(&metrics, path)?;
    }
    println!("scenario {name}, seed {seed}, {} steps", scenario.steps);
    print_followers(&metrics);
    println!(
        "collision steps: {}, min separation {:.4} m",
        run.collision_steps, run.min_separation
    );
    println!("trace: {}", out.display());
    Ok(())
}

fn print_followers(metrics: &Metrics) {
    for f in &metrics.followers {
        println!(
            "follower {}: mean error {:.4} m, max {:.4} m, final {:.4} m",
            f.agent_id, f.mean_error, f.max_error, f.final_error
        );
    }
}

fn compare(config: &Path, out: &Path) -> Outcome {
    let cfg = ExperimentConfig::load(config)?;
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out.display())))?;
    let report = compare_rewards(&cfg, Some(out))?;
    report.write_series(&out.join("series.csv"))?;
    for a in &report.arms {
        println!("{} seed {}: final window {}", a.reward, a.seed, a.final_window());
    }
    let has_both = ["keep", "state-only"].iter().all(|r| cfg.compare.arms.iter().any(|a| a == r));
    if !has_both {
        return Ok(());
    }
    let seeds = &cfg.compare.seeds;
    let wins = seeds
        .iter()
        .filter(|&&s| {
            let keep = report.arm("keep", s).map_or(0, |a| a.final_window());
            let state = report.arm("state-only", s).map_or(0, |a| a.final_window());
            keep >= state
        })
        .count();
    println!("state-action reward at least as good in {wins} of {} seeds", seeds.len());
    if 2 * wins <= seeds.len() {
        return Err(Failure::Property(format!(
            "state-action reward ahead in only {wins} of {} seeds",
            seeds.len()
        )));
    }
    Ok(())
}

fn gradcheck(seed: u64, nets: usize) -> Outcome {
    let errors = gradient_check_nets(seed, nets);
    for (k, e) in errors.iter().enumerate() {
        println!("net {k}: max relative error {e:.3e}");
    }
    let worst = errors.iter().copied().fold(0.0, f64::max);
    println!("worst: {worst:.3e} (limit {GRADCHECK_TOL:e})");
    if !(worst < GRADCHECK_TOL) {
        return Err(Failure::Property(format!("gradient error {worst:.3e}")));
    }
    Ok(())
}

fn oracle_check(seed: u64) -> Outcome {
    let r = chain_oracle_check(seed)?;
    println!("tabular Q-learning max error: {:.4}", r.tabular_error);
    println!("DDQN max Q error: {:.4}", r.learned_error);
    println!("DDQN greedy policy matches: {}", r.greedy_matches);
    if !r.passed(ORACLE_TABULAR_TOL, ORACLE_LEARNED_TOL) {
        return Err(Failure::Property("chain MDP oracle mismatch".into()));
    }
    Ok(())
}

fn replay(path: &Path, out: Option<&Path>) -> Outcome {
    let trace = import_trace(path)?;
    let ids = trace.agent_ids();
    println!("{} steps, {} agents", trace.num_steps(), ids.len());
    if trace.num_steps() > 0 {
        // radius only matters for the collision count
        let metrics = Metrics::from_trace(&trace, formation::env::WorldConfig::default().robot_radius, 0)?;
        print_followers(&metrics);
        println!("collision steps: {}", metrics.collision_steps);
    }
    if let Some(out) = out {
        export_trace(&trace, out)?;
    }
    Ok(())
}
