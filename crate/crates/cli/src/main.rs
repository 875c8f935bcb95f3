//! Command-line experiment harness: calibrate the simulated environment,
//! train and evaluate strategy-selection policies, run baselines and weight
//! sweeps, all under reproducible per-run directories.
//!
//! Exit codes: 0 success, 1 usage, 2 config, 3 training divergence,
//! 4 backend transport.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;
use error::CliResult;

#[derive(Parser)]
#[command(name = "prompt-policy", version, about = "Cost-aware prompt strategy selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// Experiment config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainOverrides {
    /// Accuracy weight of the composite reward.
    #[arg(long)]
    alpha: Option<f64>,
    /// Cost weight of the composite reward.
    #[arg(long)]
    beta: Option<f64>,
    /// Training episodes (0 keeps the initial policy).
    #[arg(long)]
    episodes: Option<usize>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct EvalOverrides {
    /// Evaluation rollout size.
    #[arg(long)]
    eval_queries: Option<u64>,
    /// Evaluation seed (selects the query family).
    #[arg(long)]
    eval_seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve success-curve thresholds so fixed-strategy aggregates hit their
    /// targets; writes the calibrated config and a verification report.
    Calibrate {
        #[command(flatten)]
        config: ConfigArg,
        /// Where to write the calibrated config.
        #[arg(long, default_value = "runs/calibrated.toml")]
        out: PathBuf,
    },
    /// Train a policy and evaluate it.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "runs/train")]
        run_dir: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[command(flatten)]
        eval: EvalOverrides,
    },
    /// Evaluate a stored checkpoint.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        /// Checkpoint file produced by `train` or `sweep`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "runs/eval")]
        run_dir: PathBuf,
        /// Sample from the policy head instead of taking the argmax.
        #[arg(long)]
        sampled: bool,
        #[command(flatten)]
        eval: EvalOverrides,
    },
    /// Evaluate fixed-strategy and threshold-heuristic baselines.
    Baseline {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "runs/baseline")]
        run_dir: PathBuf,
        /// Evaluate fixed ZS / CoT / SC plus the tuned heuristic.
        #[arg(long)]
        all: bool,
        /// Evaluate one fixed strategy by name.
        #[arg(long)]
        strategy: Option<String>,
        /// Evaluate the tuned threshold heuristic.
        #[arg(long)]
        heuristic: bool,
        #[command(flatten)]
        eval: EvalOverrides,
    },
    /// Train one policy per reward-weight ratio and emit Pareto data.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "runs/sweep")]
        run_dir: PathBuf,
        /// Comma-separated alpha:beta ratios, e.g. `2:1,10:1,100:1`.
        #[arg(long, default_value = "2:1,10:1,100:1,1000:1")]
        ratios: String,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[command(flatten)]
        eval: EvalOverrides,
    },
    /// Print the calibrated success-curve parameters.
    DumpProfiles {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn apply_train_overrides(config: &mut FileConfig, o: &TrainOverrides) {
    if let Some(alpha) = o.alpha {
        config.ppo.alpha = alpha;
    }
    if let Some(beta) = o.beta {
        config.ppo.beta = beta;
    }
    if let Some(episodes) = o.episodes {
        config.ppo.episodes = episodes;
    }
    if let Some(seed) = o.seed {
        config.ppo.seed = seed;
    }
}

fn apply_eval_overrides(config: &mut FileConfig, o: &EvalOverrides) {
    if let Some(n) = o.eval_queries {
        config.eval.n_queries = n;
    }
    if let Some(seed) = o.eval_seed {
        config.eval.eval_seed = seed;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Calibrate { config, out } => {
            commands::cmd_calibrate(config.config.as_deref(), &out)
        }
        Command::Train {
            config,
            run_dir,
            overrides,
            eval,
        } => {
            let mut file = FileConfig::load_or_default(config.config.as_deref())?;
            apply_train_overrides(&mut file, &overrides);
            apply_eval_overrides(&mut file, &eval);
            commands::cmd_train(&file, &run_dir)
        }
        Command::Eval {
            config,
            checkpoint,
            run_dir,
            sampled,
            eval,
        } => {
            let mut file = FileConfig::load_or_default(config.config.as_deref())?;
            apply_eval_overrides(&mut file, &eval);
            let sampled = sampled || file.eval.sampled;
            commands::cmd_eval(&file, &checkpoint, &run_dir, sampled)
        }
        Command::Baseline {
            config,
            run_dir,
            all,
            strategy,
            heuristic,
            eval,
        } => {
            let mut file = FileConfig::load_or_default(config.config.as_deref())?;
            apply_eval_overrides(&mut file, &eval);
            commands::cmd_baseline(&file, &run_dir, all, strategy.as_deref(), heuristic)
        }
        Command::Sweep {
            config,
            run_dir,
            ratios,
            overrides,
            eval,
        } => {
            let mut file = FileConfig::load_or_default(config.config.as_deref())?;
            apply_train_overrides(&mut file, &overrides);
            apply_eval_overrides(&mut file, &eval);
            let ratios = commands::parse_ratios(&ratios)?;
            commands::cmd_sweep(&file, &run_dir, &ratios)
        }
        Command::DumpProfiles { config } => {
            let file = FileConfig::load_or_default(config.config.as_deref())?;
            commands::cmd_dump_profiles(&file)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Version/help requests are success paths; anything else is a
            // usage error (exit 1).
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
