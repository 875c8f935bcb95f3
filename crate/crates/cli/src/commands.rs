//! Subcommand implementations. Every command resolves its config (file plus
//! flag overrides), snapshots it with a manifest into the run directory
//! before doing work, and writes its outputs under that directory.

use std::io::Write;
use std::path::Path;

use prompt_policy::backend::SyntheticPort;
use prompt_policy::baselines::{fixed_policy, heuristic_policy, tune_threshold};
use prompt_policy::checkpoint::Checkpoint;
use prompt_policy::eval::{
    pareto_filter, pareto_sweep_detailed, Evaluator, GreedyNetPolicy, ParetoPoint, RunMetrics,
    SampledNetPolicy,
};
use prompt_policy::ppo::train_with;
use prompt_policy::synthenv::{calibrate, mean_success_probability, EnvConfig};

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::prepare_run_dir;

/// Episodes between last-good checkpoint refreshes during training.
const CHECKPOINT_EVERY: usize = 25;

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body)
        .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

/// Format usage shares above one tenth of a percent as `name:pct%`.
fn usage_summary(env: &EnvConfig, metrics: &RunMetrics) -> String {
    let n = metrics.n_queries as f64;
    let mut parts = Vec::new();
    for (strategy, &count) in env.library.iter().zip(&metrics.action_histogram) {
        let share = count as f64 / n * 100.0;
        if share >= 0.1 {
            parts.push(format!("{}:{:.1}%", strategy.name, share));
        }
    }
    if parts.is_empty() {
        "-".to_string()
    } else {
        parts.join(",")
    }
}

fn results_table(run_id: &str, env: &EnvConfig, rows: &[RunMetrics]) -> String {
    let mut out = format!("# run_id={run_id}\n");
    out.push_str("method\tmacro_accuracy\tmean_cost\tefficiency_gain_vs_sc\tn_queries\tusage\n");
    for m in rows {
        out.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\n",
            m.policy_label,
            m.macro_accuracy,
            m.mean_cost,
            m.efficiency_gain_vs_ref,
            m.n_queries,
            usage_summary(env, m),
        ));
    }
    out
}

/// Solve thresholds for every strategy and write the calibrated config plus
/// a verification report of achieved vs target mean accuracies.
pub fn cmd_calibrate(config_path: Option<&Path>, out: &Path) -> CliResult<()> {
    let mut config = FileConfig::load_or_default(config_path)?;
    let library = config.library()?;
    let env = calibrate(
        &library,
        &config.templates(),
        &config.targets(),
        config.feature_config(),
        config.env.master_seed,
    )
    .map_err(CliError::from_core_run)?;

    for (entry, profile) in config.strategies.iter_mut().zip(&env.profiles) {
        entry.threshold = Some(profile.threshold);
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(&format!("creating {}", parent.display()), e))?;
        }
    }
    let snapshot = config.to_toml();
    write_file(out, &snapshot)?;

    let run_id = crate::manifest::run_id("calibrate", &snapshot);
    let mut report = format!("# run_id={run_id}\n");
    report.push_str("strategy\ttarget_accuracy\tachieved_expectation\tresidual\tthreshold\n");
    for (entry, profile) in config.strategies.iter().zip(&env.profiles) {
        let achieved = mean_success_probability(profile, env.difficulty_distribution);
        report.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:+.2e}\t{:.6}\n",
            entry.name,
            entry.accuracy_target,
            achieved,
            achieved - entry.accuracy_target,
            profile.threshold,
        ));
    }
    let report_path = out.with_extension("report.tsv");
    write_file(&report_path, &report)?;
    println!("calibrated config -> {}", out.display());
    println!("verification report -> {}", report_path.display());
    print!("{report}");
    Ok(())
}

/// Train a policy, streaming the episode log and keeping a last-good
/// checkpoint, then evaluate the final policy.
pub fn cmd_train(config: &FileConfig, run_dir: &Path) -> CliResult<()> {
    let env = config.env_config()?;
    let ppo_config = config.ppo_config()?;
    let snapshot = config.to_toml();
    let run_id = crate::manifest::run_id("train", &snapshot);
    let checkpoint_name = format!("checkpoint-{run_id}.ppnc");
    let log_name = format!("episodes-{run_id}.jsonl");
    prepare_run_dir(
        run_dir,
        "train",
        &snapshot,
        env.master_seed,
        vec![
            checkpoint_name.clone(),
            log_name.clone(),
            "results.tsv".into(),
        ],
    )?;

    let checkpoint_path = run_dir.join(&checkpoint_name);
    let log_path = run_dir.join(&log_name);
    let mut log = std::fs::File::create(&log_path)
        .map_err(|e| CliError::io("creating episode log", e))?;
    writeln!(log, "{}", serde_json::json!({ "run_id": run_id }))
        .map_err(|e| CliError::io("writing episode log", e))?;

    let mut port = SyntheticPort::new(&env, 0);
    let trained = train_with(&mut port, &ppo_config, |record, net, optimizer| {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(log, "{line}")?;
        // Refresh the last-good checkpoint at a coarse cadence so a later
        // divergence abort still leaves a usable artifact behind.
        if record.episode % CHECKPOINT_EVERY == CHECKPOINT_EVERY - 1 {
            let snapshot = Checkpoint {
                net: net.clone(),
                optimizer: Some(optimizer.clone()),
                rng: None,
            };
            snapshot.save(&checkpoint_path)?;
        }
        Ok(())
    });
    let trained = match trained {
        Ok(t) => t,
        Err(e) => {
            eprintln!(
                "training aborted: {e}; last-good checkpoint (if any) kept at {}",
                checkpoint_path.display()
            );
            return Err(CliError::from_core_run(e));
        }
    };

    let final_checkpoint = Checkpoint {
        net: trained.net.clone(),
        optimizer: Some(trained.optimizer.clone()),
        rng: None,
    };
    final_checkpoint
        .save(&checkpoint_path)
        .map_err(CliError::from_core_run)?;

    let evaluator = Evaluator::new(&env, config.eval.n_queries, config.eval.eval_seed);
    let label = format!(
        "policy-a{}-b{}",
        ppo_config.reward_params.alpha, ppo_config.reward_params.beta
    );
    let policy = GreedyNetPolicy::new(&trained.net, label);
    let metrics = evaluator.evaluate(&policy).map_err(CliError::from_core_run)?;
    write_file(
        &run_dir.join("results.tsv"),
        &results_table(&run_id, &env, std::slice::from_ref(&metrics)),
    )?;

    println!(
        "trained {} episodes; final accuracy {:.4}, mean cost {:.4}, EG {:.4}",
        trained.records.len(),
        metrics.macro_accuracy,
        metrics.mean_cost,
        metrics.efficiency_gain_vs_ref
    );
    println!("checkpoint -> {}", checkpoint_path.display());
    println!("episode log -> {}", log_path.display());
    Ok(())
}

/// Evaluate a stored checkpoint.
pub fn cmd_eval(
    config: &FileConfig,
    checkpoint_path: &Path,
    run_dir: &Path,
    sampled: bool,
) -> CliResult<()> {
    if !checkpoint_path.exists() {
        return Err(CliError::Usage(format!(
            "checkpoint {} does not exist",
            checkpoint_path.display()
        )));
    }
    let env = config.env_config()?;
    let checkpoint = Checkpoint::load(checkpoint_path).map_err(CliError::from_core_run)?;
    let snapshot = config.to_toml();
    let manifest = prepare_run_dir(
        run_dir,
        "eval",
        &snapshot,
        env.master_seed,
        vec!["results.tsv".into()],
    )?;

    let evaluator = Evaluator::new(&env, config.eval.n_queries, config.eval.eval_seed);
    let label = format!(
        "{}{}",
        checkpoint_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into()),
        if sampled { "-sampled" } else { "" }
    );
    let metrics = if sampled {
        let policy = SampledNetPolicy::new(&checkpoint.net, label);
        evaluator.evaluate(&policy)
    } else {
        let policy = GreedyNetPolicy::new(&checkpoint.net, label);
        evaluator.evaluate(&policy)
    }
    .map_err(CliError::from_core_run)?;

    let table = results_table(&manifest.run_id, &env, std::slice::from_ref(&metrics));
    write_file(&run_dir.join("results.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

/// Evaluate fixed strategies and/or the tuned threshold heuristic.
pub fn cmd_baseline(
    config: &FileConfig,
    run_dir: &Path,
    all: bool,
    strategy: Option<&str>,
    heuristic: bool,
) -> CliResult<()> {
    let env = config.env_config()?;
    let snapshot = config.to_toml();
    let manifest = prepare_run_dir(
        run_dir,
        "baseline",
        &snapshot,
        env.master_seed,
        vec!["results.tsv".into()],
    )?;
    let evaluator = Evaluator::new(&env, config.eval.n_queries, config.eval.eval_seed);
    let reference = evaluator.reference_cost().map_err(CliError::from_core_run)?;

    let mut rows = Vec::new();
    let fixed_names: Vec<String> = if all {
        vec!["ZS".into(), "CoT".into(), "SC".into()]
    } else {
        strategy.map(|s| vec![s.to_string()]).unwrap_or_default()
    };
    for name in &fixed_names {
        let id = env
            .library
            .by_name(name)
            .ok_or_else(|| CliError::Usage(format!("unknown strategy `{name}`")))?
            .id;
        let policy = fixed_policy(&env.library, id).map_err(CliError::from_core_run)?;
        rows.push(
            evaluator
                .evaluate_against(&policy, reference)
                .map_err(CliError::from_core_run)?,
        );
    }
    if all || heuristic {
        let mut h = config.heuristic_config()?;
        h.threshold = tune_threshold(
            &env,
            h.feature_index,
            config.heuristic.target_high_fraction,
            config.heuristic.tuning_samples,
        )
        .map_err(CliError::from_core_run)?;
        let policy = heuristic_policy(h);
        let metrics = evaluator
            .evaluate_against(&policy, reference)
            .map_err(CliError::from_core_run)?;
        println!("heuristic threshold: {:.6}", h.threshold);
        rows.push(metrics);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(
            "nothing to do: pass --all, --strategy <NAME>, or --heuristic".into(),
        ));
    }

    let table = results_table(&manifest.run_id, &env, &rows);
    write_file(&run_dir.join("results.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

/// Train one policy per weight ratio, persist per-point checkpoints, and
/// emit all points plus the filtered front.
pub fn cmd_sweep(config: &FileConfig, run_dir: &Path, ratios: &[(f64, f64)]) -> CliResult<()> {
    let env = config.env_config()?;
    let template = config.ppo_config()?;
    let snapshot = config.to_toml();
    let manifest = prepare_run_dir(
        run_dir,
        "sweep",
        &snapshot,
        env.master_seed,
        vec![
            "pareto.jsonl".into(),
            "front.jsonl".into(),
            "results.tsv".into(),
        ],
    )?;

    let detail = pareto_sweep_detailed(
        &env,
        &template,
        ratios,
        config.eval.n_queries,
        config.eval.eval_seed,
    )
    .map_err(CliError::from_core_run)?;
    for failure in &detail.failures {
        eprintln!(
            "sweep point {} (alpha {}, beta {}) failed: {}",
            failure.ratio_index, failure.alpha, failure.beta, failure.message
        );
    }

    let mut points: Vec<ParetoPoint> = Vec::with_capacity(detail.points.len());
    for point_detail in &detail.points {
        let name = format!(
            "checkpoint-a{}-b{}-{}.ppnc",
            point_detail.point.alpha, point_detail.point.beta, manifest.run_id
        );
        Checkpoint {
            net: point_detail.train.net.clone(),
            optimizer: Some(point_detail.train.optimizer.clone()),
            rng: None,
        }
        .save(&run_dir.join(&name))
        .map_err(CliError::from_core_run)?;
        let mut point = point_detail.point.clone();
        point.checkpoint = Some(name);
        points.push(point);
    }

    let to_jsonl = |points: &[ParetoPoint]| {
        let mut out = format!("{}\n", serde_json::json!({ "run_id": manifest.run_id }));
        for p in points {
            out.push_str(&serde_json::to_string(p).expect("point serializes"));
            out.push('\n');
        }
        out
    };
    write_file(&run_dir.join("pareto.jsonl"), &to_jsonl(&points))?;
    let front = pareto_filter(&points);
    write_file(&run_dir.join("front.jsonl"), &to_jsonl(&front))?;

    let rows: Vec<RunMetrics> = points.iter().map(|p| p.metrics.clone()).collect();
    let table = results_table(&manifest.run_id, &env, &rows);
    write_file(&run_dir.join("results.tsv"), &table)?;
    print!("{table}");
    println!(
        "front: {} of {} points retained",
        front.len(),
        points.len()
    );
    Ok(())
}

/// Print the calibrated success-curve parameters as a table.
pub fn cmd_dump_profiles(config: &FileConfig) -> CliResult<()> {
    let env = config.env_config()?;
    println!("strategy\tfloor\tceiling\tsharpness\tthreshold\tmean_cost\tcost_noise\texpected_accuracy");
    for (strategy, profile) in env.library.iter().zip(&env.profiles) {
        println!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.6}\t{:.4}\t{:.4}\t{:.6}",
            strategy.name,
            profile.floor,
            profile.ceiling,
            profile.sharpness,
            profile.threshold,
            profile.mean_cost,
            profile.cost_noise_scale,
            mean_success_probability(profile, env.difficulty_distribution),
        );
    }
    Ok(())
}

/// Parse `--ratios` values like `2:1,10:1,100:1`.
pub fn parse_ratios(raw: &str) -> CliResult<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("ratio `{part}` is not of the form A:B")))?;
        let alpha: f64 = a
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad alpha in ratio `{part}`")))?;
        let beta: f64 = b
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad beta in ratio `{part}`")))?;
        out.push((alpha, beta));
    }
    if out.is_empty() {
        return Err(CliError::Usage("no ratios given".into()));
    }
    Ok(out)
}
