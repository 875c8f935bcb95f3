//! Library quickstart: calibrate the default environment, evaluate the
//! fixed-strategy baselines, train two policies at different reward
//! weightings, and print one comparative table.
//!
//! Run with: cargo run --release -p prompt-policy --example quickstart

use prompt_policy::backend::SyntheticPort;
use prompt_policy::baselines::{fixed_policy, heuristic_policy, tune_threshold, HeuristicConfig};
use prompt_policy::domain::RewardParams;
use prompt_policy::eval::{Evaluator, GreedyNetPolicy, RunMetrics};
use prompt_policy::ppo::{train, PPOConfig};
use prompt_policy::synthenv::EnvConfig;

fn print_row(env: &EnvConfig, m: &RunMetrics) {
    let usage: Vec<String> = env
        .library
        .iter()
        .zip(&m.action_histogram)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| format!("{}:{:.0}%", s.name, c as f64 / m.n_queries as f64 * 100.0))
        .collect();
    println!(
        "{:<22} {:>8.4} {:>9.3} {:>8.3}  {}",
        m.policy_label,
        m.macro_accuracy,
        m.mean_cost,
        m.efficiency_gain_vs_ref,
        usage.join(",")
    );
}

fn main() -> prompt_policy::Result<()> {
    let env = EnvConfig::standard(20_240_601);
    let evaluator = Evaluator::new(&env, 20_000, 1);
    let reference = evaluator.reference_cost()?;
    println!(
        "{:<22} {:>8} {:>9} {:>8}  usage",
        "method", "accuracy", "cost", "gain"
    );

    for name in ["ZS", "CoT", "SC"] {
        let id = env.library.by_name(name).unwrap().id;
        let policy = fixed_policy(&env.library, id)?;
        print_row(&env, &evaluator.evaluate_against(&policy, reference)?);
    }

    let theta = tune_threshold(&env, 0, 0.35, 20_000)?;
    let heuristic = heuristic_policy(HeuristicConfig::standard(&env.library, theta)?);
    print_row(&env, &evaluator.evaluate_against(&heuristic, reference)?);

    for alpha in [10.0, 100.0] {
        let config = PPOConfig::new(RewardParams { alpha, beta: 1.0 }, 7);
        let mut port = SyntheticPort::new(&env, 0);
        let result = train(&mut port, &config)?;
        let policy = GreedyNetPolicy::new(&result.net, format!("policy-a{alpha}-b1"));
        print_row(&env, &evaluator.evaluate_against(&policy, reference)?);
    }
    Ok(())
}
