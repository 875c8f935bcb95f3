//! Evaluation harness: large-scale policy rollouts, comparative metrics,
//! reward-weight sweeps, and Pareto filtering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fixed_policy, Policy};
use crate::domain::{efficiency_gain, RewardParams};
use crate::error::{Error, Result};
use crate::policynet::{sample_action, PolicyValueNet};
use crate::ppo::{self, PPOConfig};
use crate::seeding::{self, Stream};
use crate::synthenv::{generate_query, step, EnvConfig};
use crate::backend::SyntheticPort;

/// Aggregates of one evaluation rollout: one results-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy_label: String,
    pub macro_accuracy: f64,
    pub mean_cost: f64,
    /// Fractional cost reduction vs the measured fixed-SC reference.
    pub efficiency_gain_vs_ref: f64,
    /// The measured reference cost the gain was computed against.
    pub reference_cost: f64,
    pub action_histogram: Vec<u64>,
    pub n_queries: u64,
}

/// One sweep result: reward weights plus the metrics they produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub alpha: f64,
    pub beta: f64,
    pub metrics: RunMetrics,
    /// Where the trained network was stored, when it was.
    pub checkpoint: Option<String>,
}

/// A sweep point that failed to train; the sweep carries on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub ratio_index: usize,
    pub alpha: f64,
    pub beta: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Successful points, sorted by mean cost.
    pub points: Vec<ParetoPoint>,
    pub failures: Vec<SweepFailure>,
}

/// Greedy wrapper around a trained network: argmax of the policy head.
pub struct GreedyNetPolicy<'a> {
    net: &'a PolicyValueNet,
    label: String,
}

impl<'a> GreedyNetPolicy<'a> {
    pub fn new(net: &'a PolicyValueNet, label: impl Into<String>) -> Self {
        Self {
            net,
            label: label.into(),
        }
    }
}

impl Policy for GreedyNetPolicy<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&self, features: &[f64], _decision_seed: u64) -> Result<usize> {
        ppo::greedy_action(self.net, features)
    }
}

/// Sampling wrapper: draws from the policy head instead of taking the
/// argmax. Deterministic per (policy, decision_seed).
pub struct SampledNetPolicy<'a> {
    net: &'a PolicyValueNet,
    label: String,
}

impl<'a> SampledNetPolicy<'a> {
    pub fn new(net: &'a PolicyValueNet, label: impl Into<String>) -> Self {
        Self {
            net,
            label: label.into(),
        }
    }
}

impl Policy for SampledNetPolicy<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&self, features: &[f64], decision_seed: u64) -> Result<usize> {
        let (policy, _) = self.net.forward(features)?;
        let mut rng = seeding::rng(decision_seed, Stream::Eval, 1);
        Ok(sample_action(&policy, &mut rng).0)
    }
}

/// Evaluation context: an environment, a query budget, and an eval seed.
///
/// The eval seed selects a fresh, training-disjoint query family; the fixed-
/// SC reference cost is measured on exactly the same queries.
pub struct Evaluator {
    env: EnvConfig,
    n_queries: u64,
    eval_seed: u64,
    parallel: bool,
}

impl Evaluator {
    pub fn new(env: &EnvConfig, n_queries: u64, eval_seed: u64) -> Self {
        let mut eval_env = env.clone();
        // Re-keying the master seed yields an independent query stream while
        // keeping the calibrated profiles untouched.
        eval_env.master_seed = seeding::derive(env.master_seed, Stream::Eval, eval_seed);
        Self {
            env: eval_env,
            n_queries: n_queries.max(1),
            eval_seed,
            parallel: true,
        }
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval_seed
    }

    /// Mean observed cost of the fixed-SC policy on this evaluation set.
    pub fn reference_cost(&self) -> Result<f64> {
        let sc = self
            .env
            .library
            .by_name("SC")
            .ok_or_else(|| Error::InvalidConfig("library lacks SC".into()))?
            .id;
        let reference = fixed_policy(&self.env.library, sc)?;
        let (_, cost_sum, _) = self.rollout(&reference)?;
        Ok(cost_sum / self.n_queries as f64)
    }

    /// Roll a policy over the evaluation set; returns per-query sums.
    fn rollout(&self, policy: &dyn Policy) -> Result<(f64, f64, Vec<u64>)> {
        let n_actions = self.env.library.len();
        let run_one = |index: u64| -> Result<(f64, f64, usize)> {
            let query = generate_query(&self.env, index);
            let decision_seed = seeding::derive(query.seed, Stream::Eval, 0);
            let action = policy.select(&query.features, decision_seed)?;
            let outcome = step(&self.env, &query, action)?;
            Ok((outcome.accuracy, outcome.observed_cost, action))
        };
        // Parallel and sequential paths must agree bitwise: results are
        // collected in index order and reduced sequentially.
        let per_query: Vec<(f64, f64, usize)> = if self.parallel {
            (0..self.n_queries)
                .into_par_iter()
                .map(run_one)
                .collect::<Result<Vec<_>>>()?
        } else {
            (0..self.n_queries)
                .map(run_one)
                .collect::<Result<Vec<_>>>()?
        };
        let mut accuracy_sum = 0.0;
        let mut cost_sum = 0.0;
        let mut histogram = vec![0u64; n_actions];
        for (accuracy, cost, action) in per_query {
            accuracy_sum += accuracy;
            cost_sum += cost;
            histogram[action] += 1;
        }
        Ok((accuracy_sum, cost_sum, histogram))
    }

    /// Evaluate a policy and fill a results-table row.
    pub fn evaluate(&self, policy: &dyn Policy) -> Result<RunMetrics> {
        let reference_cost = self.reference_cost()?;
        self.evaluate_against(policy, reference_cost)
    }

    /// Evaluate against an already-measured reference cost (saves repeating
    /// the reference rollout across a table of policies).
    pub fn evaluate_against(&self, policy: &dyn Policy, reference_cost: f64) -> Result<RunMetrics> {
        let (accuracy_sum, cost_sum, histogram) = self.rollout(policy)?;
        let n = self.n_queries as f64;
        let mean_cost = cost_sum / n;
        Ok(RunMetrics {
            policy_label: policy.label().to_string(),
            macro_accuracy: accuracy_sum / n,
            mean_cost,
            efficiency_gain_vs_ref: efficiency_gain(mean_cost, reference_cost)?,
            reference_cost,
            action_histogram: histogram,
            n_queries: self.n_queries,
        })
    }
}

/// One successful sweep point together with its full training artifacts.
#[derive(Debug, Clone)]
pub struct SweepPointDetail {
    pub point: ParetoPoint,
    pub train: ppo::TrainResult,
}

/// Sweep result carrying trained networks, for callers that persist them.
#[derive(Debug, Clone)]
pub struct SweepDetail {
    /// Successful points, sorted by mean cost.
    pub points: Vec<SweepPointDetail>,
    pub failures: Vec<SweepFailure>,
}

impl SweepDetail {
    pub fn into_result(self) -> SweepResult {
        SweepResult {
            points: self.points.into_iter().map(|d| d.point).collect(),
            failures: self.failures,
        }
    }
}

/// Train one policy per (alpha, beta) ratio and evaluate each.
///
/// Every point gets an independent seed derived from the template seed.
/// Points whose training diverges are reported as failures without aborting
/// the rest of the sweep. Successful points come back sorted by mean cost.
pub fn pareto_sweep(
    env: &EnvConfig,
    template: &PPOConfig,
    ratios: &[(f64, f64)],
    n_eval_queries: u64,
    eval_seed: u64,
) -> Result<SweepResult> {
    pareto_sweep_detailed(env, template, ratios, n_eval_queries, eval_seed)
        .map(SweepDetail::into_result)
}

/// [`pareto_sweep`] keeping the trained networks and episode logs.
pub fn pareto_sweep_detailed(
    env: &EnvConfig,
    template: &PPOConfig,
    ratios: &[(f64, f64)],
    n_eval_queries: u64,
    eval_seed: u64,
) -> Result<SweepDetail> {
    if ratios.is_empty() {
        return Err(Error::InvalidConfig("empty ratio list".into()));
    }
    let evaluator = Evaluator::new(env, n_eval_queries, eval_seed);
    let reference_cost = evaluator.reference_cost()?;
    let outcomes: Vec<std::result::Result<SweepPointDetail, SweepFailure>> = ratios
        .par_iter()
        .enumerate()
        .map(|(i, &(alpha, beta))| {
            let fail = |message: String| SweepFailure {
                ratio_index: i,
                alpha,
                beta,
                message,
            };
            let mut config = template.clone();
            config.reward_params = RewardParams { alpha, beta };
            config.seed = seeding::derive(template.seed, Stream::Sweep, i as u64);
            let mut port = SyntheticPort::new(env, 0);
            let result = ppo::train(&mut port, &config).map_err(|e| fail(e.to_string()))?;
            let label = format!("policy-a{alpha}-b{beta}");
            let policy = GreedyNetPolicy::new(&result.net, label);
            let metrics = evaluator
                .evaluate_against(&policy, reference_cost)
                .map_err(|e| fail(e.to_string()))?;
            Ok(SweepPointDetail {
                point: ParetoPoint {
                    alpha,
                    beta,
                    metrics,
                    checkpoint: None,
                },
                train: result,
            })
        })
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(p) => points.push(p),
            Err(f) => failures.push(f),
        }
    }
    points.sort_by(|a, b| {
        a.point
            .metrics
            .mean_cost
            .total_cmp(&b.point.metrics.mean_cost)
    });
    Ok(SweepDetail { points, failures })
}

/// True when `a` (cost, accuracy) dominates `b`: no worse on both axes and
/// strictly better on at least one.
fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    let (cost_a, acc_a) = a;
    let (cost_b, acc_b) = b;
    cost_a <= cost_b && acc_a >= acc_b && (cost_a < cost_b || acc_a > acc_b)
}

/// Indices of non-dominated points, via sort-and-sweep (O(n log n)).
pub fn pareto_front_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; points.len()];
    let mut best_cheaper_acc = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // One group of equal-cost points at a time.
        let cost = points[order[i]].0;
        let mut j = i;
        let mut group_max_acc = f64::NEG_INFINITY;
        while j < order.len() && points[order[j]].0 == cost {
            group_max_acc = group_max_acc.max(points[order[j]].1);
            j += 1;
        }
        for &idx in &order[i..j] {
            let acc = points[idx].1;
            // Dominated by a strictly cheaper point with >= accuracy, or by
            // an equal-cost point with strictly higher accuracy.
            if acc > best_cheaper_acc && acc == group_max_acc {
                keep[idx] = true;
            }
        }
        best_cheaper_acc = best_cheaper_acc.max(group_max_acc);
        i = j;
    }
    let mut kept: Vec<usize> = (0..points.len()).filter(|&i| keep[i]).collect();
    kept.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(a.cmp(&b)));
    kept
}

/// Brute-force O(n^2) dominance filter; the independent cross-check for
/// [`pareto_front_indices`].
pub fn pareto_front_indices_bruteforce(points: &[(f64, f64)]) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, &other)| j != i && dominates(other, points[i]))
        })
        .collect();
    kept.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(a.cmp(&b)));
    kept
}

/// Non-dominated subset of sweep points, stably ordered by mean cost.
pub fn pareto_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let view: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.metrics.mean_cost, p.metrics.macro_accuracy))
        .collect();
    pareto_front_indices(&view)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{heuristic_policy, HeuristicConfig};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point(cost: f64, acc: f64) -> ParetoPoint {
        ParetoPoint {
            alpha: 1.0,
            beta: 1.0,
            metrics: RunMetrics {
                policy_label: "p".into(),
                macro_accuracy: acc,
                mean_cost: cost,
                efficiency_gain_vs_ref: 0.0,
                reference_cost: 20.5,
                action_histogram: vec![],
                n_queries: 1,
            },
            checkpoint: None,
        }
    }

    #[test]
    fn fixed_sc_self_reference_gain_is_zero() {
        let env = EnvConfig::standard(3);
        let evaluator = Evaluator::new(&env, 2_000, 0);
        let sc = fixed_policy(&env.library, 4).unwrap();
        let metrics = evaluator.evaluate(&sc).unwrap();
        assert_eq!(metrics.efficiency_gain_vs_ref, 0.0);
        assert_eq!(metrics.action_histogram[4], 2_000);
    }

    #[test]
    fn deterministic_env_metrics_match_enumeration() {
        // Certain outcomes and zero cost noise: metrics are exactly
        // enumerable.
        let mut env = EnvConfig::standard(8);
        for p in &mut env.profiles {
            p.cost_noise_scale = 0.0;
            p.floor = 1.0;
            p.ceiling = 1.0;
        }
        let evaluator = Evaluator::new(&env, 500, 1);
        let cot = fixed_policy(&env.library, 2).unwrap();
        let metrics = evaluator.evaluate(&cot).unwrap();
        assert_eq!(metrics.macro_accuracy, 1.0);
        assert_eq!(metrics.mean_cost, 4.0);
        assert_eq!(metrics.reference_cost, 20.5);
        assert!((metrics.efficiency_gain_vs_ref - (20.5 - 4.0) / 20.5).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let env = EnvConfig::standard(12);
        let config = HeuristicConfig::standard(&env.library, 0.6).unwrap();
        let policy = heuristic_policy(config);
        let parallel = Evaluator::new(&env, 5_000, 9).evaluate(&policy).unwrap();
        let sequential = Evaluator::new(&env, 5_000, 9)
            .sequential()
            .evaluate(&policy)
            .unwrap();
        assert_eq!(parallel, sequential);
    }

    #[test]
    fn greedy_evaluation_is_deterministic() {
        let env = EnvConfig::standard(12);
        let net = PolicyValueNet::init(
            3,
            crate::policynet::NetConfig::new(env.feature_dim, vec![16], 5).unwrap(),
        );
        let policy = GreedyNetPolicy::new(&net, "probe");
        let a = Evaluator::new(&env, 3_000, 5).evaluate(&policy).unwrap();
        let b = Evaluator::new(&env, 3_000, 5).evaluate(&policy).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eg_is_recomputable_from_stored_columns() {
        let env = EnvConfig::standard(12);
        let policy = fixed_policy(&env.library, 0).unwrap();
        let metrics = Evaluator::new(&env, 4_000, 2).evaluate(&policy).unwrap();
        let recomputed =
            efficiency_gain(metrics.mean_cost, metrics.reference_cost).unwrap();
        assert!((recomputed - metrics.efficiency_gain_vs_ref).abs() < 1e-9);
    }

    #[test]
    fn pareto_filter_drops_hand_checkable_dominated_point() {
        let points = vec![point(1.0, 0.5), point(2.0, 0.9), point(3.0, 0.8)];
        let front = pareto_filter(&points);
        let costs: Vec<f64> = front.iter().map(|p| p.metrics.mean_cost).collect();
        assert_eq!(costs, vec![1.0, 2.0]);
    }

    #[test]
    fn pareto_filter_keeps_identical_points() {
        let points = vec![point(2.0, 0.7), point(2.0, 0.7), point(2.0, 0.7)];
        assert_eq!(pareto_filter(&points).len(), 3);
    }

    #[test]
    fn pareto_filter_keeps_mutually_nondominated_rows() {
        // Neither (5.8, 0.798) nor (7.9, 0.845) dominates the other.
        let points = vec![point(5.8, 0.798), point(7.9, 0.845)];
        assert_eq!(pareto_filter(&points).len(), 2);
    }

    #[test]
    fn pareto_front_matches_bruteforce_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        for _ in 0..1_000 {
            let n = rng.gen_range(0..40);
            let points: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    // Coarse grid provokes plenty of exact ties.
                    let cost = (rng.gen_range(0..20) as f64) * 0.5;
                    let acc = (rng.gen_range(0..10) as f64) * 0.1;
                    (cost, acc)
                })
                .collect();
            assert_eq!(
                pareto_front_indices(&points),
                pareto_front_indices_bruteforce(&points),
                "points {points:?}"
            );
        }
    }

    #[test]
    fn dominance_of_removed_points_is_witnessed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..30);
            let points: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..1.0)))
                .collect();
            let front = pareto_front_indices(&points);
            for i in 0..points.len() {
                if !front.contains(&i) {
                    assert!(
                        front.iter().any(|&j| dominates(points[j], points[i])),
                        "removed point {i} lacks a dominating witness"
                    );
                }
            }
        }
    }

    #[test]
    fn sweep_empty_ratios_is_an_error() {
        let env = EnvConfig::standard(3);
        let template = PPOConfig::new(RewardParams { alpha: 1.0, beta: 1.0 }, 0);
        assert!(pareto_sweep(&env, &template, &[], 100, 0).is_err());
    }

    #[test]
    fn sweep_with_zero_episodes_still_yields_points() {
        let env = EnvConfig::standard(3);
        let mut template = PPOConfig::new(RewardParams { alpha: 1.0, beta: 1.0 }, 0);
        template.episodes = 0;
        template.batch_size = 8;
        template.minibatch_size = 8;
        let result = pareto_sweep(&env, &template, &[(10.0, 1.0), (1.0, 1.0)], 500, 3).unwrap();
        assert_eq!(result.points.len(), 2);
        assert!(result.failures.is_empty());
        // Sorted by cost.
        assert!(result.points[0].metrics.mean_cost <= result.points[1].metrics.mean_cost);
        for p in &result.points {
            assert_eq!(
                p.metrics.action_histogram.iter().sum::<u64>(),
                p.metrics.n_queries
            );
        }
    }
}
