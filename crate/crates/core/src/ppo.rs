//! Clipped-surrogate policy optimization for the single-step decision
//! process.
//!
//! Each episode collects a fresh batch under the frozen collection policy,
//! computes advantages as reward minus the value estimate (no discounting or
//! bootstrapping — an episode is one decision), then runs several epochs of
//! shuffled minibatch updates against the clipped probability-ratio
//! objective plus an entropy bonus, jointly with value regression.

use serde::{Deserialize, Serialize};

use crate::backend::EnvironmentPort;
use crate::domain::{compute_reward, RewardParams, Transition};
use crate::error::{Error, Result};
use crate::policynet::{
    entropy, sample_action, Direction, NetConfig, OptimizerState, PolicyValueNet,
};
use crate::seeding::{self, Stream};

/// Trainer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPOConfig {
    /// Probability-ratio clip half-width.
    pub clip_epsilon: f64,
    /// Entropy bonus coefficient.
    pub entropy_coef: f64,
    /// Update epochs per collected batch.
    pub k_epochs: usize,
    /// Queries per episode.
    pub batch_size: usize,
    /// Training episodes; zero keeps the initial policy.
    pub episodes: usize,
    pub reward_params: RewardParams,
    /// Standardize advantages per batch.
    pub advantage_normalization: bool,
    pub minibatch_size: usize,
    /// Weight of the value regression term in the joint update.
    pub value_loss_weight: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Optional global gradient-norm cap; off by default.
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
}

impl PPOConfig {
    pub fn new(reward_params: RewardParams, seed: u64) -> Self {
        Self {
            clip_epsilon: 0.2,
            entropy_coef: 0.01,
            k_epochs: 4,
            batch_size: 256,
            episodes: 500,
            reward_params,
            advantage_normalization: true,
            minibatch_size: 64,
            value_loss_weight: 0.5,
            learning_rate: 3e-4,
            hidden: vec![64, 64],
            grad_clip_norm: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reward_params.validate()?;
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "clip_epsilon must lie in (0,1), got {}",
                self.clip_epsilon
            )));
        }
        if self.entropy_coef < 0.0 {
            return Err(Error::InvalidConfig("entropy_coef must be >= 0".into()));
        }
        if self.k_epochs < 1 {
            return Err(Error::InvalidConfig("k_epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.minibatch_size < 1 || self.minibatch_size > self.batch_size {
            return Err(Error::InvalidConfig(format!(
                "minibatch_size must lie in 1..=batch_size, got {}",
                self.minibatch_size
            )));
        }
        if self.value_loss_weight.is_nan() || self.value_loss_weight < 0.0 {
            return Err(Error::InvalidConfig("value_loss_weight must be >= 0".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Aggregates of one collected batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub mean_reward: f64,
    pub mean_accuracy: f64,
    pub mean_cost: f64,
    pub action_histogram: Vec<u64>,
}

/// One episode's worth of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub transitions: Vec<Transition>,
    pub summary: BatchSummary,
}

/// Losses of one minibatch step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLosses {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
}

/// Per-episode log record, one JSON line each in the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_accuracy: f64,
    pub mean_cost: f64,
    /// Mean policy entropy over the batch at collection time.
    pub entropy: f64,
    pub action_histogram: Vec<u64>,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub mean_ratio: f64,
    /// Set when the mean ratio of some epoch left [0.2, 5.0].
    pub ratio_alert: bool,
}

/// Trained network plus everything needed to resume or audit the run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub net: PolicyValueNet,
    pub optimizer: OptimizerState,
    pub records: Vec<EpisodeRecord>,
}

/// Collect one batch under the current (frozen) policy.
///
/// Deterministic given (config.seed, episode_index) and the environment
/// cursor: every query is encoded, an action is sampled from the policy, the
/// environment executes it, and the composite reward plus the sampling
/// probability are stored.
pub fn collect_batch<E: EnvironmentPort>(
    net: &PolicyValueNet,
    env: &mut E,
    config: &PPOConfig,
    episode_index: usize,
) -> Result<EpisodeBatch> {
    let mut rng = seeding::rng(config.seed, Stream::Train, episode_index as u64);
    let n_actions = net.n_actions();
    let mut transitions = Vec::with_capacity(config.batch_size);
    let mut histogram = vec![0u64; n_actions];
    let mut reward_sum = 0.0;
    let mut accuracy_sum = 0.0;
    let mut cost_sum = 0.0;
    for _ in 0..config.batch_size {
        let query = env.next_query()?;
        let (policy, _) = net.forward(&query.features)?;
        let (action, old_prob) = sample_action(&policy, &mut rng);
        let outcome = env.execute(&query, action)?;
        let reward = compute_reward(&outcome, &config.reward_params);
        histogram[action] += 1;
        reward_sum += reward;
        accuracy_sum += outcome.accuracy;
        cost_sum += outcome.observed_cost;
        let transition = Transition {
            features: query.features,
            action,
            reward,
            old_prob,
        };
        transition.validate().map_err(|e| {
            Error::DataCorruption(format!("collected transition invalid: {e}"))
        })?;
        transitions.push(transition);
    }
    let n = config.batch_size as f64;
    Ok(EpisodeBatch {
        transitions,
        summary: BatchSummary {
            mean_reward: reward_sum / n,
            mean_accuracy: accuracy_sum / n,
            mean_cost: cost_sum / n,
            action_histogram: histogram,
        },
    })
}

/// Advantage of each transition: reward minus the current value estimate,
/// optionally standardized across the batch (population variance, floored at
/// 1e-8 so constant batches map to all-zero advantages).
pub fn compute_advantages(batch: &EpisodeBatch, net: &PolicyValueNet, normalize: bool) -> Result<Vec<f64>> {
    let mut advantages = Vec::with_capacity(batch.transitions.len());
    for t in &batch.transitions {
        let (_, value) = net.forward(&t.features)?;
        advantages.push(t.reward - value);
    }
    if normalize && !advantages.is_empty() {
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.max(1e-8).sqrt();
        for a in &mut advantages {
            *a = (*a - mean) / std;
        }
    }
    Ok(advantages)
}

/// Clipped-surrogate objective, entropy bonus, value regression, and the
/// exact gradient of the joint loss over one minibatch.
///
/// The probability ratio is computed in log space. The returned gradient is
/// for *descending* `-(policy objective) + value_loss_weight * value_loss`;
/// ascending the policy objective therefore means applying it with
/// [`Direction::Descend`].
pub fn ppo_losses(
    net: &PolicyValueNet,
    minibatch: &[&Transition],
    advantages: &[f64],
    config: &PPOConfig,
) -> Result<(PpoLosses, Vec<f64>)> {
    if minibatch.len() != advantages.len() {
        return Err(Error::DimensionMismatch {
            expected: minibatch.len(),
            got: advantages.len(),
        });
    }
    if minibatch.is_empty() {
        return Err(Error::InvalidConfig("empty minibatch".into()));
    }
    let m = minibatch.len() as f64;
    let eps = config.clip_epsilon;
    let gamma = config.entropy_coef;
    let n_actions = net.n_actions();

    let mut grad = vec![0.0; net.params().len()];
    let mut surrogate_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut value_loss_sum = 0.0;
    let mut ratio_sum = 0.0;

    for (t, &adv) in minibatch.iter().zip(advantages.iter()) {
        if t.old_prob.is_nan() || t.old_prob <= 0.0 {
            return Err(Error::DataCorruption(format!(
                "old_prob {} in stored transition",
                t.old_prob
            )));
        }
        let trace = net.forward_trace(&t.features)?;
        let log_new = trace.log_policy[t.action];
        let ratio = (log_new - t.old_prob.ln()).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        surrogate_sum += unclipped.min(clipped);
        let h = entropy(&trace.policy);
        entropy_sum += h;
        ratio_sum += ratio;
        let residual = t.reward - trace.value;
        value_loss_sum += residual * residual;

        // Upstream gradient on the logits for the descent loss
        // -(surrogate + gamma * H) / m. The clipped branch contributes no
        // gradient once the ratio has left the clip band on the losing side
        // of the min.
        let surrogate_active = unclipped <= clipped || (1.0 - eps..=1.0 + eps).contains(&ratio);
        let mut upstream = vec![0.0; n_actions];
        for (k, slot) in upstream.iter_mut().enumerate() {
            let indicator = if k == t.action { 1.0 } else { 0.0 };
            let mut g = 0.0;
            if surrogate_active {
                g += adv * ratio * (indicator - trace.policy[k]);
            }
            g += gamma * (-trace.policy[k] * (trace.log_policy[k] + h));
            *slot = -g / m;
        }
        // d/dv of value_loss_weight * (r - v)^2 / m.
        let upstream_value = config.value_loss_weight * 2.0 * (trace.value - t.reward) / m;
        net.backward_into(&t.features, &trace, &upstream, upstream_value, &mut grad)?;
    }

    let losses = PpoLosses {
        policy_objective: surrogate_sum / m + gamma * entropy_sum / m,
        value_loss: value_loss_sum / m,
        entropy: entropy_sum / m,
        mean_ratio: ratio_sum / m,
    };
    Ok((losses, grad))
}

/// Scale the gradient down to `max_norm` when it exceeds it.
fn clip_gradient(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Run the full training loop.
///
/// Per episode: collect a batch under the frozen collection policy, compute
/// advantages once, then `k_epochs` passes of shuffled minibatch joint
/// updates. Fully deterministic given the config seed and the environment.
pub fn train<E: EnvironmentPort>(env: &mut E, config: &PPOConfig) -> Result<TrainResult> {
    train_with(env, config, |_, _, _| Ok(()))
}

/// [`train`] with a per-episode observer, called after each episode's
/// updates with the fresh record and the current network/optimizer. Lets
/// callers stream logs and keep last-good checkpoints; an observer error
/// aborts training.
pub fn train_with<E, F>(env: &mut E, config: &PPOConfig, mut observer: F) -> Result<TrainResult>
where
    E: EnvironmentPort,
    F: FnMut(&EpisodeRecord, &PolicyValueNet, &OptimizerState) -> Result<()>,
{
    config.validate()?;
    let net_config = NetConfig::new(env.feature_dim(), config.hidden.clone(), env.n_actions())?;
    let mut net = PolicyValueNet::init(config.seed, net_config.clone());
    let mut optimizer = OptimizerState::new(net_config.param_count(), config.learning_rate);
    let mut records = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        // The collection policy is implicitly frozen: old_prob is recorded at
        // sampling time and updates only start after the batch is complete.
        let batch = collect_batch(&net, env, config, episode)?;
        let advantages = compute_advantages(&batch, &net, config.advantage_normalization)?;
        let collection_entropy = mean_policy_entropy(&net, &batch)?;

        let mut shuffle_rng = seeding::rng(config.seed, Stream::Shuffle, episode as u64);
        let mut indices: Vec<usize> = (0..batch.transitions.len()).collect();
        let mut objective_acc = 0.0;
        let mut value_loss_acc = 0.0;
        let mut ratio_acc = 0.0;
        let mut steps = 0usize;
        let mut ratio_alert = false;

        for _ in 0..config.k_epochs {
            shuffle(&mut indices, &mut shuffle_rng);
            let mut epoch_ratio = 0.0;
            let mut epoch_batches = 0usize;
            for chunk in indices.chunks(config.minibatch_size) {
                let minibatch: Vec<&Transition> =
                    chunk.iter().map(|&i| &batch.transitions[i]).collect();
                let mini_adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
                let (losses, mut grad) = ppo_losses(&net, &minibatch, &mini_adv, config)?;
                if let Some(max_norm) = config.grad_clip_norm {
                    clip_gradient(&mut grad, max_norm);
                }
                optimizer
                    .apply(&mut net, &grad, Direction::Descend)
                    .map_err(|e| {
                        Error::Divergence(format!(
                            "episode {episode}: {e}; aborting before parameters are damaged"
                        ))
                    })?;
                objective_acc += losses.policy_objective;
                value_loss_acc += losses.value_loss;
                ratio_acc += losses.mean_ratio;
                epoch_ratio += losses.mean_ratio;
                steps += 1;
                epoch_batches += 1;
            }
            let epoch_mean_ratio = epoch_ratio / epoch_batches.max(1) as f64;
            if !(0.2..=5.0).contains(&epoch_mean_ratio) {
                ratio_alert = true;
            }
        }

        let denom = steps.max(1) as f64;
        let record = EpisodeRecord {
            episode,
            mean_reward: batch.summary.mean_reward,
            mean_accuracy: batch.summary.mean_accuracy,
            mean_cost: batch.summary.mean_cost,
            entropy: collection_entropy,
            action_histogram: batch.summary.action_histogram.clone(),
            policy_objective: objective_acc / denom,
            value_loss: value_loss_acc / denom,
            mean_ratio: ratio_acc / denom,
            ratio_alert,
        };
        observer(&record, &net, &optimizer)?;
        records.push(record);
    }

    Ok(TrainResult {
        net,
        optimizer,
        records,
    })
}

fn mean_policy_entropy(net: &PolicyValueNet, batch: &EpisodeBatch) -> Result<f64> {
    let mut sum = 0.0;
    for t in &batch.transitions {
        let (policy, _) = net.forward(&t.features)?;
        sum += entropy(&policy);
    }
    Ok(sum / batch.transitions.len().max(1) as f64)
}

/// Fisher-Yates shuffle driven by the given stream.
fn shuffle<R: rand::Rng>(indices: &mut [usize], rng: &mut R) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

/// Serialize episode records as line-delimited JSON.
pub fn records_to_jsonl(records: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("episode record serializes"));
        out.push('\n');
    }
    out
}

/// Greedy action of a trained policy for one feature vector.
pub fn greedy_action(net: &PolicyValueNet, features: &[f64]) -> Result<usize> {
    let (policy, _) = net.forward(features)?;
    Ok(argmax(&policy))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
