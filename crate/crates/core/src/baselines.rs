//! Fixed-strategy and threshold-heuristic reference policies.
//!
//! Baselines implement the same [`Policy`] trait the learned network is
//! evaluated through, so every number in a results table comes off the
//! identical rollout path.

use serde::{Deserialize, Serialize};

use crate::domain::{StrategyId, StrategyLibrary};
use crate::error::{Error, Result};
use crate::synthenv::{generate_query, EnvConfig};

/// A deployable decision rule: features in, strategy out.
///
/// `decision_seed` is provided by the evaluator for stochastic policies;
/// deterministic policies ignore it.
pub trait Policy: Sync {
    fn label(&self) -> &str;
    fn select(&self, features: &[f64], decision_seed: u64) -> Result<StrategyId>;
}

/// Always plays one strategy.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    action: StrategyId,
    label: String,
}

/// Constant policy for a strategy in the library.
pub fn fixed_policy(library: &StrategyLibrary, action: StrategyId) -> Result<FixedPolicy> {
    let strategy = library.get(action)?;
    Ok(FixedPolicy {
        action,
        label: format!("fixed-{}", strategy.name),
    })
}

impl Policy for FixedPolicy {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&self, _features: &[f64], _decision_seed: u64) -> Result<StrategyId> {
        Ok(self.action)
    }
}

/// Complexity-threshold rule: one feature is treated as the complexity proxy
/// and compared against a tuned threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Which feature is the complexity proxy.
    pub feature_index: usize,
    pub threshold: f64,
    pub low_action: StrategyId,
    pub high_action: StrategyId,
}

impl HeuristicConfig {
    /// ZS below the threshold, CoT above, proxy = feature 0.
    pub fn standard(library: &StrategyLibrary, threshold: f64) -> Result<Self> {
        let low = library
            .by_name("ZS")
            .ok_or_else(|| Error::InvalidConfig("library lacks ZS".into()))?
            .id;
        let high = library
            .by_name("CoT")
            .ok_or_else(|| Error::InvalidConfig("library lacks CoT".into()))?
            .id;
        let config = Self {
            feature_index: 0,
            threshold,
            low_action: low,
            high_action: high,
        };
        config.validate(usize::MAX)?;
        Ok(config)
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.feature_index >= feature_dim {
            return Err(Error::InvalidConfig(format!(
                "heuristic feature_index {} out of range for dimension {feature_dim}",
                self.feature_index
            )));
        }
        if self.low_action == self.high_action {
            return Err(Error::InvalidConfig(
                "heuristic low_action and high_action must differ".into(),
            ));
        }
        Ok(())
    }
}

/// Threshold policy over a feature proxy.
#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    config: HeuristicConfig,
    label: String,
}

pub fn heuristic_policy(config: HeuristicConfig) -> HeuristicPolicy {
    HeuristicPolicy {
        config,
        label: "heuristic-threshold".to_string(),
    }
}

impl Policy for HeuristicPolicy {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&self, features: &[f64], _decision_seed: u64) -> Result<StrategyId> {
        let proxy = *features
            .get(self.config.feature_index)
            .ok_or(Error::DimensionMismatch {
                expected: self.config.feature_index + 1,
                got: features.len(),
            })?;
        Ok(if proxy > self.config.threshold {
            self.config.high_action
        } else {
            self.config.low_action
        })
    }
}

/// Empirical quantile fit for the heuristic threshold.
///
/// Returns the (1 - target_high_fraction) quantile of the proxy feature over
/// a deterministic tuning sample of `n_samples` queries, so the high action
/// is used on roughly `target_high_fraction` of traffic.
pub fn tune_threshold(
    env: &EnvConfig,
    feature_index: usize,
    target_high_fraction: f64,
    n_samples: u64,
) -> Result<f64> {
    if !(target_high_fraction > 0.0 && target_high_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target_high_fraction must lie in (0,1), got {target_high_fraction}"
        )));
    }
    if feature_index >= env.feature_dim {
        return Err(Error::InvalidConfig(format!(
            "feature_index {feature_index} out of range for dimension {}",
            env.feature_dim
        )));
    }
    let n = n_samples.max(10_000);
    // A dedicated index region keeps the tuning sample disjoint from
    // training and evaluation streams.
    const TUNE_BASE: u64 = 1 << 62;
    let mut proxies: Vec<f64> = (0..n)
        .map(|i| generate_query(env, TUNE_BASE + i).features[feature_index])
        .collect();
    proxies.sort_by(f64::total_cmp);
    let quantile = 1.0 - target_high_fraction;
    let position = ((n - 1) as f64 * quantile).round() as usize;
    Ok(proxies[position])
}
