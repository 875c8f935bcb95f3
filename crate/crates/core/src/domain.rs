//! Core domain types and the reward/efficiency arithmetic shared by every
//! other module.
//!
//! All types here are immutable value objects after construction; they can be
//! shared and sent across threads freely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a strategy inside a [`StrategyLibrary`].
pub type StrategyId = usize;

/// One prompt strategy: an abstract action with a cost profile.
///
/// `cost_proxy` is dimensionless, expressed as a multiple of the zero-shot
/// baseline cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub id: StrategyId,
    pub name: String,
    pub cost_proxy: f64,
    /// Number of inference passes the strategy issues (5 for SC, 1 otherwise).
    pub samples: u32,
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost_proxy > 0.0 && self.cost_proxy.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "strategy `{}`: cost_proxy must be positive and finite, got {}",
                self.name, self.cost_proxy
            )));
        }
        if self.samples < 1 {
            return Err(Error::InvalidConfig(format!(
                "strategy `{}`: samples must be >= 1",
                self.name
            )));
        }
        // Self-consistency is the only multi-sample strategy in the library.
        if (self.name == "SC") != (self.samples == 5) {
            return Err(Error::InvalidConfig(format!(
                "strategy `{}`: samples = 5 exactly when the strategy is SC, got {}",
                self.name, self.samples
            )));
        }
        Ok(())
    }
}

/// The ordered discrete action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyLibrary {
    strategies: Vec<Strategy>,
}

impl StrategyLibrary {
    pub fn new(strategies: Vec<Strategy>) -> Result<Self> {
        let lib = Self { strategies };
        lib.validate()?;
        Ok(lib)
    }

    /// The five-strategy default library: ZS, FS, CoT, GFP, SC with cost
    /// proxies 1.0, 1.5, 4.0, 5.5, 20.0.
    pub fn standard() -> Self {
        let entries: [(&str, f64, u32); 5] = [
            ("ZS", 1.0, 1),
            ("FS", 1.5, 1),
            ("CoT", 4.0, 1),
            ("GFP", 5.5, 1),
            ("SC", 20.0, 5),
        ];
        let strategies = entries
            .iter()
            .enumerate()
            .map(|(id, (name, cost_proxy, samples))| Strategy {
                id,
                name: (*name).to_string(),
                cost_proxy: *cost_proxy,
                samples: *samples,
            })
            .collect();
        Self { strategies }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig("strategy library is empty".into()));
        }
        for (pos, s) in self.strategies.iter().enumerate() {
            s.validate()?;
            if s.id != pos {
                return Err(Error::InvalidConfig(format!(
                    "strategy ids must be contiguous 0..N-1; position {pos} has id {}",
                    s.id
                )));
            }
        }
        if !self.strategies.iter().any(|s| s.cost_proxy == 1.0) {
            return Err(Error::InvalidConfig(
                "no strategy has cost_proxy = 1.0 (the baseline anchor)".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn get(&self, id: StrategyId) -> Result<&Strategy> {
        self.strategies.get(id).ok_or(Error::UnknownStrategy(id))
    }

    pub fn by_name(&self, name: &str) -> Option<&Strategy> {
        self.strategies.iter().find(|s| s.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Strategy> {
        self.strategies.iter()
    }

    /// Id of the strategy with the smallest cost proxy.
    pub fn cheapest(&self) -> StrategyId {
        self.strategies
            .iter()
            .min_by(|a, b| a.cost_proxy.total_cmp(&b.cost_proxy))
            .map(|s| s.id)
            .expect("library is non-empty")
    }
}

/// Weights of the composite reward R = alpha * accuracy - beta * cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub alpha: f64,
    pub beta: f64,
}

impl RewardParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "reward params must satisfy alpha >= 0, beta >= 0, alpha + beta > 0; got alpha={}, beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// One query: a hidden difficulty plus the feature vector the policy observes.
///
/// `latent_difficulty` is environment-only and must never be fed to a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryState {
    pub latent_difficulty: f64,
    pub features: Vec<f64>,
    /// Per-query RNG seed; all environment randomness for this query derives
    /// from it.
    pub seed: u64,
}

impl QueryState {
    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.latent_difficulty) {
            return Err(Error::InvalidConfig(format!(
                "latent_difficulty must lie in [0,1], got {}",
                self.latent_difficulty
            )));
        }
        if self.features.len() != feature_dim {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                got: self.features.len(),
            });
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite feature entry".into()));
        }
        Ok(())
    }
}

/// Result of executing one strategy on one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Binary accuracy: 1.0 on success, 0.0 on failure.
    pub accuracy: f64,
    /// Observed cost in zero-shot multiples; positive and finite.
    pub observed_cost: f64,
}

impl Outcome {
    pub fn validate(&self) -> Result<()> {
        if self.accuracy != 0.0 && self.accuracy != 1.0 {
            return Err(Error::InvalidConfig(format!(
                "accuracy must be 0 or 1, got {}",
                self.accuracy
            )));
        }
        if !(self.observed_cost > 0.0 && self.observed_cost.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "observed_cost must be positive and finite, got {}",
                self.observed_cost
            )));
        }
        Ok(())
    }
}

/// One collected (state, action, reward, old policy probability) record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: Vec<f64>,
    pub action: StrategyId,
    pub reward: f64,
    /// Probability the collecting policy assigned to `action`; in (0, 1].
    pub old_prob: f64,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if !(self.old_prob > 0.0 && self.old_prob <= 1.0) {
            return Err(Error::DataCorruption(format!(
                "old_prob must lie in (0,1], got {}",
                self.old_prob
            )));
        }
        if !self.reward.is_finite() {
            return Err(Error::DataCorruption(format!(
                "non-finite reward {}",
                self.reward
            )));
        }
        Ok(())
    }
}

/// Composite reward R = alpha * accuracy - beta * observed_cost.
///
/// Exact affine combination, no clipping or normalization.
pub fn compute_reward(outcome: &Outcome, params: &RewardParams) -> f64 {
    params.alpha * outcome.accuracy - params.beta * outcome.observed_cost
}

/// Fractional cost reduction relative to a reference:
/// (cost_reference - cost_method) / cost_reference.
///
/// Negative when the method is costlier than the reference.
pub fn efficiency_gain(cost_method: f64, cost_reference: f64) -> Result<f64> {
    if !(cost_reference > 0.0 && cost_reference.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "efficiency gain reference cost must be positive, got {cost_reference}"
        )));
    }
    Ok((cost_reference - cost_method) / cost_reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(accuracy: f64, cost: f64) -> Outcome {
        Outcome {
            accuracy,
            observed_cost: cost,
        }
    }

    #[test]
    fn reward_direct_substitution() {
        let p = RewardParams::new(10.0, 1.0).unwrap();
        assert_eq!(compute_reward(&outcome(1.0, 1.0), &p), 9.0);
    }

    #[test]
    fn reward_accuracy_term_vanishes() {
        let p = RewardParams::new(100.0, 1.0).unwrap();
        assert_eq!(compute_reward(&outcome(0.0, 20.0), &p), -20.0);
    }

    #[test]
    fn reward_fixed_sc_observed_cost() {
        let p = RewardParams::new(10.0, 1.0).unwrap();
        assert_eq!(compute_reward(&outcome(1.0, 20.5), &p), -10.5);
    }

    #[test]
    fn efficiency_gain_reference_rows() {
        // Cost columns vs the measured SC reference of 20.5.
        assert!((efficiency_gain(5.8, 20.5).unwrap() - 0.717).abs() < 0.0005);
        assert!((efficiency_gain(7.9, 20.5).unwrap() - 0.615).abs() < 0.0005);
        assert!((efficiency_gain(18.0, 20.5).unwrap() - 0.122).abs() < 0.0005);
        assert_eq!(efficiency_gain(20.5, 20.5).unwrap(), 0.0);
    }

    #[test]
    fn efficiency_gain_rejects_bad_reference() {
        assert!(efficiency_gain(1.0, 0.0).is_err());
        assert!(efficiency_gain(1.0, -3.0).is_err());
    }

    #[test]
    fn standard_library_shape() {
        let lib = StrategyLibrary::standard();
        lib.validate().unwrap();
        assert_eq!(lib.len(), 5);
        let names: Vec<&str> = lib.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["ZS", "FS", "CoT", "GFP", "SC"]);
        let costs: Vec<f64> = lib.iter().map(|s| s.cost_proxy).collect();
        assert_eq!(costs, [1.0, 1.5, 4.0, 5.5, 20.0]);
        assert_eq!(lib.by_name("SC").unwrap().samples, 5);
        assert_eq!(lib.cheapest(), 0);
    }

    #[test]
    fn library_rejects_gapped_ids() {
        let mut strategies: Vec<Strategy> = StrategyLibrary::standard().iter().cloned().collect();
        strategies[2].id = 7;
        assert!(StrategyLibrary::new(strategies).is_err());
    }

    #[test]
    fn library_rejects_missing_anchor() {
        let strategies = vec![
            Strategy {
                id: 0,
                name: "A".into(),
                cost_proxy: 2.0,
                samples: 1,
            },
            Strategy {
                id: 1,
                name: "B".into(),
                cost_proxy: 3.0,
                samples: 1,
            },
        ];
        assert!(matches!(
            StrategyLibrary::new(strategies),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn strategy_rejects_sc_sample_mismatch() {
        let s = Strategy {
            id: 4,
            name: "SC".into(),
            cost_proxy: 20.0,
            samples: 3,
        };
        assert!(s.validate().is_err());
        let s = Strategy {
            id: 0,
            name: "ZS".into(),
            cost_proxy: 1.0,
            samples: 5,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn reward_params_rejects_all_zero() {
        assert!(RewardParams::new(0.0, 0.0).is_err());
        assert!(RewardParams::new(-1.0, 2.0).is_err());
        assert!(RewardParams::new(0.0, 1e-6).is_ok());
    }

    #[test]
    fn transition_rejects_zero_old_prob() {
        let t = Transition {
            features: vec![0.0],
            action: 0,
            reward: 1.0,
            old_prob: 0.0,
        };
        assert!(matches!(t.validate(), Err(Error::DataCorruption(_))));
    }
}
