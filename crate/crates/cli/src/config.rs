//! Experiment configuration file: one TOML document with tables for the
//! environment, the strategy library (with per-strategy success-curve
//! templates and calibration targets), the trainer, the evaluator, and the
//! threshold heuristic. Command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use prompt_policy::baselines::HeuristicConfig;
use prompt_policy::domain::{RewardParams, Strategy, StrategyLibrary};
use prompt_policy::ppo::PPOConfig;
use prompt_policy::synthenv::{
    self, CalibrationTarget, DifficultyDistribution, EnvConfig, FeatureConfig, ProfileTemplate,
    StrategyProfile,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub env: EnvSection,
    /// Empty means the standard five-strategy library with default shapes
    /// and targets.
    #[serde(default)]
    pub strategies: Vec<StrategyEntry>,
    #[serde(default)]
    pub ppo: PpoSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub heuristic: HeuristicSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            env: EnvSection::default(),
            strategies: default_strategy_entries(),
            ppo: PpoSection::default(),
            eval: EvalSection::default(),
            heuristic: HeuristicSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub master_seed: u64,
    pub feature_dim: usize,
    pub informative_dims: usize,
    pub feature_noise_sigma: f64,
    pub difficulty_distribution: DifficultyDistribution,
}

impl Default for EnvSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self {
            master_seed: 20_240_601,
            feature_dim: f.feature_dim,
            informative_dims: f.informative_dims,
            feature_noise_sigma: f.feature_noise_sigma,
            difficulty_distribution: f.difficulty_distribution,
        }
    }
}

/// One strategy: action-space entry, success-curve template, calibration
/// target, and (after calibration) the solved threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub name: String,
    pub cost_proxy: f64,
    #[serde(default = "one")]
    pub samples: u32,
    pub floor: f64,
    pub ceiling: f64,
    pub sharpness: f64,
    #[serde(default)]
    pub cost_noise_scale: f64,
    /// Target mean accuracy of the always-this-strategy policy.
    pub accuracy_target: f64,
    /// Target mean observed cost.
    pub cost_target: f64,
    /// Solved by `calibrate`; required by every other command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoSection {
    pub alpha: f64,
    pub beta: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub k_epochs: usize,
    pub batch_size: usize,
    pub episodes: usize,
    pub advantage_normalization: bool,
    pub minibatch_size: usize,
    pub value_loss_weight: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for PpoSection {
    fn default() -> Self {
        let c = PPOConfig::new(
            RewardParams {
                alpha: 10.0,
                beta: 1.0,
            },
            7,
        );
        Self {
            alpha: 10.0,
            beta: 1.0,
            clip_epsilon: c.clip_epsilon,
            entropy_coef: c.entropy_coef,
            k_epochs: c.k_epochs,
            batch_size: c.batch_size,
            episodes: c.episodes,
            advantage_normalization: c.advantage_normalization,
            minibatch_size: c.minibatch_size,
            value_loss_weight: c.value_loss_weight,
            learning_rate: c.learning_rate,
            hidden: c.hidden,
            grad_clip_norm: c.grad_clip_norm,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_queries: u64,
    pub eval_seed: u64,
    /// Sample from the policy head instead of taking the argmax.
    pub sampled: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_queries: 20_000,
            eval_seed: 1,
            sampled: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicSection {
    pub feature_index: usize,
    pub target_high_fraction: f64,
    pub low_action: String,
    pub high_action: String,
    pub tuning_samples: u64,
}

impl Default for HeuristicSection {
    fn default() -> Self {
        Self {
            feature_index: 0,
            target_high_fraction: 0.35,
            low_action: "ZS".into(),
            high_action: "CoT".into(),
            tuning_samples: 20_000,
        }
    }
}

/// The shipped default strategy entries: standard library shapes + targets.
pub fn default_strategy_entries() -> Vec<StrategyEntry> {
    let library = StrategyLibrary::standard();
    let templates = synthenv::default_templates();
    let targets = synthenv::default_targets();
    library
        .iter()
        .zip(templates.iter().zip(targets.iter()))
        .map(|(s, (template, target))| StrategyEntry {
            name: s.name.clone(),
            cost_proxy: s.cost_proxy,
            samples: s.samples,
            floor: template.floor,
            ceiling: template.ceiling,
            sharpness: template.sharpness,
            cost_noise_scale: template.cost_noise_scale,
            accuracy_target: target.mean_accuracy,
            cost_target: target.mean_cost,
            threshold: None,
        })
        .collect()
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if config.strategies.is_empty() {
            config.strategies = default_strategy_entries();
        }
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn library(&self) -> CliResult<StrategyLibrary> {
        let strategies = self
            .strategies
            .iter()
            .enumerate()
            .map(|(id, e)| Strategy {
                id,
                name: e.name.clone(),
                cost_proxy: e.cost_proxy,
                samples: e.samples,
            })
            .collect();
        StrategyLibrary::new(strategies).map_err(CliError::from_core_config)
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            feature_dim: self.env.feature_dim,
            informative_dims: self.env.informative_dims,
            feature_noise_sigma: self.env.feature_noise_sigma,
            difficulty_distribution: self.env.difficulty_distribution,
        }
    }

    pub fn templates(&self) -> Vec<ProfileTemplate> {
        self.strategies
            .iter()
            .map(|e| ProfileTemplate {
                floor: e.floor,
                ceiling: e.ceiling,
                sharpness: e.sharpness,
                cost_noise_scale: e.cost_noise_scale,
            })
            .collect()
    }

    pub fn targets(&self) -> Vec<CalibrationTarget> {
        self.strategies
            .iter()
            .map(|e| CalibrationTarget {
                mean_accuracy: e.accuracy_target,
                mean_cost: e.cost_target,
            })
            .collect()
    }

    /// Environment from calibrated thresholds; errors when any strategy has
    /// not been calibrated yet.
    pub fn env_config(&self) -> CliResult<EnvConfig> {
        let library = self.library()?;
        let mut profiles = Vec::with_capacity(self.strategies.len());
        for e in &self.strategies {
            let threshold = e.threshold.ok_or_else(|| {
                CliError::Config(format!(
                    "strategy `{}` has no calibrated threshold; run `calibrate` first",
                    e.name
                ))
            })?;
            profiles.push(StrategyProfile {
                floor: e.floor,
                ceiling: e.ceiling,
                threshold,
                sharpness: e.sharpness,
                mean_cost: e.cost_target,
                cost_noise_scale: e.cost_noise_scale,
            });
        }
        let env = EnvConfig {
            library,
            profiles,
            feature_dim: self.env.feature_dim,
            informative_dims: self.env.informative_dims,
            feature_noise_sigma: self.env.feature_noise_sigma,
            difficulty_distribution: self.env.difficulty_distribution,
            master_seed: self.env.master_seed,
        };
        env.validate().map_err(CliError::from_core_config)?;
        Ok(env)
    }

    pub fn ppo_config(&self) -> CliResult<PPOConfig> {
        let reward_params = RewardParams {
            alpha: self.ppo.alpha,
            beta: self.ppo.beta,
        };
        let config = PPOConfig {
            clip_epsilon: self.ppo.clip_epsilon,
            entropy_coef: self.ppo.entropy_coef,
            k_epochs: self.ppo.k_epochs,
            batch_size: self.ppo.batch_size,
            episodes: self.ppo.episodes,
            reward_params,
            advantage_normalization: self.ppo.advantage_normalization,
            minibatch_size: self.ppo.minibatch_size,
            value_loss_weight: self.ppo.value_loss_weight,
            learning_rate: self.ppo.learning_rate,
            hidden: self.ppo.hidden.clone(),
            grad_clip_norm: self.ppo.grad_clip_norm,
            seed: self.ppo.seed,
        };
        config.validate().map_err(CliError::from_core_config)?;
        Ok(config)
    }

    pub fn heuristic_config(&self) -> CliResult<HeuristicConfig> {
        let library = self.library()?;
        let find = |name: &str| {
            library
                .by_name(name)
                .map(|s| s.id)
                .ok_or_else(|| CliError::Config(format!("heuristic references unknown strategy `{name}`")))
        };
        let config = HeuristicConfig {
            feature_index: self.heuristic.feature_index,
            threshold: f64::NAN, // tuned at run time
            low_action: find(&self.heuristic.low_action)?,
            high_action: find(&self.heuristic.high_action)?,
        };
        config
            .validate(self.env.feature_dim)
            .map_err(CliError::from_core_config)?;
        Ok(config)
    }
}
