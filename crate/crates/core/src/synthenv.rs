//! Synthetic query generator and simulated language-model environment.
//!
//! The environment is a calibrated generative model: each strategy gets a
//! logistic success curve over a hidden per-query difficulty, plus a
//! mean-preserving noisy cost. Curve thresholds are solved by bisection so
//! that fixed-strategy aggregates hit configured targets exactly.
//!
//! Everything is a pure function of (config, query index, action): identical
//! inputs yield identical outputs, which makes parallel rollouts bitwise
//! equal to sequential ones.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Outcome, QueryState, StrategyId, StrategyLibrary};
use crate::error::{Error, Result};
use crate::seeding::{self, Stream};

/// Success-curve and cost parameters for one strategy.
///
/// Success probability at difficulty `d` is
/// `floor + (ceiling - floor) * logistic(sharpness * (threshold - d))`,
/// strictly decreasing in `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub floor: f64,
    pub ceiling: f64,
    /// Difficulty at which the curve crosses the floor/ceiling midpoint.
    pub threshold: f64,
    pub sharpness: f64,
    /// Target mean observed cost, in zero-shot multiples.
    pub mean_cost: f64,
    /// Half-normal cost spread; the mean stays `mean_cost` exactly.
    pub cost_noise_scale: f64,
}

impl StrategyProfile {
    pub fn validate(&self) -> Result<()> {
        // floor == ceiling is allowed as a degenerate constant-probability
        // profile (useful for certain-success tests).
        if !(0.0 <= self.floor && self.floor <= self.ceiling && self.ceiling <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "profile must satisfy 0 <= floor <= ceiling <= 1, got floor={}, ceiling={}",
                self.floor, self.ceiling
            )));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sharpness must be positive, got {}",
                self.sharpness
            )));
        }
        if !(self.mean_cost > 0.0 && self.mean_cost.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mean_cost must be positive, got {}",
                self.mean_cost
            )));
        }
        // The half-normal correction keeps realized costs positive only while
        // cost_noise_scale * sqrt(2/pi) < 1.
        if !(0.0..1.25).contains(&self.cost_noise_scale) {
            return Err(Error::InvalidConfig(format!(
                "cost_noise_scale must lie in [0, 1.25), got {}",
                self.cost_noise_scale
            )));
        }
        Ok(())
    }
}

/// How latent difficulties are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyDistribution {
    Uniform01,
}

impl DifficultyDistribution {
    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            DifficultyDistribution::Uniform01 => rng.gen::<f64>(),
        }
    }
}

/// Full environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub library: StrategyLibrary,
    /// One profile per strategy id, in library order.
    pub profiles: Vec<StrategyProfile>,
    pub feature_dim: usize,
    /// How many leading feature entries carry difficulty signal.
    pub informative_dims: usize,
    pub feature_noise_sigma: f64,
    pub difficulty_distribution: DifficultyDistribution,
    pub master_seed: u64,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.library.validate()?;
        if self.profiles.len() != self.library.len() {
            return Err(Error::InvalidConfig(format!(
                "need exactly one profile per strategy: {} profiles for {} strategies",
                self.profiles.len(),
                self.library.len()
            )));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be >= 1".into()));
        }
        if !(1..=self.feature_dim).contains(&self.informative_dims) {
            return Err(Error::InvalidConfig(format!(
                "informative_dims must lie in 1..={}, got {}",
                self.feature_dim, self.informative_dims
            )));
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "feature_noise_sigma must be >= 0, got {}",
                self.feature_noise_sigma
            )));
        }
        Ok(())
    }

    pub fn profile(&self, action: StrategyId) -> Result<&StrategyProfile> {
        self.profiles.get(action).ok_or(Error::UnknownStrategy(action))
    }

    /// Shipped default: standard library calibrated to the default targets.
    pub fn standard(master_seed: u64) -> Self {
        calibrate(
            &StrategyLibrary::standard(),
            &default_templates(),
            &default_targets(),
            FeatureConfig::default(),
            master_seed,
        )
        .expect("default targets are reachable under default templates")
    }
}

/// Feature-generator settings, split out so calibration can take them whole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub feature_dim: usize,
    pub informative_dims: usize,
    pub feature_noise_sigma: f64,
    pub difficulty_distribution: DifficultyDistribution,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            informative_dims: 4,
            feature_noise_sigma: 0.05,
            difficulty_distribution: DifficultyDistribution::Uniform01,
        }
    }
}

/// Success-curve shape with the threshold left free for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTemplate {
    pub floor: f64,
    pub ceiling: f64,
    pub sharpness: f64,
    pub cost_noise_scale: f64,
}

/// Per-strategy calibration target: the fixed-strategy aggregate the
/// environment must reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub mean_accuracy: f64,
    pub mean_cost: f64,
}

/// Default curve shapes for the five standard strategies.
///
/// Shapes differ per strategy: cheap single-pass prompting is sharp (reliable
/// on easy queries, hopeless past its threshold) while reasoning-heavy
/// strategies degrade gently. These shapes, together with the default
/// targets, reproduce the fixed-strategy and threshold-heuristic aggregates
/// the experiment suite checks.
pub fn default_templates() -> Vec<ProfileTemplate> {
    vec![
        // ZS
        ProfileTemplate {
            floor: 0.01,
            ceiling: 0.99,
            sharpness: 30.0,
            cost_noise_scale: 0.10,
        },
        // FS
        ProfileTemplate {
            floor: 0.04,
            ceiling: 0.90,
            sharpness: 16.0,
            cost_noise_scale: 0.10,
        },
        // CoT
        ProfileTemplate {
            floor: 0.36,
            ceiling: 0.90,
            sharpness: 1.8,
            cost_noise_scale: 0.10,
        },
        // GFP
        ProfileTemplate {
            floor: 0.15,
            ceiling: 0.95,
            sharpness: 7.0,
            cost_noise_scale: 0.10,
        },
        // SC
        ProfileTemplate {
            floor: 0.84,
            ceiling: 0.935,
            sharpness: 2.5,
            cost_noise_scale: 0.08,
        },
    ]
}

/// Default calibration targets for the five standard strategies.
///
/// ZS / CoT / SC accuracies and ZS / CoT / SC mean costs are the published
/// aggregates; FS and GFP accuracies are interpolations (no published value
/// exists) and their costs fall back to the cost proxies.
pub fn default_targets() -> Vec<CalibrationTarget> {
    vec![
        CalibrationTarget {
            mean_accuracy: 0.552,
            mean_cost: 1.1,
        },
        CalibrationTarget {
            mean_accuracy: 0.65,
            mean_cost: 1.5,
        },
        CalibrationTarget {
            mean_accuracy: 0.750,
            mean_cost: 4.0,
        },
        CalibrationTarget {
            mean_accuracy: 0.78,
            mean_cost: 5.5,
        },
        CalibrationTarget {
            mean_accuracy: 0.895,
            mean_cost: 20.5,
        },
    ]
}

/// logistic(x) = 1 / (1 + e^-x), computed without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// softplus(x) = ln(1 + e^x), computed without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Success probability of a strategy at difficulty `d`.
pub fn success_probability(profile: &StrategyProfile, d: f64) -> f64 {
    profile.floor
        + (profile.ceiling - profile.floor) * logistic(profile.sharpness * (profile.threshold - d))
}

/// Expected success probability over the difficulty distribution.
///
/// For uniform difficulties the integral of the logistic term has the closed
/// form (softplus(k*t) - softplus(k*(t-1))) / k.
pub fn mean_success_probability(
    profile: &StrategyProfile,
    distribution: DifficultyDistribution,
) -> f64 {
    match distribution {
        DifficultyDistribution::Uniform01 => {
            let k = profile.sharpness;
            let t = profile.threshold;
            let mass = (softplus(k * t) - softplus(k * (t - 1.0))) / k;
            profile.floor + (profile.ceiling - profile.floor) * mass
        }
    }
}

/// Deterministically generate the `index`-th query.
///
/// Feature layout: entry 0 is the difficulty plus Gaussian noise; entries
/// 1..informative_dims are fixed nonlinear transforms of the difficulty plus
/// the same noise; every remaining entry is pure standard-normal noise.
pub fn generate_query(config: &EnvConfig, index: u64) -> QueryState {
    let seed = seeding::derive(config.master_seed, Stream::Query, index);
    let mut rng = seeding::rng(config.master_seed, Stream::Query, index);
    let d = config.difficulty_distribution.sample(&mut rng);
    let sigma = config.feature_noise_sigma;
    let mut features = Vec::with_capacity(config.feature_dim);
    for k in 0..config.feature_dim {
        let value = if k == 0 {
            let noise: f64 = rng.sample(StandardNormal);
            d + sigma * noise
        } else if k < config.informative_dims {
            let noise: f64 = rng.sample(StandardNormal);
            informative_transform(k, d) + sigma * noise
        } else {
            rng.sample(StandardNormal)
        };
        features.push(value);
    }
    QueryState {
        latent_difficulty: d,
        features,
        seed,
    }
}

/// Fixed nonlinear transforms for informative feature entries past the first.
fn informative_transform(k: usize, d: f64) -> f64 {
    match (k - 1) % 6 {
        0 => d * d,
        1 => (2.0 * std::f64::consts::PI * d).sin(),
        2 => (3.0 * std::f64::consts::PI * d).cos(),
        3 => d * d * d,
        4 => (4.0 * std::f64::consts::PI * d).sin(),
        _ => (5.0 * std::f64::consts::PI * d).cos(),
    }
}

/// Execute one strategy on one query.
///
/// Accuracy is Bernoulli in the strategy's success probability at the
/// query's hidden difficulty. Observed cost is
/// `mean_cost * (1 + |eps| * scale - scale * sqrt(2/pi))` with standard
/// normal `eps`, which has expectation `mean_cost` exactly. All randomness
/// derives from (query.seed, action), so the call is idempotent.
pub fn step(config: &EnvConfig, query: &QueryState, action: StrategyId) -> Result<Outcome> {
    let profile = config.profile(action)?;
    let mut rng = seeding::rng(query.seed, Stream::EnvStep, action as u64);
    let p = success_probability(profile, query.latent_difficulty);
    let accuracy = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
    let eps: f64 = rng.sample(StandardNormal);
    let scale = profile.cost_noise_scale;
    let correction = scale * (2.0 / std::f64::consts::PI).sqrt();
    let observed_cost = profile.mean_cost * (1.0 + eps.abs() * scale - correction);
    Ok(Outcome {
        accuracy,
        observed_cost,
    })
}

/// Solve per-strategy thresholds so each expected success probability matches
/// its target mean accuracy, and pin mean costs to the target costs.
pub fn calibrate(
    library: &StrategyLibrary,
    templates: &[ProfileTemplate],
    targets: &[CalibrationTarget],
    features: FeatureConfig,
    master_seed: u64,
) -> Result<EnvConfig> {
    if templates.len() != library.len() || targets.len() != library.len() {
        return Err(Error::InvalidConfig(format!(
            "calibration needs one template and one target per strategy ({} strategies, {} templates, {} targets)",
            library.len(),
            templates.len(),
            targets.len()
        )));
    }
    let mut profiles = Vec::with_capacity(library.len());
    for (strategy, (template, target)) in library.iter().zip(templates.iter().zip(targets.iter()))
    {
        let threshold = solve_threshold(
            template,
            target.mean_accuracy,
            features.difficulty_distribution,
        )
        .map_err(|_| Error::CalibrationUnreachable {
            strategy: strategy.name.clone(),
            target: target.mean_accuracy,
            lo: template.floor,
            hi: template.ceiling,
        })?;
        if target.mean_cost.is_nan() || target.mean_cost <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "target mean cost for `{}` must be positive, got {}",
                strategy.name, target.mean_cost
            )));
        }
        let profile = StrategyProfile {
            floor: template.floor,
            ceiling: template.ceiling,
            threshold,
            sharpness: template.sharpness,
            mean_cost: target.mean_cost,
            cost_noise_scale: template.cost_noise_scale,
        };
        profile.validate()?;
        profiles.push(profile);
    }
    let config = EnvConfig {
        library: library.clone(),
        profiles,
        feature_dim: features.feature_dim,
        informative_dims: features.informative_dims,
        feature_noise_sigma: features.feature_noise_sigma,
        difficulty_distribution: features.difficulty_distribution,
        master_seed,
    };
    config.validate()?;
    Ok(config)
}

/// Bisect for the threshold whose mean success probability equals `target`.
fn solve_threshold(
    template: &ProfileTemplate,
    target: f64,
    distribution: DifficultyDistribution,
) -> Result<f64> {
    if !(template.floor < target && target < template.ceiling) {
        return Err(Error::InvalidConfig(format!(
            "target {} not inside ({}, {})",
            target, template.floor, template.ceiling
        )));
    }
    let mean_at = |threshold: f64| {
        let probe = StrategyProfile {
            floor: template.floor,
            ceiling: template.ceiling,
            threshold,
            sharpness: template.sharpness,
            mean_cost: 1.0,
            cost_noise_scale: 0.0,
        };
        mean_success_probability(&probe, distribution)
    };
    // Mean success is strictly increasing in the threshold; widen until the
    // target is bracketed, then bisect.
    let mut lo = -1.0;
    let mut hi = 2.0;
    while mean_at(lo) > target {
        lo = lo * 2.0 - 1.0;
        if lo < -1e6 {
            return Err(Error::InvalidConfig("bracket failure (low)".into()));
        }
    }
    while mean_at(hi) < target {
        hi = hi * 2.0 + 1.0;
        if hi > 1e6 {
            return Err(Error::InvalidConfig("bracket failure (high)".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Check that calibrated mean accuracies are nondecreasing in library order
/// (costlier strategies are at least as good on average).
pub fn verify_mean_ordering(config: &EnvConfig) -> Result<()> {
    let means: Vec<f64> = config
        .profiles
        .iter()
        .map(|p| mean_success_probability(p, config.difficulty_distribution))
        .collect();
    for w in means.windows(2) {
        if w[1] < w[0] - 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mean accuracies must be nondecreasing in library order, got {means:?}"
            )));
        }
    }
    Ok(())
}

/// Count grid points where a costlier strategy's success curve dips below a
/// cheaper one's. The shipped default intentionally lets cheap strategies win
/// on easy queries, so this is a diagnostic, not an invariant.
pub fn pointwise_ordering_violations(config: &EnvConfig, grid: usize) -> usize {
    let mut violations = 0;
    for g in 0..grid {
        let d = (g as f64 + 0.5) / grid as f64;
        for pair in config.profiles.windows(2) {
            if success_probability(&pair[1], d) < success_probability(&pair[0], d) - 1e-12 {
                violations += 1;
            }
        }
    }
    violations
}
