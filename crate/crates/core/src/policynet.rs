//! Minimal feedforward policy/value network.
//!
//! A shared tanh trunk branches into a softmax policy head over strategies
//! and a scalar value head. Parameters live in one flat `Vec<f64>` with a
//! deterministic layout (per layer: weights row-major `[out][in]`, then
//! biases; trunk layers first, then policy head, then value head), which
//! makes gradients, optimizer state, and checkpoints trivially alignable.
//!
//! Gradients are exact reverse-mode, hand-derived; the test suite checks
//! every coordinate against central finite differences before anything else
//! trusts them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, Stream};

/// Architecture description; immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub n_actions: usize,
}

impl NetConfig {
    pub fn new(feature_dim: usize, hidden: Vec<usize>, n_actions: usize) -> Result<Self> {
        if feature_dim < 1 {
            return Err(Error::InvalidConfig("feature_dim must be >= 1".into()));
        }
        if n_actions < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 actions, got {n_actions}"
            )));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden sizes must be >= 1".into()));
        }
        Ok(Self {
            feature_dim,
            hidden,
            n_actions,
        })
    }

    /// (in, out) shapes of every dense layer in parameter-layout order:
    /// trunk layers, policy head, value head.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 2);
        let mut prev = self.feature_dim;
        for &h in &self.hidden {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, self.n_actions));
        shapes.push((prev, 1));
        shapes
    }

    /// Total number of parameters.
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }

    fn trunk_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.feature_dim)
    }
}

/// The network: a config plus the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueNet {
    config: NetConfig,
    params: Vec<f64>,
}

/// Cached forward pass, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Post-tanh activations per trunk layer (input excluded).
    activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub policy: Vec<f64>,
    pub log_policy: Vec<f64>,
    pub value: f64,
}

impl PolicyValueNet {
    /// Scaled-uniform initialization: weights from U(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in)), biases zero. Deterministic given the seed.
    pub fn init(seed: u64, config: NetConfig) -> Self {
        let mut rng = seeding::rng(seed, Stream::NetInit, 0);
        let mut params = Vec::with_capacity(config.param_count());
        for (fan_in, fan_out) in config.layer_shapes() {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-scale..scale));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { config, params }
    }

    /// All-zero parameters: uniform policy and zero value for any input.
    pub fn zeros(config: NetConfig) -> Self {
        let params = vec![0.0; config.param_count()];
        Self { config, params }
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        if params.len() != config.param_count() {
            return Err(Error::DimensionMismatch {
                expected: config.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence("non-finite parameter".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_actions(&self) -> usize {
        self.config.n_actions
    }

    /// Forward pass returning (policy distribution, value).
    pub fn forward(&self, features: &[f64]) -> Result<(Vec<f64>, f64)> {
        let trace = self.forward_trace(features)?;
        Ok((trace.policy, trace.value))
    }

    /// Forward pass keeping the activations needed for `backward`.
    pub fn forward_trace(&self, features: &[f64]) -> Result<ForwardTrace> {
        if features.len() != self.config.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.feature_dim,
                got: features.len(),
            });
        }
        let shapes = self.config.layer_shapes();
        let n_trunk = self.config.hidden.len();
        let mut offset = 0;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_trunk);
        let mut current: &[f64] = features;
        for &(fan_in, fan_out) in shapes.iter().take(n_trunk) {
            let mut next = affine(&self.params[offset..], fan_in, fan_out, current);
            for v in &mut next {
                *v = v.tanh();
            }
            offset += fan_in * fan_out + fan_out;
            activations.push(next);
            current = activations.last().unwrap();
        }
        let (p_in, p_out) = shapes[n_trunk];
        let logits = affine(&self.params[offset..], p_in, p_out, current);
        offset += p_in * p_out + p_out;
        let (v_in, v_out) = shapes[n_trunk + 1];
        debug_assert_eq!(v_out, 1);
        let value = affine(&self.params[offset..], v_in, v_out, current)[0];
        let (policy, log_policy) = softmax(&logits);
        Ok(ForwardTrace {
            activations,
            logits,
            policy,
            log_policy,
            value,
        })
    }

    /// Accumulate exact parameter gradients for one sample into `grad`.
    ///
    /// `upstream_logits` is dL/d(logits) and `upstream_value` dL/d(value);
    /// both heads feed the shared trunk.
    pub fn backward_into(
        &self,
        features: &[f64],
        trace: &ForwardTrace,
        upstream_logits: &[f64],
        upstream_value: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        if upstream_logits.len() != self.config.n_actions {
            return Err(Error::DimensionMismatch {
                expected: self.config.n_actions,
                got: upstream_logits.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let shapes = self.config.layer_shapes();
        let n_trunk = self.config.hidden.len();
        let trunk_out: &[f64] = if n_trunk == 0 {
            features
        } else {
            &trace.activations[n_trunk - 1]
        };

        // Layer parameter offsets in the flat layout.
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut acc = 0;
        for &(i, o) in &shapes {
            offsets.push(acc);
            acc += i * o + o;
        }

        let width = self.config.trunk_width();
        let mut d_trunk = vec![0.0; width];

        // Policy head.
        let (p_in, p_out) = shapes[n_trunk];
        let p_off = offsets[n_trunk];
        accumulate_dense_grads(
            &self.params[p_off..],
            p_in,
            p_out,
            trunk_out,
            upstream_logits,
            &mut grad[p_off..],
            Some(&mut d_trunk),
        );

        // Value head.
        let (v_in, v_out) = shapes[n_trunk + 1];
        let v_off = offsets[n_trunk + 1];
        accumulate_dense_grads(
            &self.params[v_off..],
            v_in,
            v_out,
            trunk_out,
            &[upstream_value],
            &mut grad[v_off..],
            Some(&mut d_trunk),
        );

        // Trunk, back to front.
        let mut d_out = d_trunk;
        for layer in (0..n_trunk).rev() {
            let (fan_in, fan_out) = shapes[layer];
            let off = offsets[layer];
            let act = &trace.activations[layer];
            // tanh'(z) = 1 - tanh(z)^2
            let mut dz = vec![0.0; fan_out];
            for o in 0..fan_out {
                dz[o] = d_out[o] * (1.0 - act[o] * act[o]);
            }
            let input: &[f64] = if layer == 0 {
                features
            } else {
                &trace.activations[layer - 1]
            };
            let mut d_in = vec![0.0; fan_in];
            accumulate_dense_grads(
                &self.params[off..],
                fan_in,
                fan_out,
                input,
                &dz,
                &mut grad[off..],
                Some(&mut d_in),
            );
            d_out = d_in;
        }
        Ok(())
    }

    /// Allocate-and-return variant of [`backward_into`].
    pub fn backward(
        &self,
        features: &[f64],
        upstream_logits: &[f64],
        upstream_value: f64,
    ) -> Result<Vec<f64>> {
        let trace = self.forward_trace(features)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(features, &trace, upstream_logits, upstream_value, &mut grad)?;
        Ok(grad)
    }
}

/// y = W x + b for one dense layer stored at the head of `params`.
fn affine(params: &[f64], fan_in: usize, fan_out: usize, input: &[f64]) -> Vec<f64> {
    let bias_off = fan_in * fan_out;
    let mut out = Vec::with_capacity(fan_out);
    for o in 0..fan_out {
        let row = &params[o * fan_in..(o + 1) * fan_in];
        let mut sum = params[bias_off + o];
        for (w, x) in row.iter().zip(input) {
            sum += w * x;
        }
        out.push(sum);
    }
    out
}

/// Given dL/d(output) for a dense layer, add the weight/bias gradients to
/// `grad` and, when requested, add W^T dL/d(output) into `d_input`.
fn accumulate_dense_grads(
    params: &[f64],
    fan_in: usize,
    fan_out: usize,
    input: &[f64],
    d_output: &[f64],
    grad: &mut [f64],
    d_input: Option<&mut Vec<f64>>,
) {
    let bias_off = fan_in * fan_out;
    for o in 0..fan_out {
        let g = d_output[o];
        let row = o * fan_in;
        for i in 0..fan_in {
            grad[row + i] += g * input[i];
        }
        grad[bias_off + o] += g;
    }
    if let Some(d_in) = d_input {
        for o in 0..fan_out {
            let g = d_output[o];
            let row = &params[o * fan_in..(o + 1) * fan_in];
            for i in 0..fan_in {
                d_in[i] += g * row[i];
            }
        }
    }
}

/// Numerically stabilized softmax; returns (probabilities, log-probabilities).
pub fn softmax(logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let shifted: Vec<f64> = logits.iter().map(|z| z - max).collect();
    for z in &shifted {
        sum += z.exp();
    }
    let log_sum = sum.ln();
    let log_policy: Vec<f64> = shifted.iter().map(|z| z - log_sum).collect();
    let policy: Vec<f64> = log_policy.iter().map(|lp| lp.exp()).collect();
    (policy, log_policy)
}

/// Shannon entropy of a distribution, in nats.
pub fn entropy(policy: &[f64]) -> f64 {
    -policy
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Draw an action from a categorical distribution; returns the drawn index
/// and the exact probability the distribution assigned to it.
pub fn sample_action<R: Rng>(policy: &[f64], rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, &p) in policy.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return (i, p);
        }
    }
    // Cumulative rounding can leave u just past the final sum.
    let last = policy.len() - 1;
    (last, policy[last])
}

/// Update direction for [`OptimizerState::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

/// Adam moment accumulators plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn from_parts(
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                got: v.len(),
            });
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step,
            m,
            v,
        })
    }

    /// One Adam step on the network in the requested direction.
    ///
    /// A non-finite gradient aborts before any state is touched; non-finite
    /// parameters after the step are a hard error.
    pub fn apply(
        &mut self,
        net: &mut PolicyValueNet,
        gradient: &[f64],
        direction: Direction,
    ) -> Result<()> {
        if gradient.len() != net.params.len() || gradient.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                got: gradient.len(),
            });
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence(
                "non-finite gradient; update aborted".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let sign = match direction {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        for (i, g) in gradient.iter().enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            net.params[i] += sign * self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence(
                "non-finite parameter after update".into(),
            ));
        }
        Ok(())
    }
}
