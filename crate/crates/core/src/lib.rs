//! Cost-aware prompt strategy selection.
//!
//! A single-step decision process: observe a query's feature vector, pick one
//! prompt strategy from a discrete library, receive a composite reward
//! `alpha * accuracy - beta * cost`. The crate provides:
//!
//! - [`domain`]: strategy library, reward arithmetic, shared value types
//! - [`synthenv`]: a calibrated simulated LLM environment
//! - [`policynet`]: a small policy/value network with exact analytic gradients
//! - [`ppo`]: the clipped-surrogate trainer
//! - [`baselines`]: fixed and threshold-heuristic reference policies
//! - [`eval`]: rollout metrics, weight sweeps, Pareto filtering
//! - [`backend`]: the environment port plus an HTTP adapter for live models

pub mod backend;
pub mod baselines;
pub mod checkpoint;
pub mod domain;
pub mod error;
pub mod eval;
pub mod policynet;
pub mod ppo;
pub mod seeding;
pub mod synthenv;

pub use error::{Error, Result};
