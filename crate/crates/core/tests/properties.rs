//! Property tests for the arithmetic core.

use proptest::prelude::*;

use prompt_policy::domain::{compute_reward, efficiency_gain, Outcome, RewardParams};
use prompt_policy::policynet::{entropy, sample_action, softmax};
use prompt_policy::synthenv::{generate_query, EnvConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn outcome_strategy() -> impl Strategy<Value = Outcome> {
    (prop::bool::ANY, 0.01f64..50.0).prop_map(|(hit, cost)| Outcome {
        accuracy: if hit { 1.0 } else { 0.0 },
        observed_cost: cost,
    })
}

proptest! {
    /// Scaling both weights by c > 0 scales the reward by c.
    #[test]
    fn reward_is_positively_homogeneous(
        outcome in outcome_strategy(),
        alpha in 0.0f64..200.0,
        beta in 0.001f64..10.0,
        c in 0.01f64..100.0,
    ) {
        let base = RewardParams { alpha, beta };
        let scaled = RewardParams { alpha: c * alpha, beta: c * beta };
        let lhs = compute_reward(&outcome, &scaled);
        let rhs = c * compute_reward(&outcome, &base);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    /// Under joint positive scaling the best strategy in any outcome table
    /// stays the best.
    #[test]
    fn reward_argmax_is_scale_invariant(
        costs in prop::collection::vec(0.01f64..30.0, 2..6),
        hits in prop::collection::vec(prop::bool::ANY, 2..6),
        alpha in 0.1f64..100.0,
        beta in 0.01f64..5.0,
        c in 0.01f64..50.0,
    ) {
        let n = costs.len().min(hits.len());
        let outcomes: Vec<Outcome> = (0..n)
            .map(|i| Outcome {
                accuracy: if hits[i] { 1.0 } else { 0.0 },
                observed_cost: costs[i],
            })
            .collect();
        let argmax = |params: &RewardParams| {
            let mut best = 0;
            for i in 1..outcomes.len() {
                if compute_reward(&outcomes[i], params)
                    > compute_reward(&outcomes[best], params)
                {
                    best = i;
                }
            }
            best
        };
        let base = RewardParams { alpha, beta };
        let scaled = RewardParams { alpha: c * alpha, beta: c * beta };
        prop_assert_eq!(argmax(&base), argmax(&scaled));
    }

    /// Holding accuracy fixed, reward strictly decreases in cost when the
    /// cost weight is positive; holding cost fixed, it is nondecreasing in
    /// accuracy when the accuracy weight is positive.
    #[test]
    fn reward_monotonicity(
        alpha in 0.1f64..100.0,
        beta in 0.001f64..10.0,
        cost in 0.01f64..30.0,
        extra in 0.01f64..10.0,
    ) {
        let params = RewardParams { alpha, beta };
        let cheap = Outcome { accuracy: 1.0, observed_cost: cost };
        let dear = Outcome { accuracy: 1.0, observed_cost: cost + extra };
        prop_assert!(compute_reward(&dear, &params) < compute_reward(&cheap, &params));

        let miss = Outcome { accuracy: 0.0, observed_cost: cost };
        let hit = Outcome { accuracy: 1.0, observed_cost: cost };
        prop_assert!(compute_reward(&hit, &params) >= compute_reward(&miss, &params));
    }

    /// Efficiency gain vanishes at the reference point and strictly
    /// decreases in method cost.
    #[test]
    fn efficiency_gain_shape(
        reference in 0.01f64..100.0,
        cost in 0.01f64..100.0,
        extra in 0.01f64..10.0,
    ) {
        prop_assert_eq!(efficiency_gain(reference, reference).unwrap(), 0.0);
        let lo = efficiency_gain(cost, reference).unwrap();
        let hi = efficiency_gain(cost + extra, reference).unwrap();
        prop_assert!(hi < lo);
    }

    /// Softmax of any bounded logit vector is a valid distribution with
    /// entropy inside [0, ln N].
    #[test]
    fn softmax_is_always_a_distribution(
        logits in prop::collection::vec(-500.0f64..500.0, 2..8),
    ) {
        let (p, log_p) = softmax(&logits);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (prob, lp) in p.iter().zip(log_p.iter()) {
            if *prob > 0.0 {
                prop_assert!((lp.exp() - prob).abs() < 1e-12);
            }
        }
        let h = entropy(&p);
        prop_assert!(h >= -1e-12 && h <= (p.len() as f64).ln() + 1e-12);
    }

    /// Sampling always returns the exact probability of the drawn action.
    #[test]
    fn sampling_reports_exact_probability(
        logits in prop::collection::vec(-20.0f64..20.0, 2..8),
        seed in prop::num::u64::ANY,
    ) {
        let (p, _) = softmax(&logits);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (action, prob) = sample_action(&p, &mut rng);
        prop_assert!(action < p.len());
        prop_assert_eq!(prob, p[action]);
    }

    /// Query generation is a pure function of (config, index).
    #[test]
    fn query_generation_is_pure(master in prop::num::u64::ANY, index in 0u64..1_000_000) {
        let config = EnvConfig::standard(master);
        let a = generate_query(&config, index);
        let b = generate_query(&config, index);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.features.len(), config.feature_dim);
        prop_assert!(a.latent_difficulty >= 0.0 && a.latent_difficulty <= 1.0);
        prop_assert!(a.features.iter().all(|x| x.is_finite()));
    }
}
