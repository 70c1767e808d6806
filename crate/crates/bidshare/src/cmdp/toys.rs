//! Small hand-checkable models and a seeded random-instance generator.
//!
//! These fixtures are shared by unit tests, the acceptance suite, and the
//! book's worked examples, so they live in the library rather than in test
//! code.

use crate::cmdp::model::{ExplicitCmdp, ModelBuilder};
use crate::rng::RngStream;

/// One transient state `s0` with two actions, both stepping to `END`:
/// action 0 ("a") has reward 1 and constraint cost -1, action 1 ("b") has
/// reward 5 and constraint cost +1. Only "a" satisfies the constraint.
pub fn t1() -> ExplicitCmdp {
    t1_custom([(1.0, -1.0), (5.0, 1.0)])
}

/// T1 with both actions violating the constraint (cost +1 each); infeasible.
pub fn t1_infeasible() -> ExplicitCmdp {
    t1_custom([(1.0, 1.0), (5.0, 1.0)])
}

/// T1 with zero constraint cost on both actions; the constraint is vacuous.
pub fn t1_free() -> ExplicitCmdp {
    t1_custom([(1.0, 0.0), (5.0, 0.0)])
}

/// T1 with both actions identical in reward and cost; exercises tie-breaks.
pub fn t1_tie() -> ExplicitCmdp {
    t1_custom([(2.0, 0.0), (2.0, 0.0)])
}

pub fn t1_custom(actions: [(f64, f64); 2]) -> ExplicitCmdp {
    let mut b = ModelBuilder::new(2, 0, 1).absorbing(1);
    for (i, (reward, cost)) in actions.into_iter().enumerate() {
        b = b.action(0, i, reward, cost, vec![(1, 1.0)]);
    }
    b.build().expect("toy T1 must be valid")
}

/// Three states: `s0 -> {s1 w.p. 0.5, END w.p. 0.5}`, `s1 -> END`. Single
/// action everywhere; used for golden-trajectory tests.
pub fn branch_chain() -> ExplicitCmdp {
    ModelBuilder::new(3, 0, 2)
        .absorbing(2)
        .action(0, 0, 1.0, 0.0, vec![(1, 0.5), (2, 0.5)])
        .action(1, 0, 1.0, 0.0, vec![(2, 1.0)])
        .build()
        .expect("branch chain must be valid")
}

/// `s0` branches half/half to a high-reward and a zero-reward continuation;
/// the expected total reward is exactly 1.
pub fn branch_reward() -> ExplicitCmdp {
    ModelBuilder::new(4, 0, 2)
        .absorbing(3)
        .action(0, 0, 0.0, 0.0, vec![(1, 0.5), (2, 0.5)])
        .action(1, 0, 2.0, 0.0, vec![(3, 1.0)])
        .action(2, 0, 0.0, 0.0, vec![(3, 1.0)])
        .build()
        .expect("branch reward model must be valid")
}

/// Deterministic two-step chain whose only policy incurs constraint costs
/// +2 then -1, so the exact cumulative cost from the start is +1.
pub fn chain_plus_minus() -> ExplicitCmdp {
    ModelBuilder::new(3, 0, 2)
        .absorbing(2)
        .action(0, 0, 0.0, 2.0, vec![(1, 1.0)])
        .action(1, 0, 0.0, -1.0, vec![(2, 1.0)])
        .build()
        .expect("chain must be valid")
}

/// Configuration for [`random_episodic`].
#[derive(Debug, Clone)]
pub struct RandomModelConfig {
    pub horizon: usize,
    /// States per time layer (excluding the single absorbing state).
    pub max_layer_width: usize,
    pub max_actions: usize,
    /// Cap on the product of per-state action-set sizes, so the brute-force
    /// oracle stays cheap.
    pub max_policies: u64,
    /// Constraint costs are drawn from `[-cost_spread, cost_spread]`
    /// (or `[0, cost_spread]` when `allow_negative_costs` is off).
    pub cost_spread: f64,
    /// Probability that an action's constraint cost is exactly zero.
    pub zero_cost_prob: f64,
    /// When off, costs are nonnegative; feasibility then means never
    /// incurring cost, a family on which the two-phase optimum provably
    /// coincides with the enumeration oracle.
    pub allow_negative_costs: bool,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            max_layer_width: 3,
            max_actions: 4,
            max_policies: 20_000,
            cost_spread: 1.0,
            zero_cost_prob: 0.0,
            allow_negative_costs: true,
        }
    }
}

/// Generates a random layered episodic CMDP. States are arranged in time
/// layers `0..horizon`; every action at layer `t` distributes probability over
/// layer `t + 1` (the last layer steps to the absorbing state), so absorption
/// within the horizon holds by construction.
pub fn random_episodic(cfg: &RandomModelConfig, rng: &mut RngStream) -> ExplicitCmdp {
    let mut layers: Vec<Vec<usize>> = Vec::new();
    let mut next_id = 0usize;
    for t in 0..cfg.horizon {
        let width = if t == 0 { 1 } else { 1 + rng.index(cfg.max_layer_width) };
        layers.push((0..width).map(|_| { let id = next_id; next_id += 1; id }).collect());
    }
    let end = next_id;
    let state_count = end + 1;

    let mut builder = ModelBuilder::new(state_count, 0, cfg.horizon).absorbing(end);
    let mut policy_product: u64 = 1;
    for t in 0..cfg.horizon {
        let targets: Vec<usize> =
            if t + 1 < cfg.horizon { layers[t + 1].clone() } else { vec![end] };
        for &x in &layers[t] {
            let mut n_actions = 1 + rng.index(cfg.max_actions);
            while policy_product.saturating_mul(n_actions as u64) > cfg.max_policies && n_actions > 1
            {
                n_actions -= 1;
            }
            policy_product = policy_product.saturating_mul(n_actions as u64);
            for a in 0..n_actions {
                let reward = rng.uniform() * 5.0;
                let cost = if rng.uniform() < cfg.zero_cost_prob {
                    0.0
                } else if cfg.allow_negative_costs {
                    (rng.uniform() * 2.0 - 1.0) * cfg.cost_spread
                } else {
                    rng.uniform() * cfg.cost_spread
                };
                // Random support over the next layer, renormalized.
                let mut weights: Vec<f64> =
                    targets.iter().map(|_| 0.05 + rng.uniform()).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                // Renormalize exactly so the row passes the 1e-12 check.
                let sum_except_last: f64 = weights[..weights.len() - 1].iter().sum();
                let last = weights.len() - 1;
                weights[last] = 1.0 - sum_except_last;
                let transitions: Vec<(usize, f64)> =
                    targets.iter().copied().zip(weights).collect();
                builder = builder.action(x, a, reward, cost, transitions);
            }
        }
    }
    builder.build().expect("generated model must be valid")
}
