//! Brute-force constrained solver by exhaustive policy enumeration.
//!
//! Enumerates every deterministic policy, evaluates expected cumulative
//! reward and constraint cost exactly by finite-horizon backward recursion
//! (no sampling), and reports the feasibility value, the feasible policy set,
//! and the constrained optimum. This is the independent oracle the
//! dynamic-programming solver is checked against; it must stay free of any
//! Bellman-operator machinery.

use thiserror::Error;

use crate::cmdp::model::ExplicitCmdp;
use crate::cmdp::policy::DeterministicPolicy;

/// Enumeration ceiling: product over transient states of action-set sizes.
pub const MAX_POLICIES: u64 = 1_000_000;

/// Membership tolerance for the zero-feasibility level set.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BruteForceError {
    #[error("policy space too large: {0} deterministic policies (cap {MAX_POLICIES})")]
    TooLarge(u64),
}

#[derive(Debug, Clone)]
pub struct BruteForceSolution {
    /// `min` over policies of `max(0, E[sum D])` from the initial state.
    pub feasibility_value: f64,
    /// All policies attaining zero feasibility value; empty iff infeasible.
    pub feasible_policies: Vec<DeterministicPolicy>,
    /// `max E[sum R]` over the feasible set; absent when infeasible.
    pub optimal_value: Option<f64>,
    pub optimal_policy: Option<DeterministicPolicy>,
}

impl BruteForceSolution {
    pub fn is_feasible(&self) -> bool {
        self.feasibility_value <= FEASIBILITY_TOL
    }
}

/// Exact `(E[sum R], E[sum D])` from the initial state under a fixed policy,
/// by `horizon` stages of backward recursion.
pub fn evaluate_policy_exact(model: &ExplicitCmdp, policy: &DeterministicPolicy) -> (f64, f64) {
    let n = model.state_count();
    let mut reward_value = vec![0.0_f64; n];
    let mut cost_value = vec![0.0_f64; n];
    for _ in 0..model.horizon() {
        let mut next_reward = vec![0.0_f64; n];
        let mut next_cost = vec![0.0_f64; n];
        for x in model.transient_states() {
            let a = policy.action(x).expect("policy must cover all transient states");
            let entry = model.entry(x, a).expect("policy action must be admissible");
            let mut r = entry.reward;
            let mut d = entry.constraint_cost;
            for &(next, p) in &entry.transitions {
                r += p * reward_value[next];
                d += p * cost_value[next];
            }
            next_reward[x] = r;
            next_cost[x] = d;
        }
        reward_value = next_reward;
        cost_value = next_cost;
    }
    let x0 = model.initial_state();
    (reward_value[x0], cost_value[x0])
}

pub fn brute_force_solve(model: &ExplicitCmdp) -> Result<BruteForceSolution, BruteForceError> {
    let transient: Vec<usize> = model.transient_states().collect();
    let action_sets: Vec<Vec<usize>> = transient.iter().map(|&x| model.action_set(x)).collect();
    let mut total: u64 = 1;
    for set in &action_sets {
        total = total.saturating_mul(set.len() as u64);
        if total > MAX_POLICIES {
            return Err(BruteForceError::TooLarge(total));
        }
    }

    let mut best_feasibility = f64::INFINITY;
    let mut evaluated: Vec<(DeterministicPolicy, f64, f64)> = Vec::new();
    let mut choice = vec![0usize; transient.len()];
    loop {
        let mut policy = DeterministicPolicy::new(model.state_count());
        for (i, &x) in transient.iter().enumerate() {
            policy.set(x, action_sets[i][choice[i]]);
        }
        let (reward, cost) = evaluate_policy_exact(model, &policy);
        let feasibility = cost.max(0.0);
        best_feasibility = best_feasibility.min(feasibility);
        evaluated.push((policy, reward, feasibility));

        // Odometer increment over the per-state action choices.
        let mut i = 0;
        loop {
            if i == choice.len() {
                // Wrapped all digits: enumeration complete.
                let feasible_policies: Vec<DeterministicPolicy> = evaluated
                    .iter()
                    .filter(|(_, _, f)| *f <= FEASIBILITY_TOL)
                    .map(|(p, _, _)| p.clone())
                    .collect();
                let best = evaluated
                    .iter()
                    .filter(|(_, _, f)| *f <= FEASIBILITY_TOL)
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
                return Ok(BruteForceSolution {
                    feasibility_value: best_feasibility,
                    feasible_policies,
                    optimal_value: best.map(|(_, r, _)| *r),
                    optimal_policy: best.map(|(p, _, _)| p.clone()),
                });
            }
            choice[i] += 1;
            if choice[i] < action_sets[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}
