//! The sampled-model interface: generative access to a CMDP.
//!
//! Learners and Monte Carlo evaluation never need transition tables, only the
//! ability to (1) observe the admissible actions at a state together with any
//! realized exogenous information, (2) step to a successor, and (3) draw
//! independent successor samples for a given state-action pair. The explicit
//! table model and the vehicle-sharing environment both implement this trait.

use std::fmt::Debug;
use std::hash::Hash;

use crate::cmdp::model::ExplicitCmdp;
use crate::rng::RngStream;

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub next: S,
    pub reward: f64,
    pub constraint_cost: f64,
}

/// Generative access to an episodic CMDP.
pub trait SampledModel {
    type State: Clone + Eq + Ord + Hash + Debug;
    type Action: Clone + Eq + Ord + Hash + Debug;
    /// Realized exogenous information revealed at a state before acting
    /// (for the vehicle-sharing environment, the bid board).
    type Obs;

    fn initial_state(&self) -> Self::State;
    fn horizon(&self) -> usize;
    fn is_absorbing(&self, state: &Self::State) -> bool;

    /// Reveals the exogenous information for this visit and the admissible
    /// actions. The returned action list is sorted ascending, which fixes the
    /// tie-break order used by greedy selection.
    fn offer(&self, state: &Self::State, rng: &mut RngStream) -> (Self::Obs, Vec<Self::Action>);

    /// Steps the system given the observation revealed by [`offer`].
    ///
    /// [`offer`]: SampledModel::offer
    fn transition(
        &self,
        state: &Self::State,
        obs: &Self::Obs,
        action: &Self::Action,
        rng: &mut RngStream,
    ) -> Step<Self::State>;

    /// Draws one independent successor sample from `P(. | state, action)`,
    /// marginal over the exogenous information. Used for learner backups.
    fn sample_successor(
        &self,
        state: &Self::State,
        action: &Self::Action,
        rng: &mut RngStream,
    ) -> Step<Self::State>;

    /// Observation-independent action set used inside learner backups
    /// (`min`/`max` over successor actions). For table models this equals the
    /// admissible set; empty on absorbing states.
    fn backup_actions(&self, state: &Self::State) -> Vec<Self::Action>;
}

/// Models whose transient state-action pairs can be enumerated, as required
/// by the synchronous learner.
pub trait EnumerableModel: SampledModel {
    fn transient_state_list(&self) -> Vec<Self::State>;
    fn actions_at(&self, state: &Self::State) -> Vec<Self::Action>;
}

impl SampledModel for ExplicitCmdp {
    type State = usize;
    type Action = usize;
    type Obs = ();

    fn initial_state(&self) -> usize {
        ExplicitCmdp::initial_state(self)
    }

    fn horizon(&self) -> usize {
        ExplicitCmdp::horizon(self)
    }

    fn is_absorbing(&self, state: &usize) -> bool {
        ExplicitCmdp::is_absorbing(self, *state)
    }

    fn offer(&self, state: &usize, _rng: &mut RngStream) -> ((), Vec<usize>) {
        ((), self.action_set(*state))
    }

    fn transition(&self, state: &usize, _obs: &(), action: &usize, rng: &mut RngStream) -> Step<usize> {
        self.sample_successor(state, action, rng)
    }

    fn sample_successor(&self, state: &usize, action: &usize, rng: &mut RngStream) -> Step<usize> {
        let entry = self
            .entry(*state, *action)
            .unwrap_or_else(|| panic!("action {action} not admissible at state {state}"));
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut next = entry.transitions.last().map(|&(n, _)| n).unwrap();
        for &(n, p) in &entry.transitions {
            acc += p;
            if u < acc {
                next = n;
                break;
            }
        }
        Step { next, reward: entry.reward, constraint_cost: entry.constraint_cost }
    }

    fn backup_actions(&self, state: &usize) -> Vec<usize> {
        if ExplicitCmdp::is_absorbing(self, *state) {
            Vec::new()
        } else {
            self.action_set(*state)
        }
    }
}

impl EnumerableModel for ExplicitCmdp {
    fn transient_state_list(&self) -> Vec<usize> {
        self.transient_states().collect()
    }

    fn actions_at(&self, state: &usize) -> Vec<usize> {
        self.action_set(*state)
    }
}
