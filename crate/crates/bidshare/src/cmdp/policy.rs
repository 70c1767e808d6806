//! Policies, trajectory sampling, and Monte Carlo evaluation.

use thiserror::Error;

use crate::cmdp::model::ExplicitCmdp;
use crate::cmdp::sample::{SampledModel, Step};
use crate::rng::{pairwise_sum, RngStream};

/// A total mapping from transient state index to an admissible action index.
/// Policies are Markovian, stationary, and deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicPolicy {
    action_of: Vec<Option<usize>>,
}

impl DeterministicPolicy {
    pub fn new(state_count: usize) -> Self {
        Self { action_of: vec![None; state_count] }
    }

    pub fn from_actions(actions: Vec<usize>) -> Self {
        Self { action_of: actions.into_iter().map(Some).collect() }
    }

    pub fn set(&mut self, state: usize, action: usize) {
        self.action_of[state] = Some(action);
    }

    pub fn action(&self, state: usize) -> Option<usize> {
        self.action_of.get(state).copied().flatten()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy undefined at reached state {0:?}")]
    UndefinedAt(String),
}

/// Decision rule evaluated against a sampled model. The observation is passed
/// through so observation-dependent rules (e.g. bid-aware heuristics) can use
/// it; table policies ignore it.
pub trait Policy<M: SampledModel> {
    fn act(
        &self,
        state: &M::State,
        obs: &M::Obs,
        offered: &[M::Action],
        rng: &mut RngStream,
    ) -> Result<M::Action, PolicyError>;
}

impl Policy<ExplicitCmdp> for DeterministicPolicy {
    fn act(
        &self,
        state: &usize,
        _obs: &(),
        offered: &[usize],
        _rng: &mut RngStream,
    ) -> Result<usize, PolicyError> {
        match self.action(*state) {
            Some(a) if offered.contains(&a) => Ok(a),
            _ => Err(PolicyError::UndefinedAt(format!("{state}"))),
        }
    }
}

/// One sampled episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, A> {
    pub steps: Vec<(S, A, f64, f64)>,
    pub terminal_state: S,
}

impl<S, A> Trajectory<S, A> {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.2).sum()
    }

    pub fn total_constraint_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.3).sum()
    }
}

/// Rolls out one episode from the initial state until absorption.
///
/// Termination within `horizon` steps is a model invariant; a run that
/// exceeds it panics rather than silently truncating.
pub fn sample_trajectory<M: SampledModel, P: Policy<M>>(
    model: &M,
    policy: &P,
    rng: &mut RngStream,
) -> Result<Trajectory<M::State, M::Action>, PolicyError> {
    let mut state = model.initial_state();
    let mut steps = Vec::new();
    let mut guard = 0usize;
    while !model.is_absorbing(&state) {
        let (obs, offered) = model.offer(&state, rng);
        let action = policy.act(&state, &obs, &offered, rng)?;
        let Step { next, reward, constraint_cost } = model.transition(&state, &obs, &action, rng);
        steps.push((state, action, reward, constraint_cost));
        state = next;
        guard += 1;
        assert!(guard <= model.horizon(), "episode exceeded the model horizon");
    }
    Ok(Trajectory { steps, terminal_state: state })
}

/// Per-trial record kept by Monte Carlo evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub total_reward: f64,
    pub total_constraint_cost: f64,
    pub episode_length: usize,
}

/// Summary of a Monte Carlo policy evaluation.
#[derive(Debug, Clone)]
pub struct McSummary {
    pub mean_reward: f64,
    pub mean_constraint_cost: f64,
    pub trials: Vec<TrialRecord>,
}

impl McSummary {
    pub fn reward_standard_error(&self) -> f64 {
        standard_error(self.trials.iter().map(|t| t.total_reward), self.mean_reward)
    }

    pub fn constraint_standard_error(&self) -> f64 {
        standard_error(
            self.trials.iter().map(|t| t.total_constraint_cost),
            self.mean_constraint_cost,
        )
    }
}

fn standard_error(values: impl Iterator<Item = f64>, mean: f64) -> f64 {
    let sq: Vec<f64> = values.map(|v| (v - mean) * (v - mean)).collect();
    let n = sq.len();
    if n < 2 {
        return 0.0;
    }
    (pairwise_sum(&sq) / ((n - 1) as f64) / n as f64).sqrt()
}

/// Evaluates a policy over `trials` independent episodes. Trial `i` runs on
/// `rng.substream(i)`, so results are independent of evaluation order.
pub fn mc_evaluate<M: SampledModel, P: Policy<M>>(
    model: &M,
    policy: &P,
    trials: usize,
    rng: &RngStream,
) -> Result<McSummary, PolicyError> {
    assert!(trials >= 1, "mc_evaluate requires at least one trial");
    let mut records = Vec::with_capacity(trials);
    for i in 0..trials {
        let mut stream = rng.substream(i as u64);
        let traj = sample_trajectory(model, policy, &mut stream)?;
        records.push(TrialRecord {
            total_reward: traj.total_reward(),
            total_constraint_cost: traj.total_constraint_cost(),
            episode_length: traj.steps.len(),
        });
    }
    let rewards: Vec<f64> = records.iter().map(|t| t.total_reward).collect();
    let costs: Vec<f64> = records.iter().map(|t| t.total_constraint_cost).collect();
    Ok(McSummary {
        mean_reward: pairwise_sum(&rewards) / trials as f64,
        mean_constraint_cost: pairwise_sum(&costs) / trials as f64,
        trials: records,
    })
}
