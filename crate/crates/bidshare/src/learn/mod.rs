//! Sampling-based two-phase Q-learning.
//!
//! Two coupled tables are learned on separate timescales: a feasibility table
//! `q` estimating the minimal achievable cumulative constraint cost from each
//! state-action pair, updated on the fast schedule, and a revenue table `h`
//! estimating the best revenue attainable through actions the current `q`
//! deems feasible, updated on the slow schedule. The synchronous trainer
//! sweeps every enumerable state-action pair per round; the asynchronous
//! trainer follows sampled episodes and only touches visited pairs.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use crate::cmdp::{mc_evaluate, ExplicitCmdp, Policy, PolicyError, SampledModel, Step};
use crate::dp::{QTable, TwoPhaseSolution, XiNorm};
use crate::rng::RngStream;

/// Two-timescale step-size schedule with per-key visit counts.
///
/// With `n` the visit count of a key, the fast step is
/// `(1 + n)^(-exponent_fast)` and the slow step is
/// `(1 + n)^(-exponent_slow)`. Exponents in `(0.5, 1]` with
/// `exponent_slow > exponent_fast` give square-summable but not summable
/// steps whose ratio slow/fast vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    pub exponent_fast: f64,
    pub exponent_slow: f64,
    /// Independent successor samples averaged per update target.
    pub sample_batch: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { exponent_fast: 0.55, exponent_slow: 0.85, sample_batch: 10 }
    }
}

impl StepSchedule {
    pub fn validate(&self) {
        assert!(
            self.exponent_fast > 0.5 && self.exponent_fast <= 1.0,
            "fast exponent must lie in (0.5, 1]"
        );
        assert!(
            self.exponent_slow > self.exponent_fast && self.exponent_slow <= 1.0,
            "slow exponent must lie in (fast, 1]"
        );
        assert!(self.sample_batch >= 1, "sample batch must be positive");
    }
}

/// Step sizes for a key visited `visit_count` times: `(slow, fast)`.
pub fn step_sizes(visit_count: u64, schedule: &StepSchedule) -> (f64, f64) {
    let base = 1.0 + visit_count as f64;
    (base.powf(-schedule.exponent_slow), base.powf(-schedule.exponent_fast))
}

/// Trainer configuration shared by the synchronous and asynchronous variants.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Tolerance used when reading the feasible action set off the noisy `q`
    /// table: an action is kept when its `q` value is within this tolerance
    /// of both the row minimum and zero. An exact-zero test would be empty
    /// almost surely mid-training.
    pub eps_feas_learn: f64,
    /// When on, the tolerance at a state shrinks as `eps / sqrt(1 + n)` with
    /// `n` the smallest visit count among the state's actions.
    pub shrink_eps: bool,
    /// Sweeps (synchronous) or episodes (asynchronous).
    pub max_episodes: usize,
    /// Checkpoint cadence, in sweeps or episodes.
    pub eval_every: usize,
    /// Monte Carlo trials per checkpoint evaluation.
    pub eval_trials: usize,
    /// Probability of a uniform admissible action (asynchronous only).
    pub exploration_epsilon: f64,
    /// When on, checkpoint rows carry elapsed wallclock; off by default so
    /// logs are byte-identical across runs.
    pub record_wallclock: bool,
    pub schedule: StepSchedule,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            eps_feas_learn: 0.05,
            shrink_eps: false,
            max_episodes: 1000,
            eval_every: 100,
            eval_trials: 200,
            exploration_epsilon: 0.1,
            record_wallclock: false,
            schedule: StepSchedule::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) {
        assert!(self.eps_feas_learn >= 0.0, "feasibility tolerance must be nonnegative");
        assert!(self.max_episodes >= 1, "max_episodes must be positive");
        assert!(self.eval_every >= 1, "eval_every must be positive");
        assert!(self.eval_trials >= 1, "eval_trials must be positive");
        assert!(
            (0.0..=1.0).contains(&self.exploration_epsilon),
            "exploration epsilon must lie in [0, 1]"
        );
        self.schedule.validate();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Cell {
    q: f64,
    h: f64,
    visits: u64,
}

/// The learned table pair, keyed lazily by (state, action). Entries default
/// to zero; absorbing states are never written, so their implicit entries
/// stay zero for the whole run. The backing map is ordered, which makes
/// sweeps, snapshots, and serialization deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LazyQPair<S: Ord, A: Ord> {
    cells: BTreeMap<(S, A), Cell>,
}

impl<S: Ord + Clone, A: Ord + Clone> LazyQPair<S, A> {
    pub fn new() -> Self {
        Self { cells: BTreeMap::new() }
    }

    /// Feasibility estimate, zero for never-written keys.
    pub fn q(&self, state: &S, action: &A) -> f64 {
        self.cells.get(&(state.clone(), action.clone())).map_or(0.0, |c| c.q)
    }

    /// Revenue estimate, zero for never-written keys.
    pub fn h(&self, state: &S, action: &A) -> f64 {
        self.cells.get(&(state.clone(), action.clone())).map_or(0.0, |c| c.h)
    }

    pub fn visits(&self, state: &S, action: &A) -> u64 {
        self.cells.get(&(state.clone(), action.clone())).map_or(0, |c| c.visits)
    }

    /// Number of keys that have received at least one update.
    pub fn written_len(&self) -> usize {
        self.cells.len()
    }

    pub fn keys(&self) -> impl Iterator<Item = &(S, A)> {
        self.cells.keys()
    }

    fn apply(&mut self, key: (S, A), q_target: f64, h_target: f64, schedule: &StepSchedule) {
        let cell = self.cells.entry(key).or_default();
        let (zeta_slow, zeta_fast) = step_sizes(cell.visits, schedule);
        cell.q += zeta_fast * (q_target - cell.q);
        cell.h += zeta_slow * (h_target - cell.h);
        cell.visits += 1;
    }

    /// Overwrites the revenue entry and bumps the visit count. Used by the
    /// scalarized baselines, which learn only the revenue side.
    pub fn write_h(&mut self, key: (S, A), value: f64) {
        let cell = self.cells.entry(key).or_default();
        cell.h = value;
        cell.visits += 1;
    }

    fn min_visits_over<'a>(&self, state: &S, actions: impl Iterator<Item = &'a A>) -> u64
    where
        A: 'a,
    {
        actions.map(|a| self.visits(state, a)).min().unwrap_or(0)
    }
}

impl<S: Ord + Debug, A: Ord + Debug> LazyQPair<S, A> {
    /// Structured-text snapshot: header, entry count, one line per written
    /// key in map order.
    pub fn to_text(&self) -> String {
        let mut out = String::from("qpair v1\n");
        let _ = writeln!(out, "entries {}", self.cells.len());
        for ((s, a), cell) in &self.cells {
            let _ = writeln!(
                out,
                "{:?} {:?} {:.16e} {:.16e} {}",
                s, a, cell.q, cell.h, cell.visits
            );
        }
        out
    }
}

impl LazyQPair<usize, usize> {
    /// Copies the `q` side into a dense table aligned with an explicit model,
    /// for norm comparisons against exact solver output.
    pub fn q_table(&self, model: &ExplicitCmdp) -> QTable {
        self.dense(model, |c| c.q)
    }

    pub fn h_table(&self, model: &ExplicitCmdp) -> QTable {
        self.dense(model, |c| c.h)
    }

    fn dense(&self, model: &ExplicitCmdp, read: impl Fn(&Cell) -> f64) -> QTable {
        let mut table = QTable::zeros(model);
        for x in model.transient_states() {
            for (i, entry) in model.entries(x).iter().enumerate() {
                if let Some(cell) = self.cells.get(&(x, entry.action)) {
                    table.set(x, i, read(cell));
                }
            }
        }
        table
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("synchronous training needs an enumerable model with at most {limit} state-action pairs, got {pairs}")]
    TooManyPairs { pairs: usize, limit: usize },
}

/// Pair-count ceiling for the synchronous sweep.
pub const SYNC_PAIR_LIMIT: usize = 100_000;

/// Feasible-set tolerance at a state, optionally shrinking with visits.
fn state_eps<S: Ord + Clone, A: Ord + Clone>(
    pair: &LazyQPair<S, A>,
    state: &S,
    actions: &[A],
    config: &LearnerConfig,
) -> f64 {
    if config.shrink_eps {
        let n = pair.min_visits_over(state, actions.iter());
        config.eps_feas_learn / (1.0 + n as f64).sqrt()
    } else {
        config.eps_feas_learn
    }
}

/// Actions whose `q` value is within `eps` of both the row minimum and zero.
/// Preserves the input order, so ascending action lists keep their tie-break
/// order.
fn noisy_feasible_set<'a, S: Ord + Clone, A: Ord + Clone>(
    pair: &LazyQPair<S, A>,
    state: &S,
    actions: &'a [A],
    eps: f64,
) -> Vec<&'a A> {
    let min_q = actions
        .iter()
        .map(|a| pair.q(state, a))
        .fold(f64::INFINITY, f64::min);
    actions
        .iter()
        .filter(|a| {
            let q = pair.q(state, *a);
            q <= min_q + eps && q <= eps
        })
        .collect()
}

/// Greedy action: argmax of `h` over the noisy feasible set, smallest key on
/// ties; when the set is empty, falls back to the argmin of `q`
/// (constraint repair).
fn greedy_feasible_action<S: Ord + Clone, A: Ord + Clone>(
    pair: &LazyQPair<S, A>,
    state: &S,
    actions: &[A],
    config: &LearnerConfig,
) -> A {
    debug_assert!(!actions.is_empty(), "no admissible actions");
    let eps = state_eps(pair, state, actions, config);
    let feasible = noisy_feasible_set(pair, state, actions, eps);
    if feasible.is_empty() {
        let mut best = &actions[0];
        for a in &actions[1..] {
            if pair.q(state, a) < pair.q(state, best) {
                best = a;
            }
        }
        return best.clone();
    }
    let mut best = feasible[0];
    for a in &feasible[1..] {
        if pair.h(state, a) > pair.h(state, best) {
            best = a;
        }
    }
    best.clone()
}

/// Behavior action for the asynchronous trainer: greedy with probability
/// `1 - exploration_epsilon`, otherwise uniform over the admissible set.
pub fn select_action<S: Ord + Clone, A: Ord + Clone>(
    pair: &LazyQPair<S, A>,
    state: &S,
    actions: &[A],
    config: &LearnerConfig,
    rng: &mut RngStream,
) -> A {
    assert!(!actions.is_empty(), "no admissible actions to select from");
    if config.exploration_epsilon > 0.0 && rng.uniform() < config.exploration_epsilon {
        return actions[rng.index(actions.len())].clone();
    }
    greedy_feasible_action(pair, state, actions, config)
}

/// Sampled one-step targets for a state-action pair, averaged over a batch of
/// successor draws. The feasibility target backs up `min q` at the successor,
/// the revenue target backs up `max h` over the successor's noisy feasible
/// set; absorbing successors contribute zero to both.
fn sampled_targets<M: SampledModel>(
    model: &M,
    pair: &LazyQPair<M::State, M::Action>,
    samples: &[Step<M::State>],
    config: &LearnerConfig,
) -> (f64, f64) {
    let mut q_acc = 0.0;
    let mut h_acc = 0.0;
    for step in samples {
        let succ_actions = model.backup_actions(&step.next);
        if succ_actions.is_empty() {
            q_acc += step.constraint_cost;
            h_acc += step.reward;
            continue;
        }
        let min_q = succ_actions
            .iter()
            .map(|a| pair.q(&step.next, a))
            .fold(f64::INFINITY, f64::min);
        let eps = state_eps(pair, &step.next, &succ_actions, config);
        let feasible = noisy_feasible_set(pair, &step.next, &succ_actions, eps);
        let h_next = if feasible.is_empty() {
            // Repair fallback, mirroring greedy selection: follow the
            // least-infeasible action's revenue estimate.
            let mut best = &succ_actions[0];
            for a in &succ_actions[1..] {
                if pair.q(&step.next, a) < pair.q(&step.next, best) {
                    best = a;
                }
            }
            pair.h(&step.next, best)
        } else {
            feasible
                .iter()
                .map(|a| pair.h(&step.next, a))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        q_acc += step.constraint_cost + min_q;
        h_acc += step.reward + h_next;
    }
    let n = samples.len() as f64;
    (q_acc / n, h_acc / n)
}

/// One synchronous round: every transient state-action pair receives one
/// update. Targets are computed against a frozen snapshot of the tables, so
/// within a sweep all pairs see the same estimates regardless of sweep order.
pub fn sync_sweep(
    model: &ExplicitCmdp,
    pair: &mut LazyQPair<usize, usize>,
    config: &LearnerConfig,
    rng: &mut RngStream,
) {
    let snapshot = pair.clone();
    for x in model.transient_states() {
        for entry in model.entries(x) {
            let samples: Vec<Step<usize>> = (0..config.schedule.sample_batch)
                .map(|_| model.sample_successor(&x, &entry.action, rng))
                .collect();
            let (q_target, h_target) = sampled_targets(model, &snapshot, &samples, config);
            pair.apply((x, entry.action), q_target, h_target, &config.schedule);
        }
    }
}

/// One checkpoint row of a training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub update_count: u64,
    pub episode: usize,
    /// Weighted sup-norm distance of `q` to an exact reference, when one was
    /// supplied.
    pub q_error: Option<f64>,
    pub h_error: Option<f64>,
    pub mc_mean_reward: f64,
    pub mc_mean_constraint: f64,
    pub wallclock_seconds: Option<f64>,
    /// Populated only by the Lagrangian baseline.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningLog {
    pub rows: Vec<LogRow>,
}

impl LearningLog {
    /// CSV with one row per checkpoint. Optional fields render blank; the
    /// `lambda` column appears only when some row carries a multiplier.
    pub fn to_csv(&self) -> String {
        let with_lambda = self.rows.iter().any(|r| r.lambda.is_some());
        let mut out = String::from(
            "update_count,episode,xi_norm_q_error,xi_norm_h_error,mc_mean_reward,mc_mean_constraint,wallclock_seconds",
        );
        if with_lambda {
            out.push_str(",lambda");
        }
        out.push('\n');
        for row in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                row.update_count,
                row.episode,
                opt(row.q_error),
                opt(row.h_error),
                row.mc_mean_reward,
                row.mc_mean_constraint,
                opt(row.wallclock_seconds),
            );
            if with_lambda {
                let _ = write!(out, ",{}", opt(row.lambda));
            }
            out.push('\n');
        }
        out
    }
}

/// Greedy policy read off a learned table pair: at each state, the same rule
/// as exploitation during training (feasible-set argmax of `h`, argmin-of-`q`
/// fallback), deterministic given the tables.
pub struct LearnedPolicy<'a, S: Ord, A: Ord> {
    pair: &'a LazyQPair<S, A>,
    config: LearnerConfig,
}

pub fn extract_learned_policy<'a, S: Ord + Clone, A: Ord + Clone>(
    pair: &'a LazyQPair<S, A>,
    config: &LearnerConfig,
) -> LearnedPolicy<'a, S, A> {
    LearnedPolicy { pair, config: LearnerConfig { exploration_epsilon: 0.0, ..config.clone() } }
}

impl<M: SampledModel> Policy<M> for LearnedPolicy<'_, M::State, M::Action> {
    fn act(
        &self,
        state: &M::State,
        _obs: &M::Obs,
        offered: &[M::Action],
        _rng: &mut RngStream,
    ) -> Result<M::Action, PolicyError> {
        if offered.is_empty() {
            return Err(PolicyError::UndefinedAt(format!("{state:?}")));
        }
        Ok(greedy_feasible_action(self.pair, state, offered, &self.config))
    }
}

// Substream block reserved for checkpoint evaluation, so evaluation never
// perturbs the training stream and checkpoint cadence does not change the
// learned tables.
const EVAL_SUBSTREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn checkpoint_row(
    update_count: u64,
    episode: usize,
    q_error: Option<f64>,
    h_error: Option<f64>,
    mc: (f64, f64),
    started: Instant,
    config: &LearnerConfig,
) -> LogRow {
    LogRow {
        update_count,
        episode,
        q_error,
        h_error,
        mc_mean_reward: mc.0,
        mc_mean_constraint: mc.1,
        wallclock_seconds: config.record_wallclock.then(|| started.elapsed().as_secs_f64()),
        lambda: None,
    }
}

/// Synchronous trainer: `max_episodes` full sweeps over an explicit model,
/// with periodic checkpoint evaluation. When `reference` carries an exact
/// solution of the same model, checkpoints record weighted sup-norm errors
/// of `q` against the exact feasibility table and of `h` against the exact
/// revenue table.
pub fn train_sync(
    model: &ExplicitCmdp,
    config: &LearnerConfig,
    reference: Option<&TwoPhaseSolution>,
    rng: &mut RngStream,
) -> Result<(LazyQPair<usize, usize>, LearningLog), LearnError> {
    config.validate();
    let pairs: usize = model.transient_states().map(|x| model.entries(x).len()).sum();
    if pairs > SYNC_PAIR_LIMIT {
        return Err(LearnError::TooManyPairs { pairs, limit: SYNC_PAIR_LIMIT });
    }
    let started = Instant::now();
    let xi = XiNorm::for_model(model);
    let eval_root = rng.substream(EVAL_SUBSTREAM);
    let mut pair = LazyQPair::new();
    let mut log = LearningLog::default();
    let mut update_count = 0u64;
    for sweep in 1..=config.max_episodes {
        sync_sweep(model, &mut pair, config, rng);
        update_count += pairs as u64;
        if sweep % config.eval_every == 0 || sweep == config.max_episodes {
            let q_error =
                reference.map(|sol| xi.q_distance(&pair.q_table(model), &sol.q_star));
            let h_error = reference
                .and_then(|sol| sol.h_star.as_ref())
                .map(|h_star| xi.q_distance(&pair.h_table(model), h_star));
            let policy = extract_learned_policy(&pair, config);
            let summary = mc_evaluate(model, &policy, config.eval_trials, &eval_root.substream(sweep as u64))
                .expect("learned policies are total on admissible actions");
            log.rows.push(checkpoint_row(
                update_count,
                sweep,
                q_error,
                h_error,
                (summary.mean_reward, summary.mean_constraint_cost),
                started,
                config,
            ));
        }
    }
    Ok((pair, log))
}

/// Optional exact-error probe for the asynchronous trainer, called at each
/// checkpoint with the current tables. Returns `(q error, h error)`.
pub type ErrorProbe<'p, S, A> = &'p dyn Fn(&LazyQPair<S, A>) -> (Option<f64>, Option<f64>);

/// Asynchronous trainer: follows sampled episodes from the initial state,
/// updating only the visited state-action pair at each step (with a fresh
/// successor batch for its target), and resets to the initial state on
/// absorption. Works on any sampled model; keys are created lazily.
pub fn train_async<M: SampledModel>(
    model: &M,
    config: &LearnerConfig,
    probe: Option<ErrorProbe<'_, M::State, M::Action>>,
    rng: &mut RngStream,
) -> (LazyQPair<M::State, M::Action>, LearningLog) {
    config.validate();
    let started = Instant::now();
    let eval_root = rng.substream(EVAL_SUBSTREAM);
    let mut pair = LazyQPair::new();
    let mut log = LearningLog::default();
    let mut update_count = 0u64;
    for episode in 1..=config.max_episodes {
        let mut state = model.initial_state();
        let mut steps = 0usize;
        while !model.is_absorbing(&state) {
            let (obs, offered) = model.offer(&state, rng);
            let action = select_action(&pair, &state, &offered, config, rng);
            let samples: Vec<Step<M::State>> = (0..config.schedule.sample_batch)
                .map(|_| model.sample_successor(&state, &action, rng))
                .collect();
            let (q_target, h_target) = sampled_targets(model, &pair, &samples, config);
            pair.apply((state.clone(), action.clone()), q_target, h_target, &config.schedule);
            update_count += 1;
            let step = model.transition(&state, &obs, &action, rng);
            state = step.next;
            steps += 1;
            assert!(steps <= model.horizon(), "episode exceeded the model horizon");
        }
        if episode % config.eval_every == 0 || episode == config.max_episodes {
            let (q_error, h_error) = probe.map_or((None, None), |p| p(&pair));
            let policy = extract_learned_policy(&pair, config);
            let summary = mc_evaluate(model, &policy, config.eval_trials, &eval_root.substream(episode as u64))
                .expect("learned policies are total on admissible actions");
            log.rows.push(checkpoint_row(
                update_count,
                episode,
                q_error,
                h_error,
                (summary.mean_reward, summary.mean_constraint_cost),
                started,
                config,
            ));
        }
    }
    (pair, log)
}

#[cfg(test)]
mod tests;
