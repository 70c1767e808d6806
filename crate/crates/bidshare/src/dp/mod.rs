//! Exact two-phase dynamic programming on explicit models.
//!
//! Phase 1 (feasibility) iterates the operator
//! `T[V](x) = min_u max{B(x), D(x,u) + sum P(x'|x,u) V(x')}` to its fixed
//! point `V*`, builds the state-action table `Q*`, and refines the admissible
//! action sets to those certifying constraint satisfaction. Phase 2 (revenue)
//! iterates `T_R` over the refined sets to `W*`, forms `H*`, and extracts a
//! deterministic policy. Both operators contract in the weighted sup norm
//! `||f||_xi = max |f(x)| / xi(x)` with `xi(x) = T - t` and modulus
//! `beta = (T-1)/T`, so convergence is geometric.
//!
//! The `-infinity` branch of `B` is never materialized: on transient states
//! `max{B(x), z}` is simply `z`, and absorbing states are pinned to zero.

use std::fmt::Write as _;

use thiserror::Error;

use crate::cmdp::model::ExplicitCmdp;
use crate::cmdp::policy::DeterministicPolicy;

/// Default stopping tolerance (in xi-norm) for exact DP.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default tolerance for membership in the refined feasible action set.
///
/// The membership test is `Q*(x,u) <= eps` rather than an exact-zero test:
/// the unclipped recursion yields the minimal expected remaining constraint
/// cost, which is strictly negative at strictly feasible pairs (a one-step
/// chain with `D = -1` has `Q* = -1`), so an equality test would wrongly
/// exclude them.
pub const DEFAULT_EPS_FEAS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("value iteration did not reach tol={tol} in {iterations} sweeps (residual {residual})")]
    NoConvergence { tol: f64, iterations: usize, residual: f64 },
    #[error("no feasible action at state {state}: constraint unsatisfiable from there")]
    EmptyFeasibleSet { state: usize },
    #[error("phase-2 iteration called on an infeasible problem (violation {violation})")]
    InfeasibleInput { violation: f64 },
}

/// Per-state value table; identically zero on absorbing states.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(model: &ExplicitCmdp) -> Self {
        Self { values: vec![0.0; model.state_count()] }
    }

    pub fn from_values(model: &ExplicitCmdp, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), model.state_count());
        let mut table = Self { values };
        for x in 0..table.values.len() {
            if model.is_absorbing(x) {
                table.values[x] = 0.0;
            }
        }
        table
    }

    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn set(&mut self, state: usize, value: f64) {
        self.values[state] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per (state, admissible action) table, aligned with the model's action
/// entries; zero on absorbing states.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<Vec<f64>>,
}

impl QTable {
    pub fn zeros(model: &ExplicitCmdp) -> Self {
        Self {
            values: (0..model.state_count())
                .map(|x| vec![0.0; model.entries(x).len()])
                .collect(),
        }
    }

    /// Value for the i-th admissible action entry at `state`.
    pub fn get(&self, state: usize, entry_index: usize) -> f64 {
        self.values[state][entry_index]
    }

    pub fn set(&mut self, state: usize, entry_index: usize, value: f64) {
        self.values[state][entry_index] = value;
    }

    /// Value by action index rather than entry position.
    pub fn by_action(&self, model: &ExplicitCmdp, state: usize, action: usize) -> Option<f64> {
        model
            .entries(state)
            .iter()
            .position(|e| e.action == action)
            .map(|i| self.values[state][i])
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state]
    }

    pub fn min_at(&self, state: usize) -> f64 {
        self.values[state].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The weighted sup norm under which the Bellman operators contract.
///
/// `xi(x)` is the longest support-path distance from `x` to the absorbing
/// set; for a time-layered model that is exactly `T - t`. `beta = (T-1)/T`.
#[derive(Debug, Clone)]
pub struct XiNorm {
    weights: Vec<f64>,
    beta: f64,
}

impl XiNorm {
    pub fn for_model(model: &ExplicitCmdp) -> Self {
        let depths = model
            .depths()
            .expect("xi weights require guaranteed absorption; validate the model first");
        let weights = depths
            .iter()
            .map(|&d| if d == 0 { 1.0 } else { d as f64 })
            .collect();
        let horizon = model.horizon() as f64;
        Self { weights, beta: (horizon - 1.0) / horizon }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn weight(&self, state: usize) -> f64 {
        self.weights[state]
    }

    /// `max_x |v(x)| / xi(x)`.
    pub fn norm(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.abs() / w)
            .fold(0.0, f64::max)
    }

    pub fn distance(&self, a: &ValueTable, b: &ValueTable) -> f64 {
        a.values
            .iter()
            .zip(&b.values)
            .zip(&self.weights)
            .map(|((x, y), w)| (x - y).abs() / w)
            .fold(0.0, f64::max)
    }

    pub fn q_distance(&self, a: &QTable, b: &QTable) -> f64 {
        a.values
            .iter()
            .zip(&b.values)
            .zip(&self.weights)
            .flat_map(|((ra, rb), w)| ra.iter().zip(rb).map(move |(x, y)| (x - y).abs() / w))
            .fold(0.0, f64::max)
    }
}

/// One application of the feasibility-phase Bellman operator `T`.
pub fn bellman_t(model: &ExplicitCmdp, v: &ValueTable) -> ValueTable {
    let mut out = ValueTable::zeros(model);
    for x in model.transient_states() {
        let mut best = f64::INFINITY;
        for entry in model.entries(x) {
            let mut backup = entry.constraint_cost;
            for &(next, p) in &entry.transitions {
                backup += p * v.get(next);
            }
            best = best.min(backup);
        }
        out.set(x, best);
    }
    out
}

/// One application of the state-action operator `F`.
pub fn bellman_f(model: &ExplicitCmdp, q: &QTable) -> QTable {
    let mut out = QTable::zeros(model);
    for x in model.transient_states() {
        for (i, entry) in model.entries(x).iter().enumerate() {
            let mut backup = entry.constraint_cost;
            for &(next, p) in &entry.transitions {
                if !model.is_absorbing(next) {
                    backup += p * q.min_at(next);
                }
            }
            out.set(x, i, backup);
        }
    }
    out
}

fn iterate_to_fixed_point<T, F, D>(
    mut table: T,
    apply: F,
    distance: D,
    tol: f64,
    max_iters: usize,
) -> Result<(T, usize, Vec<f64>), DpError>
where
    F: Fn(&T) -> T,
    D: Fn(&T, &T) -> f64,
{
    let mut residuals = Vec::new();
    for iteration in 1..=max_iters {
        let next = apply(&table);
        let residual = distance(&next, &table);
        residuals.push(residual);
        table = next;
        if residual <= tol {
            return Ok((table, iteration, residuals));
        }
    }
    Err(DpError::NoConvergence {
        tol,
        iterations: max_iters,
        residual: *residuals.last().unwrap_or(&f64::INFINITY),
    })
}

fn default_max_iters(model: &ExplicitCmdp, tol: f64) -> usize {
    ((10.0 * model.horizon() as f64 * (1.0 / tol).ln()).ceil() as usize).max(10)
}

/// Feasibility-phase value iteration from the all-zero table.
pub fn value_iteration_fs(
    model: &ExplicitCmdp,
    tol: f64,
) -> Result<(ValueTable, usize, Vec<f64>), DpError> {
    let xi = XiNorm::for_model(model);
    iterate_to_fixed_point(
        ValueTable::zeros(model),
        |v| bellman_t(model, v),
        |a, b| xi.distance(a, b),
        tol,
        default_max_iters(model, tol),
    )
}

/// Fixed point of `F`, the feasibility-phase state-action table.
pub fn compute_q_star(model: &ExplicitCmdp, tol: f64) -> Result<QTable, DpError> {
    let xi = XiNorm::for_model(model);
    let (q, _, _) = iterate_to_fixed_point(
        QTable::zeros(model),
        |q| bellman_f(model, q),
        |a, b| xi.q_distance(a, b),
        tol,
        default_max_iters(model, tol),
    )?;
    Ok(q)
}

/// Outcome of the phase-1 feasibility check at the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibilityVerdict {
    Feasible,
    /// Carries the violation magnitude `max(0, V*(x0))`.
    Infeasible { violation: f64 },
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityVerdict::Feasible)
    }
}

/// Applies the outer `max(0, .)` of the feasibility objective at the initial
/// state only; the iteration itself runs unclipped.
pub fn check_feasibility(model: &ExplicitCmdp, v_star: &ValueTable, eps: f64) -> FeasibilityVerdict {
    let v0 = v_star.get(model.initial_state());
    if v0 <= eps {
        FeasibilityVerdict::Feasible
    } else {
        FeasibilityVerdict::Infeasible { violation: v0.max(0.0) }
    }
}

/// Per-state refined feasible action sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleActionSet {
    /// Entry indices (into the model's action entries) passing the test,
    /// per state; empty on absorbing states and on states where the
    /// constraint is unsatisfiable.
    entry_indices: Vec<Vec<usize>>,
    eps: f64,
}

impl FeasibleActionSet {
    /// Builds the refined sets from `Q*`. States with an empty set are
    /// recorded as such; callers that reach one report
    /// [`DpError::EmptyFeasibleSet`].
    pub fn from_q_star(model: &ExplicitCmdp, q_star: &QTable, eps: f64) -> Self {
        let entry_indices = (0..model.state_count())
            .map(|x| {
                if model.is_absorbing(x) {
                    Vec::new()
                } else {
                    feasible_entries(q_star.row(x), eps)
                }
            })
            .collect();
        Self { entry_indices, eps }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn entry_indices(&self, state: usize) -> &[usize] {
        &self.entry_indices[state]
    }

    /// Action indices of the refined set at a transient state.
    pub fn actions(&self, model: &ExplicitCmdp, state: usize) -> Result<Vec<usize>, DpError> {
        if self.entry_indices[state].is_empty() {
            return Err(DpError::EmptyFeasibleSet { state });
        }
        Ok(self.entry_indices[state]
            .iter()
            .map(|&i| model.entries(state)[i].action)
            .collect())
    }
}

/// `{u : Q(x,u) <= min Q(x,.) + eps and Q(x,u) <= eps}` as entry indices.
pub fn feasible_entries(q_row: &[f64], eps: f64) -> Vec<usize> {
    let min = q_row.iter().copied().fold(f64::INFINITY, f64::min);
    q_row
        .iter()
        .enumerate()
        .filter(|(_, &q)| q <= min + eps && q <= eps)
        .map(|(i, _)| i)
        .collect()
}

/// One application of the revenue-phase operator `T_R`. States with an empty
/// refined set keep value zero; they are unreachable under feasible play and
/// are rejected at extraction time if touched.
pub fn bellman_t_r(
    model: &ExplicitCmdp,
    feasible: &FeasibleActionSet,
    w: &ValueTable,
) -> ValueTable {
    let mut out = ValueTable::zeros(model);
    for x in model.transient_states() {
        let mut best = f64::NEG_INFINITY;
        for &i in feasible.entry_indices(x) {
            let entry = &model.entries(x)[i];
            let mut backup = entry.reward;
            for &(next, p) in &entry.transitions {
                backup += p * w.get(next);
            }
            best = best.max(backup);
        }
        if best > f64::NEG_INFINITY {
            out.set(x, best);
        }
    }
    out
}

/// Revenue-phase value iteration plus the one-step `H*` table.
pub fn value_iteration_opt(
    model: &ExplicitCmdp,
    feasible: &FeasibleActionSet,
    verdict: FeasibilityVerdict,
    tol: f64,
) -> Result<(ValueTable, QTable, usize, Vec<f64>), DpError> {
    if let FeasibilityVerdict::Infeasible { violation } = verdict {
        return Err(DpError::InfeasibleInput { violation });
    }
    let xi = XiNorm::for_model(model);
    let (w_star, iterations, residuals) = iterate_to_fixed_point(
        ValueTable::zeros(model),
        |w| bellman_t_r(model, feasible, w),
        |a, b| xi.distance(a, b),
        tol,
        default_max_iters(model, tol),
    )?;
    let mut h_star = QTable::zeros(model);
    for x in model.transient_states() {
        for (i, entry) in model.entries(x).iter().enumerate() {
            let mut backup = entry.reward;
            for &(next, p) in &entry.transitions {
                backup += p * w_star.get(next);
            }
            h_star.set(x, i, backup);
        }
    }
    Ok((w_star, h_star, iterations, residuals))
}

/// States reachable from the initial state along support transitions of
/// refined actions only.
fn reachable_under_refined(model: &ExplicitCmdp, feasible: &FeasibleActionSet) -> Vec<bool> {
    let mut reachable = vec![false; model.state_count()];
    let mut stack = vec![model.initial_state()];
    reachable[model.initial_state()] = true;
    while let Some(x) = stack.pop() {
        if model.is_absorbing(x) {
            continue;
        }
        for &i in feasible.entry_indices(x) {
            for &(next, p) in &model.entries(x)[i].transitions {
                if p > 0.0 && !reachable[next] {
                    reachable[next] = true;
                    stack.push(next);
                }
            }
        }
    }
    reachable
}

/// Greedy policy over the refined sets; ties broken by smallest action index.
///
/// Errors if a state reachable under refined play has an empty refined set.
/// Unreachable states with an empty set get the smallest admissible action
/// so the policy stays total.
pub fn extract_policy(
    model: &ExplicitCmdp,
    h_star: &QTable,
    feasible: &FeasibleActionSet,
) -> Result<DeterministicPolicy, DpError> {
    let reachable = reachable_under_refined(model, feasible);
    let mut policy = DeterministicPolicy::new(model.state_count());
    for x in model.transient_states() {
        let indices = feasible.entry_indices(x);
        if indices.is_empty() {
            if reachable[x] {
                return Err(DpError::EmptyFeasibleSet { state: x });
            }
            policy.set(x, model.entries(x)[0].action);
            continue;
        }
        let mut best_i = indices[0];
        for &i in &indices[1..] {
            if h_star.get(x, i) > h_star.get(x, best_i) {
                best_i = i;
            }
        }
        policy.set(x, model.entries(x)[best_i].action);
    }
    Ok(policy)
}

/// Full two-phase solve: feasibility iteration, `Q*`, refined sets, revenue
/// iteration, and policy extraction. Phase-2 artifacts are absent when the
/// problem is infeasible.
#[derive(Debug, Clone)]
pub struct TwoPhaseSolution {
    pub v_star: ValueTable,
    pub q_star: QTable,
    pub verdict: FeasibilityVerdict,
    pub feasible_sets: FeasibleActionSet,
    pub w_star: Option<ValueTable>,
    pub h_star: Option<QTable>,
    pub policy: Option<DeterministicPolicy>,
    pub fs_residuals: Vec<f64>,
    pub opt_residuals: Vec<f64>,
}

impl TwoPhaseSolution {
    /// `max(0, V*(x0))`, the feasibility objective at the initial state.
    pub fn feasibility_value(&self, model: &ExplicitCmdp) -> f64 {
        self.v_star.get(model.initial_state()).max(0.0)
    }

    /// `W*(x0)` when feasible.
    pub fn optimal_value(&self, model: &ExplicitCmdp) -> Option<f64> {
        self.w_star.as_ref().map(|w| w.get(model.initial_state()))
    }
}

pub fn solve_two_phase(model: &ExplicitCmdp, tol: f64) -> Result<TwoPhaseSolution, DpError> {
    solve_two_phase_with(model, tol, DEFAULT_EPS_FEAS)
}

pub fn solve_two_phase_with(
    model: &ExplicitCmdp,
    tol: f64,
    eps_feas: f64,
) -> Result<TwoPhaseSolution, DpError> {
    let (v_star, _, fs_residuals) = value_iteration_fs(model, tol)?;
    let q_star = compute_q_star(model, tol)?;
    let verdict = check_feasibility(model, &v_star, eps_feas);
    let feasible_sets = FeasibleActionSet::from_q_star(model, &q_star, eps_feas);
    let (w_star, h_star, policy, opt_residuals) = if verdict.is_feasible() {
        let (w, h, _, residuals) = value_iteration_opt(model, &feasible_sets, verdict, tol)?;
        let policy = extract_policy(model, &h, &feasible_sets)?;
        (Some(w), Some(h), Some(policy), residuals)
    } else {
        (None, None, None, Vec::new())
    };
    Ok(TwoPhaseSolution {
        v_star,
        q_star,
        verdict,
        feasible_sets,
        w_star,
        h_star,
        policy,
        fs_residuals,
        opt_residuals,
    })
}

/// Structured text report: per-state `V*`, `W*`, refined-set bitmask, and
/// residual histories.
pub fn report_to_text(model: &ExplicitCmdp, solution: &TwoPhaseSolution) -> String {
    let mut out = String::new();
    writeln!(out, "two-phase report v1").unwrap();
    match solution.verdict {
        FeasibilityVerdict::Feasible => writeln!(out, "verdict feasible").unwrap(),
        FeasibilityVerdict::Infeasible { violation } => {
            writeln!(out, "verdict infeasible violation {violation:.16e}").unwrap()
        }
    }
    for x in 0..model.state_count() {
        let v = solution.v_star.get(x);
        let w = solution.w_star.as_ref().map(|w| w.get(x)).unwrap_or(0.0);
        let mask: String = (0..model.entries(x).len())
            .map(|i| {
                if solution.feasible_sets.entry_indices(x).contains(&i) {
                    '1'
                } else {
                    '0'
                }
            })
            .collect();
        writeln!(out, "state {x} v {v:.16e} w {w:.16e} ufs {mask}").unwrap();
    }
    let fmt = |rs: &[f64]| rs.iter().map(|r| format!("{r:.6e}")).collect::<Vec<_>>().join(" ");
    writeln!(out, "fs_residuals {}", fmt(&solution.fs_residuals)).unwrap();
    writeln!(out, "opt_residuals {}", fmt(&solution.opt_residuals)).unwrap();
    out
}
