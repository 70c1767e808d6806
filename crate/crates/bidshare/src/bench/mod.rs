//! Seeded experiment harness shared by the command-line tool and the tests.
//!
//! An experiment plan names an algorithm, a seed, and evaluation settings;
//! running it on a scenario yields a comparison row (Monte Carlo reward and
//! constraint estimates with standard errors and a feasibility call) plus the
//! training log when the algorithm learns. Identical plans on identical
//! scenarios produce byte-identical outputs.

use crate::baselines::{
    extract_greedy_policy, grid_search_penalty, train_lagrangian_q, train_penalized_q,
    train_vanilla_q, GreedyDispatch, LagrangeState, PenaltyConfig,
};
use crate::cmdp::{mc_evaluate, McSummary};
use crate::dp::{report_to_text, solve_two_phase, DpError, TwoPhaseSolution, DEFAULT_TOL};
use crate::env::{export_explicit, EnvError, Scenario};
use crate::learn::{
    extract_learned_policy, train_async, train_sync, LearnError, LearnerConfig, LearningLog,
};
use crate::rng::RngStream;

use thiserror::Error;

/// Substream offset separating final evaluation draws from training draws.
const EVAL_SUBSTREAM: u64 = 0xb7e1_5162_8aed_2a6a;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Exact two-phase dynamic programming on the exported explicit model.
    Dp,
    /// Synchronous two-phase Q-learning on the exported explicit model.
    TwoPhaseSync,
    /// Asynchronous two-phase Q-learning on the simulation directly.
    TwoPhaseAsync,
    /// Unconstrained Q-learning on reward alone.
    Vanilla,
    /// Q-learning on `R - w * D`; multiple weights trigger a grid search.
    Penalized,
    /// Q-learning with a projected-ascent multiplier on the constraint.
    Lagrangian,
    /// Myopic rank-greedy dispatcher, no learning.
    Greedy,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Dp,
        Algorithm::TwoPhaseSync,
        Algorithm::TwoPhaseAsync,
        Algorithm::Vanilla,
        Algorithm::Penalized,
        Algorithm::Lagrangian,
        Algorithm::Greedy,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Algorithm::Dp => "dp",
            Algorithm::TwoPhaseSync => "two-phase-sync",
            Algorithm::TwoPhaseAsync => "two-phase-async",
            Algorithm::Vanilla => "vanilla",
            Algorithm::Penalized => "penalized",
            Algorithm::Lagrangian => "lagrangian",
            Algorithm::Greedy => "greedy",
        }
    }

    pub fn parse(token: &str) -> Option<Algorithm> {
        Algorithm::ALL.iter().copied().find(|a| a.token() == token)
    }
}

/// One seeded experiment: an algorithm with its training and evaluation
/// settings.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Monte Carlo trials for the final policy evaluation.
    pub trials: usize,
    pub learner: LearnerConfig,
    /// Penalty weights for the penalized learner; a single entry trains that
    /// weight directly, several trigger a grid search.
    pub penalty_weights: Vec<f64>,
}

impl ExperimentPlan {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        ExperimentPlan {
            algorithm,
            seed,
            trials: 1000,
            learner: LearnerConfig::default(),
            penalty_weights: vec![1.0],
        }
    }
}

/// One line of a comparison: policy quality estimates for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: &'static str,
    pub mean_reward: f64,
    pub reward_se: f64,
    pub mean_constraint: f64,
    pub constraint_se: f64,
    /// Mean constraint clears zero with two standard errors of slack.
    pub feasible: bool,
    /// Free-form detail, such as the chosen penalty weight.
    pub note: String,
}

/// Everything a run produces: the summary row, the training log if the
/// algorithm learns, and the exact solver report if it solves.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: ComparisonRow,
    pub log: Option<LearningLog>,
    pub report: Option<String>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("the scenario admits no feasible policy")]
    Infeasible,
}

fn summary_row(algorithm: Algorithm, summary: &McSummary, note: String) -> ComparisonRow {
    let constraint_se = summary.constraint_standard_error();
    ComparisonRow {
        algorithm: algorithm.token(),
        mean_reward: summary.mean_reward,
        reward_se: summary.reward_standard_error(),
        mean_constraint: summary.mean_constraint_cost,
        constraint_se,
        feasible: summary.mean_constraint_cost <= 2.0 * constraint_se,
        note,
    }
}

/// Solves the exported explicit model exactly. The row carries the exact
/// optimal value (zero standard error); infeasible scenarios are an error so
/// callers can map them to a distinct exit status.
pub fn solve_scenario(scenario: &Scenario) -> Result<(TwoPhaseSolution, RunOutcome), BenchError> {
    let model = export_explicit(scenario)?;
    let solution = solve_two_phase(&model, DEFAULT_TOL)?;
    let report = report_to_text(&model, &solution);
    let Some(value) = solution.optimal_value(&model) else {
        return Err(BenchError::Infeasible);
    };
    let row = ComparisonRow {
        algorithm: Algorithm::Dp.token(),
        mean_reward: value,
        reward_se: 0.0,
        mean_constraint: solution.feasibility_value(&model),
        constraint_se: 0.0,
        feasible: true,
        note: format!("exact over {} states", model.state_count()),
    };
    Ok((solution, RunOutcome { row, log: None, report: Some(report) }))
}

/// Runs one experiment plan on a scenario.
pub fn run(scenario: &Scenario, plan: &ExperimentPlan) -> Result<RunOutcome, BenchError> {
    let mut rng = RngStream::new(plan.seed, 0);
    let eval_rng = rng.substream(EVAL_SUBSTREAM);
    let algorithm = plan.algorithm;
    match algorithm {
        Algorithm::Dp => solve_scenario(scenario).map(|(_, outcome)| outcome),
        Algorithm::TwoPhaseSync => {
            let model = export_explicit(scenario)?;
            let reference = solve_two_phase(&model, DEFAULT_TOL).ok();
            let (pair, log) = train_sync(&model, &plan.learner, reference.as_ref(), &mut rng)?;
            let policy = extract_learned_policy(&pair, &plan.learner);
            let summary = mc_evaluate(&model, &policy, plan.trials, &eval_rng)
                .expect("learned policies are total on admissible actions");
            let note = format!("{} table pairs", pair.written_len());
            Ok(RunOutcome { row: summary_row(algorithm, &summary, note), log: Some(log), report: None })
        }
        Algorithm::TwoPhaseAsync => {
            let (pair, log) = train_async(scenario, &plan.learner, None, &mut rng);
            let policy = extract_learned_policy(&pair, &plan.learner);
            let summary = mc_evaluate(scenario, &policy, plan.trials, &eval_rng)
                .expect("learned policies are total on admissible actions");
            let note = format!("{} table pairs", pair.written_len());
            Ok(RunOutcome { row: summary_row(algorithm, &summary, note), log: Some(log), report: None })
        }
        Algorithm::Vanilla => {
            let (table, log) = train_vanilla_q(scenario, &plan.learner, &mut rng);
            let policy = extract_greedy_policy(&table);
            let summary = mc_evaluate(scenario, &policy, plan.trials, &eval_rng)
                .expect("greedy table policies are total on admissible actions");
            let note = format!("{} table pairs", table.written_len());
            Ok(RunOutcome { row: summary_row(algorithm, &summary, note), log: Some(log), report: None })
        }
        Algorithm::Penalized => {
            assert!(!plan.penalty_weights.is_empty(), "penalized runs need at least one weight");
            let (penalty, searched) = if plan.penalty_weights.len() == 1 {
                (PenaltyConfig { penalty_weight: plan.penalty_weights[0] }, false)
            } else {
                let outcome = grid_search_penalty(
                    scenario,
                    &plan.penalty_weights,
                    &plan.learner,
                    plan.trials,
                    &rng.substream(1),
                );
                (outcome.best, true)
            };
            let (table, log) = train_penalized_q(scenario, &penalty, &plan.learner, &mut rng);
            let policy = extract_greedy_policy(&table);
            let summary = mc_evaluate(scenario, &policy, plan.trials, &eval_rng)
                .expect("greedy table policies are total on admissible actions");
            let note = if searched {
                format!("grid-searched weight {}", penalty.penalty_weight)
            } else {
                format!("weight {}", penalty.penalty_weight)
            };
            Ok(RunOutcome { row: summary_row(algorithm, &summary, note), log: Some(log), report: None })
        }
        Algorithm::Lagrangian => {
            let (table, log, trace) =
                train_lagrangian_q(scenario, &plan.learner, &LagrangeState::default(), &mut rng);
            let policy = extract_greedy_policy(&table);
            let summary = mc_evaluate(scenario, &policy, plan.trials, &eval_rng)
                .expect("greedy table policies are total on admissible actions");
            let note = format!("final multiplier {:.4}", trace.last().copied().unwrap_or(0.0));
            Ok(RunOutcome { row: summary_row(algorithm, &summary, note), log: Some(log), report: None })
        }
        Algorithm::Greedy => {
            let policy = GreedyDispatch { scenario };
            let summary = mc_evaluate(scenario, &policy, plan.trials, &eval_rng)
                .expect("the greedy dispatcher is total");
            Ok(RunOutcome {
                row: summary_row(algorithm, &summary, "no training".into()),
                log: None,
                report: None,
            })
        }
    }
}

/// Runs every plan in order, collecting one row each.
pub fn compare(scenario: &Scenario, plans: &[ExperimentPlan]) -> Result<Vec<ComparisonRow>, BenchError> {
    plans.iter().map(|plan| run(scenario, plan).map(|o| o.row)).collect()
}

/// Renders rows as an aligned plain-text table.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>12} {:>10} {:>12} {:>10} {:>9}  {}\n",
        "algorithm", "reward", "+/-", "constraint", "+/-", "feasible", "note"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<16} {:>12.4} {:>10.4} {:>12.4} {:>10.4} {:>9}  {}\n",
            row.algorithm,
            row.mean_reward,
            row.reward_se,
            row.mean_constraint,
            row.constraint_se,
            if row.feasible { "yes" } else { "no" },
            row.note,
        ));
    }
    out
}

/// Renders rows as CSV with a fixed header.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out =
        String::from("algorithm,mean_reward,reward_se,mean_constraint,constraint_se,feasible,note\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.algorithm,
            row.mean_reward,
            row.reward_se,
            row.mean_constraint,
            row.constraint_se,
            row.feasible,
            row.note.replace(',', ";"),
        ));
    }
    out
}
