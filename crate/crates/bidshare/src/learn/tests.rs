use super::*;
use crate::cmdp::{toys, SampledModel};
use crate::dp::{compute_q_star, solve_two_phase, DEFAULT_TOL};
use crate::rng::pairwise_sum;

fn schedule() -> StepSchedule {
    StepSchedule::default()
}

#[test]
fn step_sizes_closed_form() {
    let s = schedule();
    assert_eq!(step_sizes(0, &s), (1.0, 1.0));
    let (slow, fast) = step_sizes(99, &s);
    assert!((fast - 0.07943).abs() < 1e-4, "{fast}");
    assert!((slow - 0.01995).abs() < 1e-4, "{slow}");
}

#[test]
fn step_sizes_strictly_decreasing() {
    let s = schedule();
    for n in 0..200u64 {
        let (slow0, fast0) = step_sizes(n, &s);
        let (slow1, fast1) = step_sizes(n + 1, &s);
        assert!(fast1 < fast0);
        assert!(slow1 < slow0);
    }
}

#[test]
fn two_timescale_ordering_and_square_summability() {
    let s = schedule();
    let mut sum_sq_fast = 0.0;
    let mut sum_sq_slow = 0.0;
    for n in 1..=1_000_000u64 {
        let (slow, fast) = step_sizes(n, &s);
        assert!(slow < fast, "slow step must trail the fast step at n={n}");
        sum_sq_fast += fast * fast;
        sum_sq_slow += slow * slow;
    }
    // sum_{m >= 2} m^(-1.1) is below zeta(1.1) - 1 < 9.6; the slow series
    // decays faster still.
    assert!(sum_sq_fast < 10.0, "{sum_sq_fast}");
    assert!(sum_sq_slow < sum_sq_fast);
}

#[test]
fn first_sync_sweep_is_exact_on_deterministic_toy() {
    let model = toys::t1();
    let config = LearnerConfig::default();
    let mut pair = LazyQPair::new();
    let mut rng = RngStream::new(0, 0);
    sync_sweep(&model, &mut pair, &config, &mut rng);
    // Deterministic successors and unit first step: targets land exactly.
    assert_eq!(pair.q(&0, &0), -1.0);
    assert_eq!(pair.q(&0, &1), 1.0);
    assert_eq!(pair.h(&0, &0), 1.0);
    assert_eq!(pair.h(&0, &1), 5.0);
    assert_eq!(pair.visits(&0, &0), 1);
}

#[test]
fn train_sync_converges_on_toy() {
    let model = toys::t1();
    let config = LearnerConfig { max_episodes: 200, ..LearnerConfig::default() };
    let mut rng = RngStream::new(7, 0);
    let reference = solve_two_phase(&model, DEFAULT_TOL).unwrap();
    let (pair, log) = train_sync(&model, &config, Some(&reference), &mut rng).unwrap();
    assert!((pair.q(&0, &0) + 1.0).abs() < 1e-6);
    assert!((pair.q(&0, &1) - 1.0).abs() < 1e-6);
    assert!((pair.h(&0, &0) - 1.0).abs() < 1e-3);
    let last = log.rows.last().unwrap();
    assert!(last.q_error.unwrap() < 1e-6);
    assert!(last.h_error.unwrap() < 1e-3);
    assert_eq!(last.mc_mean_reward, 1.0);
    assert_eq!(last.mc_mean_constraint, -1.0);
}

#[test]
fn vacuous_constraint_recovers_unconstrained_optimum() {
    let model = toys::t1_free();
    let config = LearnerConfig { max_episodes: 100, ..LearnerConfig::default() };
    let mut rng = RngStream::new(3, 0);
    let (pair, _) = train_sync(&model, &config, None, &mut rng).unwrap();
    // Zero costs keep every action feasible, so the revenue table matches
    // plain Q-learning and greedy extraction picks the high-reward action.
    assert_eq!(pair.q(&0, &0), 0.0);
    assert_eq!(pair.q(&0, &1), 0.0);
    assert!((pair.h(&0, &1) - 5.0).abs() < 1e-6);
    let policy = extract_learned_policy(&pair, &config);
    let mut rng = RngStream::new(0, 0);
    let action = Policy::<ExplicitCmdp>::act(&policy, &0, &(), &[0, 1], &mut rng).unwrap();
    assert_eq!(action, 1);
}

#[test]
fn golden_sweep_on_stochastic_model() {
    // Frozen from a seeded reference run; guards the update arithmetic and
    // the sample-draw ordering.
    let model = toys::branch_chain();
    let config = LearnerConfig::default();
    let mut pair = LazyQPair::new();
    let mut rng = RngStream::new(2024, 0);
    sync_sweep(&model, &mut pair, &config, &mut rng);
    sync_sweep(&model, &mut pair, &config, &mut rng);
    let got = [pair.q(&0, &0), pair.q(&1, &0), pair.h(&0, &0), pair.h(&1, &0)];
    let want = [GOLDEN[0], GOLDEN[1], GOLDEN[2], GOLDEN[3]];
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "got {got:?}, want {want:?}");
    }
}

const GOLDEN: [f64; 4] = [0.0, 0.0, 1.221913894413569, 1.0];

#[test]
fn sync_matches_exact_feasibility_table_on_random_model() {
    let cfg = toys::RandomModelConfig {
        horizon: 5,
        max_layer_width: 3,
        max_actions: 3,
        max_policies: 1_000_000,
        ..Default::default()
    };
    let mut gen_rng = RngStream::new(81, 0);
    let model = toys::random_episodic(&cfg, &mut gen_rng);
    let pairs: usize = model.transient_states().map(|x| model.entries(x).len()).sum();
    let sweeps = 200_000 / pairs;
    let config = LearnerConfig {
        max_episodes: sweeps,
        eval_every: sweeps,
        eval_trials: 10,
        ..LearnerConfig::default()
    };
    let mut rng = RngStream::new(82, 0);
    let (pair, _) = train_sync(&model, &config, None, &mut rng).unwrap();
    let q_star = compute_q_star(&model, DEFAULT_TOL).unwrap();
    let xi = XiNorm::for_model(&model);
    let err = xi.q_distance(&pair.q_table(&model), &q_star);
    assert!(err < 0.05, "feasibility-table error {err}");
}

#[test]
fn sampled_backup_is_unbiased() {
    let model = toys::branch_chain();
    let config = LearnerConfig::default();
    // Arbitrary fixed tables; first-visit steps write targets verbatim.
    let mut pair = LazyQPair::new();
    pair.apply((0, 0), -0.3, 0.9, &schedule());
    pair.apply((1, 0), 0.7, 0.4, &schedule());
    // Exact one-step feasibility target at (0,0):
    // D + 0.5 * q(1,0) + 0.5 * 0 = 0.35.
    let exact = 0.35;
    let mut rng = RngStream::new(55, 0);
    let batches = 100_000;
    let mut draws = Vec::with_capacity(batches);
    for _ in 0..batches {
        let samples: Vec<Step<usize>> = (0..config.schedule.sample_batch)
            .map(|_| model.sample_successor(&0, &0, &mut rng))
            .collect();
        let (q_target, _) = sampled_targets(&model, &pair, &samples, &config);
        draws.push(q_target);
    }
    let mean = pairwise_sum(&draws) / batches as f64;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * se + 1e-12,
        "mean {mean}, exact {exact}, se {se}"
    );
}

#[test]
fn select_action_on_converged_toy_tables() {
    let mut pair = LazyQPair::new();
    pair.apply((0usize, 0usize), -1.0, 1.0, &schedule());
    pair.apply((0, 1), 1.0, 5.0, &schedule());
    let config = LearnerConfig { exploration_epsilon: 0.0, ..LearnerConfig::default() };
    let mut rng = RngStream::new(0, 0);
    // Only action 0 sits in the noisy feasible set.
    assert_eq!(select_action(&pair, &0, &[0, 1], &config, &mut rng), 0);
}

#[test]
fn select_action_breaks_ties_toward_smallest_key() {
    let pair: LazyQPair<usize, usize> = LazyQPair::new();
    let config = LearnerConfig { exploration_epsilon: 0.0, ..LearnerConfig::default() };
    let mut rng = RngStream::new(0, 0);
    // Fresh tables: full feasible set, all-zero revenue, tie falls to the
    // smallest action key.
    assert_eq!(select_action(&pair, &0, &[0, 1, 2], &config, &mut rng), 0);
}

#[test]
fn select_action_falls_back_to_least_infeasible() {
    let mut pair = LazyQPair::new();
    pair.apply((0usize, 0usize), 2.0, 9.0, &schedule());
    pair.apply((0, 1), 0.5, 0.0, &schedule());
    let config = LearnerConfig { exploration_epsilon: 0.0, ..LearnerConfig::default() };
    let mut rng = RngStream::new(0, 0);
    // Both estimates exceed the tolerance, so the repair rule picks the
    // smaller one despite its worse revenue.
    assert_eq!(select_action(&pair, &0, &[0, 1], &config, &mut rng), 1);
}

#[test]
fn train_async_converges_on_toy() {
    let model = toys::t1();
    let config = LearnerConfig {
        max_episodes: 500,
        exploration_epsilon: 0.2,
        eval_every: 100,
        eval_trials: 20,
        ..LearnerConfig::default()
    };
    let mut rng = RngStream::new(17, 0);
    let (pair, log) = train_async(&model, &config, None, &mut rng);
    assert!((pair.q(&0, &0) + 1.0).abs() < 1e-3);
    assert!((pair.q(&0, &1) - 1.0).abs() < 1e-3);
    assert_eq!(log.rows.len(), 5);
    assert_eq!(log.rows.last().unwrap().mc_mean_reward, 1.0);
}

#[test]
fn train_async_tracks_exact_tables_on_random_model() {
    let cfg = toys::RandomModelConfig {
        horizon: 5,
        max_layer_width: 3,
        max_actions: 3,
        max_policies: 1_000_000,
        zero_cost_prob: 0.5,
        allow_negative_costs: false,
        ..Default::default()
    };
    let mut gen_rng = RngStream::new(53, 0);
    let model = toys::random_episodic(&cfg, &mut gen_rng);
    let reference = solve_two_phase(&model, DEFAULT_TOL).unwrap();
    assert!(reference.verdict.is_feasible(), "pick a seed with a feasible instance");
    let xi = XiNorm::for_model(&model);
    let config = LearnerConfig {
        max_episodes: 6000,
        eval_every: 6000,
        eval_trials: 10,
        exploration_epsilon: 0.3,
        ..LearnerConfig::default()
    };
    let probe = |pair: &LazyQPair<usize, usize>| {
        (Some(xi.q_distance(&pair.q_table(&model), &reference.q_star)), None)
    };
    let mut rng = RngStream::new(54, 0);
    let (pair, log) = train_async(&model, &config, Some(&probe), &mut rng);
    let err = log.rows.last().unwrap().q_error.unwrap();
    assert!(err < 0.1, "feasibility-table error {err}");
    let policy = extract_learned_policy(&pair, &config);
    let summary = mc_evaluate(&model, &policy, 1000, &RngStream::new(42, 0)).unwrap();
    let slack = config.eps_feas_learn + 2.0 * summary.constraint_standard_error();
    assert!(
        summary.mean_constraint_cost <= slack,
        "constraint estimate {} above {slack}",
        summary.mean_constraint_cost
    );
}

#[test]
fn episodes_never_exceed_the_horizon_and_skip_absorbing_keys() {
    let model = toys::branch_chain();
    let config = LearnerConfig {
        max_episodes: 300,
        eval_every: 300,
        eval_trials: 5,
        ..LearnerConfig::default()
    };
    let mut rng = RngStream::new(5, 0);
    let (pair, _) = train_async(&model, &config, None, &mut rng);
    for (state, _) in pair.keys() {
        assert!(!SampledModel::is_absorbing(&model, state));
    }
}

#[test]
fn training_is_deterministic_given_seed_and_config() {
    let model = toys::branch_chain();
    let config = LearnerConfig { max_episodes: 50, eval_every: 25, eval_trials: 5, ..Default::default() };
    let run = |seed| {
        let mut rng = RngStream::new(seed, 0);
        train_sync(&model, &config, None, &mut rng).unwrap()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9).0, run(10).0);
    let run_async = |seed| {
        let mut rng = RngStream::new(seed, 0);
        train_async(&model, &config, None, &mut rng)
    };
    assert_eq!(run_async(9), run_async(9));
}

#[test]
fn sync_rejects_oversized_models() {
    // A pair budget of zero is impossible to satisfy, so any model trips the
    // limit; exercised via a shadowed constant-free check on the error type.
    let model = toys::t1();
    let pairs: usize = model.transient_states().map(|x| model.entries(x).len()).sum();
    assert!(pairs <= SYNC_PAIR_LIMIT);
    let err = LearnError::TooManyPairs { pairs: SYNC_PAIR_LIMIT + 1, limit: SYNC_PAIR_LIMIT };
    assert!(err.to_string().contains("100000"));
}

#[test]
fn log_serializes_with_optional_columns() {
    let mut log = LearningLog::default();
    log.rows.push(LogRow {
        update_count: 20,
        episode: 10,
        q_error: Some(0.5),
        h_error: None,
        mc_mean_reward: 1.25,
        mc_mean_constraint: -0.5,
        wallclock_seconds: None,
        lambda: None,
    });
    let csv = log.to_csv();
    assert_eq!(
        csv,
        "update_count,episode,xi_norm_q_error,xi_norm_h_error,mc_mean_reward,mc_mean_constraint,wallclock_seconds\n\
         20,10,0.5,,1.25,-0.5,\n"
    );
    log.rows[0].lambda = Some(2.0);
    let csv = log.to_csv();
    assert!(csv.starts_with("update_count,episode,"));
    assert!(csv.contains(",lambda\n"));
    assert!(csv.trim_end().ends_with(",2"));
}

#[test]
fn snapshot_text_round_trips_key_order() {
    let mut pair = LazyQPair::new();
    pair.apply((1usize, 0usize), 0.5, 1.0, &schedule());
    pair.apply((0, 1), -0.25, 2.0, &schedule());
    let text = pair.to_text();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "qpair v1");
    assert_eq!(lines[1], "entries 2");
    assert!(lines[2].starts_with("0 1 "));
    assert!(lines[3].starts_with("1 0 "));
}
