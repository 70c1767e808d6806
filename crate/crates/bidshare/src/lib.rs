//! Constrained-MDP toolkit for bidding-based one-way vehicle sharing.
//!
//! The crate solves episodic constrained MDPs (maximize expected revenue
//! subject to an expected cumulative constraint cost being at most zero) with
//! a two-phase method: a feasibility phase that refines the admissible action
//! sets to those certifying constraint satisfaction, and a revenue phase that
//! optimizes over the refined sets. Both an exact dynamic-programming solver
//! and sampling-based two-phase Q-learning are provided, together with the
//! vehicle-sharing simulation the method was designed for, baseline
//! algorithms, and a seeded benchmark harness.
//!
//! A worked tour lives in the `book/` guide; the snippets below mirror its
//! chapters and are compiled as doc-tests.
//!
//! # Solving a toy CMDP exactly
//!
//! ```
//! use bidshare::cmdp::{brute_force_solve, toys};
//! use bidshare::dp::solve_two_phase;
//!
//! // One transient state, two actions: "a" earns 1 with constraint cost -1,
//! // "b" earns 5 with constraint cost +1. Only "a" is feasible.
//! let model = toys::t1();
//!
//! let dp = solve_two_phase(&model, 1e-10).unwrap();
//! assert!(dp.verdict.is_feasible());
//! assert_eq!(dp.policy.as_ref().unwrap().action(0), Some(0));
//! assert!((dp.w_star.as_ref().unwrap().get(0) - 1.0).abs() < 1e-9);
//!
//! // The independent enumeration oracle agrees.
//! let oracle = brute_force_solve(&model).unwrap();
//! assert_eq!(oracle.optimal_value, Some(1.0));
//! ```
//!
//! # Learning the same solution from samples
//!
//! ```
//! use bidshare::cmdp::{mc_evaluate, toys};
//! use bidshare::learn::{train_sync, LearnerConfig};
//! use bidshare::rng::RngStream;
//!
//! let model = toys::t1();
//! let config = LearnerConfig { max_episodes: 300, ..LearnerConfig::default() };
//! let (pair, _log) = train_sync(&model, &config, None, &mut RngStream::new(7, 0)).unwrap();
//!
//! // The feasibility table separates the two actions by sign.
//! assert!(pair.q(&0, &0) < -0.9);
//! assert!(pair.q(&0, &1) > 0.9);
//!
//! let policy = bidshare::learn::extract_learned_policy(&pair, &config);
//! let summary = mc_evaluate(&model, &policy, 10, &RngStream::new(1, 0)).unwrap();
//! assert_eq!(summary.mean_reward, 1.0);
//! ```

pub mod baselines;
pub mod bench;
pub mod cmdp;
pub mod dp;
pub mod env;
pub mod learn;
pub mod rng;
