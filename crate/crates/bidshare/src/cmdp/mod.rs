//! Core CMDP abstractions: explicit models, policies, trajectory sampling,
//! Monte Carlo evaluation, and a brute-force enumeration oracle.

pub mod brute;
pub mod model;
pub mod policy;
pub mod sample;
pub mod toys;

pub use brute::{brute_force_solve, BruteForceError, BruteForceSolution};
pub use model::{ActionEntry, ExplicitCmdp, ModelBuilder, ModelError, Violation};
pub use policy::{
    mc_evaluate, sample_trajectory, DeterministicPolicy, McSummary, Policy, PolicyError,
    Trajectory, TrialRecord,
};
pub use sample::{EnumerableModel, SampledModel, Step};
