//! Bidding-based vehicle-sharing environment.
//!
//! A fleet of `C` identical vehicles serves `S` stations over `T` time slots.
//! At each slot, customers submit rental bids (destination, duration, fare;
//! negative fares are operator-paid rebalancing requests). The operator
//! dispatches idle vehicles against the best-ranked bids; in-transit vehicles
//! tick down their remaining travel time. Revenue is the sum of accepted
//! fares; the constraint charges `d` per slot minus the fleet's remaining
//! travel-time mass, so feasible policies must keep vehicles busy.
//!
//! The environment implements the sampled-model interface for the learners
//! and exports micro instances as explicit table models for exact
//! cross-checks.

mod dynamics;
mod export;
mod scenario;

pub use dynamics::{
    admissible_decisions, env_step, env_step_capped, nominal_decisions, rank_bids, rank_value,
    sample_bids, Arrivals, DispatchDecision, FleetState,
};
pub use export::export_explicit;
pub use scenario::{CountDist, DemandCell, DemandSpec, FareDist, RentalBid, Scenario, ScenarioError};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("decision enumeration exceeds the bound of {bound} ({estimate} decisions)")]
    TooLarge { bound: usize, estimate: usize },
    #[error("inadmissible decision: {0}")]
    Inadmissible(String),
    #[error("explicit export is infeasible: {0}")]
    Export(String),
}
