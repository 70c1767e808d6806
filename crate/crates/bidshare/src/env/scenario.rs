//! Scenario configuration: dimensions, demand model, and file parsing.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::rng::RngStream;

const PROB_TOL: f64 = 1e-9;

/// One customer request: rent a vehicle to `destination` (1-based station)
/// for `duration` slots at the quoted `fare`. A negative fare is a
/// rebalancing request the operator pays to fulfill.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RentalBid {
    pub destination: usize,
    pub duration: usize,
    pub fare: f64,
}

/// Bid-count distribution at one (station, time) cell.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CountDist {
    Poisson { poisson: f64 },
    Fixed { fixed: usize },
}

/// Fare distribution family; every family reduces to a finite cent-grid
/// support truncated to `[-F_bar, F_bar]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, tag = "family", rename_all = "snake_case")]
pub enum FareDist {
    /// A single fare value.
    Point { value: f64 },
    /// Explicit support and probabilities.
    Table { values: Vec<f64>, probs: Vec<f64> },
    /// Linearly decaying weights around `mode` on a `grid_step` grid over
    /// `[lo, hi]`.
    Triangular { lo: f64, hi: f64, mode: f64, grid_step: f64 },
}

impl FareDist {
    /// Finite `(fare, probability)` support, cent-rounded, truncated to the
    /// scenario fare bound, exactly normalized.
    pub fn support(&self, max_fare: f64) -> Result<Vec<(f64, f64)>, ScenarioError> {
        let cents = |f: f64| (f * 100.0).round() / 100.0;
        let clamp = |f: f64| f.max(-max_fare).min(max_fare);
        let raw: Vec<(f64, f64)> = match self {
            FareDist::Point { value } => vec![(cents(clamp(*value)), 1.0)],
            FareDist::Table { values, probs } => {
                if values.len() != probs.len() || values.is_empty() {
                    return Err(ScenarioError::Invalid(
                        "fare table needs matching nonempty values and probs".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_TOL || probs.iter().any(|&p| p < 0.0) {
                    return Err(ScenarioError::Invalid(
                        "fare table probabilities must be nonnegative and sum to 1".into(),
                    ));
                }
                values.iter().zip(probs).map(|(&v, &p)| (cents(clamp(v)), p)).collect()
            }
            FareDist::Triangular { lo, hi, mode, grid_step } => {
                if *grid_step <= 0.0 || hi < lo {
                    return Err(ScenarioError::Invalid(
                        "triangular fare family needs grid_step > 0 and hi >= lo".into(),
                    ));
                }
                let mut points = Vec::new();
                let mut f = *lo;
                while f <= hi + 1e-12 {
                    points.push(cents(clamp(f)));
                    f += grid_step;
                }
                points.dedup();
                let span = (hi - lo).max(*grid_step);
                points
                    .into_iter()
                    .map(|p| (p, 1.0 + span - (p - mode).abs().min(span)))
                    .collect()
            }
        };
        // Merge duplicates introduced by truncation, then renormalize with an
        // exact last entry so downstream stochasticity checks pass.
        let mut merged: BTreeMap<i64, f64> = BTreeMap::new();
        for (f, w) in raw {
            *merged.entry((f * 100.0).round() as i64).or_insert(0.0) += w;
        }
        let total: f64 = merged.values().sum();
        let mut out: Vec<(f64, f64)> =
            merged.into_iter().map(|(c, w)| (c as f64 / 100.0, w / total)).collect();
        let sum_except_last: f64 = out[..out.len() - 1].iter().map(|e| e.1).sum();
        let last = out.len() - 1;
        out[last].1 = 1.0 - sum_except_last;
        Ok(out)
    }
}

/// Demand at one (station, time) cell.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandCell {
    pub count: CountDist,
    /// Destination probabilities over stations `1..=S`.
    pub dest_probs: Vec<f64>,
    /// Duration probabilities over `1..=T_bar` slots.
    pub duration_probs: Vec<f64>,
    pub fare: FareDist,
}

/// Demand model: cells keyed by (1-based station, 0-based time); absent cells
/// mean no demand.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemandSpec {
    pub cells: BTreeMap<(usize, usize), DemandCell>,
}

impl DemandSpec {
    pub fn cell(&self, station: usize, time: usize) -> Option<&DemandCell> {
        self.cells.get(&(station, time))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// A fully specified problem instance. `threshold` is the per-slot constant
/// `d` in the constraint cost `d - sum_i tau_i / (T * C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub vehicles: usize,
    pub stations: usize,
    pub horizon: usize,
    pub max_duration: usize,
    pub max_fare: f64,
    pub threshold: f64,
    pub base_seed: u64,
    /// Per-vehicle `(station, remaining travel time)` at time 0.
    pub initial_placement: Vec<(usize, usize)>,
    pub demand: DemandSpec,
    /// Sort vehicles by `(destination, tau)` so permutations of the
    /// interchangeable fleet collapse to one state key.
    pub canonicalize: bool,
    /// Cap on enumerated dispatch decisions per state.
    pub decision_bound: usize,
    /// Optional multiplicative rank weight per (1-based station, time).
    pub rank_weights: BTreeMap<(usize, usize), f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(rename = "C")]
    vehicles: usize,
    #[serde(rename = "S")]
    stations: usize,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(rename = "T_bar")]
    max_duration: usize,
    #[serde(rename = "F_bar")]
    max_fare: f64,
    d: f64,
    base_seed: u64,
    initial_placement: Vec<(usize, usize)>,
    #[serde(default)]
    demand: Vec<DemandEntry>,
    #[serde(default = "default_true")]
    canonicalize: bool,
    #[serde(default = "default_decision_bound")]
    decision_bound: usize,
    #[serde(default)]
    rank_weights: Vec<RankWeightEntry>,
}

fn default_true() -> bool {
    true
}

fn default_decision_bound() -> usize {
    100_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandEntry {
    station: usize,
    time: usize,
    #[serde(flatten)]
    cell: DemandCell,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankWeightEntry {
    station: usize,
    time: usize,
    weight: f64,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let mut cells = BTreeMap::new();
        for entry in file.demand {
            if cells.insert((entry.station, entry.time), entry.cell).is_some() {
                return Err(ScenarioError::Invalid(format!(
                    "duplicate demand cell for station {} at time {}",
                    entry.station, entry.time
                )));
            }
        }
        let scenario = Scenario {
            vehicles: file.vehicles,
            stations: file.stations,
            horizon: file.horizon,
            max_duration: file.max_duration,
            max_fare: file.max_fare,
            threshold: file.d,
            base_seed: file.base_seed,
            initial_placement: file.initial_placement,
            demand: DemandSpec { cells },
            canonicalize: file.canonicalize,
            decision_bound: file.decision_bound,
            rank_weights: file
                .rank_weights
                .into_iter()
                .map(|w| ((w.station, w.time), w.weight))
                .collect(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.vehicles == 0 || self.stations == 0 || self.horizon == 0 {
            return fail("C, S, and T must all be at least 1".into());
        }
        if self.max_fare <= 0.0 {
            return fail("F_bar must be positive".into());
        }
        if self.max_duration == 0 {
            return fail("T_bar must be at least 1".into());
        }
        if self.initial_placement.len() != self.vehicles {
            return fail(format!(
                "initial placement lists {} vehicles, expected {}",
                self.initial_placement.len(),
                self.vehicles
            ));
        }
        for &(station, tau) in &self.initial_placement {
            if station == 0 || station > self.stations {
                return fail(format!("placement station {station} out of 1..={}", self.stations));
            }
            if tau > self.max_duration {
                return fail(format!("placement tau {tau} exceeds T_bar {}", self.max_duration));
            }
        }
        for (&(station, time), cell) in &self.demand.cells {
            let at = format!("demand cell (station {station}, time {time})");
            if station == 0 || station > self.stations {
                return fail(format!("{at}: station out of range"));
            }
            if time >= self.horizon {
                return fail(format!("{at}: time past the horizon"));
            }
            if cell.dest_probs.len() != self.stations {
                return fail(format!("{at}: dest_probs must list all {} stations", self.stations));
            }
            if cell.duration_probs.len() != self.max_duration {
                return fail(format!(
                    "{at}: duration_probs must cover 1..={}",
                    self.max_duration
                ));
            }
            for probs in [&cell.dest_probs, &cell.duration_probs] {
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_TOL || probs.iter().any(|&p| p < 0.0) {
                    return fail(format!(
                        "{at}: probability vectors must be nonnegative and sum to 1"
                    ));
                }
            }
            match cell.count {
                CountDist::Poisson { poisson } => {
                    if !(poisson.is_finite() && poisson >= 0.0) {
                        return fail(format!("{at}: rate must be finite and nonnegative"));
                    }
                }
                CountDist::Fixed { .. } => {}
            }
            cell.fare.support(self.max_fare)?;
        }
        for &(station, time) in self.rank_weights.keys() {
            if station == 0 || station > self.stations || time >= self.horizon {
                return fail(format!(
                    "rank weight for (station {station}, time {time}) out of range"
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn rank_weight(&self, station: usize, time: usize) -> f64 {
        self.rank_weights.get(&(station, time)).copied().unwrap_or(1.0)
    }
}

impl DemandCell {
    pub(crate) fn sample_count(&self, rng: &mut RngStream) -> usize {
        match self.count {
            CountDist::Poisson { poisson } => {
                if poisson == 0.0 {
                    0
                } else {
                    rng.poisson(poisson)
                }
            }
            CountDist::Fixed { fixed } => fixed,
        }
    }

    pub(crate) fn sample_bid(&self, max_fare: f64, rng: &mut RngStream) -> RentalBid {
        let destination = 1 + rng.categorical(&self.dest_probs);
        let duration = 1 + rng.categorical(&self.duration_probs);
        let support = self
            .fare
            .support(max_fare)
            .expect("fare support was validated with the scenario");
        let probs: Vec<f64> = support.iter().map(|e| e.1).collect();
        let fare = support[rng.categorical(&probs)].0;
        RentalBid { destination, duration, fare }
    }
}
