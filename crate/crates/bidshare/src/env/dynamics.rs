//! Fleet state, bid ranking, dispatch decisions, and the step function.

use crate::cmdp::{SampledModel, Step};
use crate::env::scenario::{RentalBid, Scenario};
use crate::env::EnvError;
use crate::rng::RngStream;

/// Fleet state: time counter `k` and one `(destination station, remaining
/// travel time)` row per vehicle. A vehicle with `tau = 0` is idle at its
/// destination. Every state with `k = T` collapses to one END key with an
/// empty vehicle list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FleetState {
    pub k: usize,
    pub vehicles: Vec<(usize, usize)>,
}

impl FleetState {
    pub fn end(horizon: usize) -> Self {
        Self { k: horizon, vehicles: Vec::new() }
    }

    /// Sorts the interchangeable vehicles so permutations share one key.
    pub fn canonical(mut self) -> Self {
        self.vehicles.sort_unstable();
        self
    }

    pub fn tau_sum(&self) -> usize {
        self.vehicles.iter().map(|&(_, tau)| tau).sum()
    }

    /// Idle vehicles per station (0-based index over stations `1..=S`).
    pub fn idle_counts(&self, stations: usize) -> Vec<usize> {
        let mut counts = vec![0usize; stations];
        for &(q, tau) in &self.vehicles {
            if tau == 0 {
                counts[q - 1] += 1;
            }
        }
        counts
    }
}

impl Scenario {
    pub fn initial_fleet_state(&self) -> FleetState {
        let state = FleetState { k: 0, vehicles: self.initial_placement.clone() };
        if self.canonicalize {
            state.canonical()
        } else {
            state
        }
    }

    /// Constraint cost charged when leaving `state`: the per-slot threshold
    /// minus the fleet's remaining travel-time mass. Depends only on the
    /// pre-transition state.
    pub fn constraint_cost(&self, state: &FleetState) -> f64 {
        self.threshold
            - state.tau_sum() as f64 / (self.horizon as f64 * self.vehicles as f64)
    }
}

/// Price-to-travel-time rank of a bid toward station `target`: fares spread
/// per slot when the operator earns, and scale with the slots a vehicle is
/// tied up when the operator pays. Destination mismatch ranks below
/// everything.
pub fn rank_value(bid: &RentalBid, target: usize) -> f64 {
    if bid.destination != target {
        return f64::NEG_INFINITY;
    }
    if bid.fare >= 0.0 {
        bid.fare / bid.duration as f64
    } else {
        bid.fare * bid.duration as f64
    }
}

/// Bids toward `target`, best rank first. Ties prefer the higher fare, then
/// the shorter duration, then arrival order.
pub fn rank_bids(bids: &[RentalBid], target: usize) -> Vec<RentalBid> {
    let mut ranked: Vec<(usize, RentalBid)> = bids
        .iter()
        .enumerate()
        .filter(|(_, b)| b.destination == target)
        .map(|(i, b)| (i, *b))
        .collect();
    ranked.sort_by(|(ia, a), (ib, b)| {
        rank_value(b, target)
            .partial_cmp(&rank_value(a, target))
            .unwrap()
            .then(b.fare.partial_cmp(&a.fare).unwrap())
            .then(a.duration.cmp(&b.duration))
            .then(ia.cmp(ib))
    });
    ranked.into_iter().map(|(_, b)| b).collect()
}

/// Draws the bid list for `station` (1-based) at time `t`: the count comes
/// from the cell's count distribution, each bid i.i.d. from the cell's
/// destination, duration, and fare distributions. No demand cell means no
/// bids.
pub fn sample_bids(
    scenario: &Scenario,
    t: usize,
    station: usize,
    rng: &mut RngStream,
) -> Vec<RentalBid> {
    let Some(cell) = scenario.demand.cell(station, t) else {
        return Vec::new();
    };
    let count = cell.sample_count(rng);
    (0..count).map(|_| cell.sample_bid(scenario.max_fare, rng)).collect()
}

/// Realized bid counts per (origin station, destination station), 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrivals {
    counts: Vec<Vec<usize>>,
}

impl Arrivals {
    pub fn from_bids(bids_per_station: &[Vec<RentalBid>], stations: usize) -> Self {
        let mut counts = vec![vec![0usize; stations]; stations];
        for (j, bids) in bids_per_station.iter().enumerate() {
            for bid in bids {
                counts[j][bid.destination - 1] += 1;
            }
        }
        Self { counts }
    }

    pub fn get(&self, from: usize, to: usize) -> usize {
        self.counts[from][to]
    }
}

/// A dispatch decision as per-pair counts: `counts[j][j']` idle vehicles at
/// station `j+1` are sent toward station `j'+1`. The diagonal holds the
/// stay slots (round-trip rentals or idling); each row must spend exactly
/// the station's idle vehicles.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DispatchDecision {
    pub counts: Vec<Vec<usize>>,
}

impl DispatchDecision {
    /// The all-stay decision for a state.
    pub fn stay(state: &FleetState, stations: usize) -> Self {
        let idle = state.idle_counts(stations);
        let mut counts = vec![vec![0usize; stations]; stations];
        for (j, &n) in idle.iter().enumerate() {
            counts[j][j] = n;
        }
        Self { counts }
    }

    pub fn dispatched(&self, from: usize, to: usize) -> usize {
        self.counts[from][to]
    }
}

/// Enumerates per-station outbound splits of `idle` vehicles over the
/// off-diagonal targets, each target capped by `caps`; the diagonal takes
/// the remainder. Rows come out in lexicographic order.
fn station_splits(idle: usize, station: usize, caps: &[usize]) -> Vec<Vec<usize>> {
    let stations = caps.len();
    let mut out = Vec::new();
    let mut row = vec![0usize; stations];
    fn rec(
        row: &mut Vec<usize>,
        j2: usize,
        left: usize,
        station: usize,
        caps: &[usize],
        out: &mut Vec<Vec<usize>>,
    ) {
        if j2 == caps.len() {
            row[station] = left;
            out.push(row.clone());
            return;
        }
        if j2 == station {
            rec(row, j2 + 1, left, station, caps, out);
            return;
        }
        for c in 0..=left.min(caps[j2]) {
            row[j2] = c;
            rec(row, j2 + 1, left - c, station, caps, out);
        }
        row[j2] = 0;
    }
    rec(&mut row, 0, idle, station, caps, &mut out);
    out
}

fn product_decisions(
    per_station: Vec<Vec<Vec<usize>>>,
    bound: usize,
) -> Result<Vec<DispatchDecision>, EnvError> {
    let estimate = per_station.iter().map(|rows| rows.len()).product::<usize>();
    if estimate > bound {
        return Err(EnvError::TooLarge { bound, estimate });
    }
    let mut decisions = vec![Vec::new()];
    for rows in per_station {
        let mut next = Vec::with_capacity(decisions.len() * rows.len());
        for partial in &decisions {
            for row in &rows {
                let mut counts: Vec<Vec<usize>> = partial.clone();
                counts.push(row.clone());
                next.push(counts);
            }
        }
        decisions = next;
    }
    let mut out: Vec<DispatchDecision> =
        decisions.into_iter().map(|counts| DispatchDecision { counts }).collect();
    out.sort_unstable();
    Ok(out)
}

/// All decisions satisfying the dispatch constraints for realized arrivals:
/// off-diagonal counts bounded by the matching arrival counts, rows spending
/// exactly the idle vehicles. Per-station choices are independent, so the
/// total is the product of per-station splits.
pub fn admissible_decisions(
    state: &FleetState,
    arrivals: &Arrivals,
    scenario: &Scenario,
) -> Result<Vec<DispatchDecision>, EnvError> {
    let stations = scenario.stations;
    let idle = state.idle_counts(stations);
    let per_station = (0..stations)
        .map(|j| {
            let caps: Vec<usize> = (0..stations).map(|j2| arrivals.get(j, j2)).collect();
            station_splits(idle[j], j, &caps)
        })
        .collect();
    product_decisions(per_station, scenario.decision_bound)
}

/// Decisions bounded only by the idle counts, independent of realized
/// arrivals. This is the action set exposed through the sampled-model
/// interface (so backups can enumerate actions without observations);
/// execution caps each pair at the bids actually present.
pub fn nominal_decisions(
    state: &FleetState,
    scenario: &Scenario,
) -> Result<Vec<DispatchDecision>, EnvError> {
    let stations = scenario.stations;
    let idle = state.idle_counts(stations);
    let per_station = (0..stations)
        .map(|j| {
            let caps: Vec<usize> = (0..stations).map(|_| idle[j]).collect();
            station_splits(idle[j], j, &caps)
        })
        .collect();
    product_decisions(per_station, scenario.decision_bound)
}

fn validate_decision(
    state: &FleetState,
    decision: &DispatchDecision,
    arrivals: &Arrivals,
    scenario: &Scenario,
) -> Result<(), EnvError> {
    let stations = scenario.stations;
    if decision.counts.len() != stations
        || decision.counts.iter().any(|row| row.len() != stations)
    {
        return Err(EnvError::Inadmissible(format!(
            "decision matrix must be {stations}x{stations}"
        )));
    }
    let idle = state.idle_counts(stations);
    for j in 0..stations {
        let row_sum: usize = decision.counts[j].iter().sum();
        if row_sum != idle[j] {
            return Err(EnvError::Inadmissible(format!(
                "station {} spends {row_sum} vehicles but has {} idle",
                j + 1,
                idle[j]
            )));
        }
        for j2 in 0..stations {
            if j2 != j && decision.counts[j][j2] > arrivals.get(j, j2) {
                return Err(EnvError::Inadmissible(format!(
                    "station {} sends {} vehicles to station {} against {} bids",
                    j + 1,
                    decision.counts[j][j2],
                    j2 + 1,
                    arrivals.get(j, j2)
                )));
            }
        }
    }
    Ok(())
}

/// Clamps each outbound count to the realized arrivals, returning the excess
/// vehicles to the stay slot.
fn cap_decision(
    decision: &DispatchDecision,
    arrivals: &Arrivals,
    stations: usize,
) -> DispatchDecision {
    let mut counts = decision.counts.clone();
    for j in 0..stations {
        for j2 in 0..stations {
            if j2 != j {
                let capped = counts[j][j2].min(arrivals.get(j, j2));
                counts[j][j] += counts[j][j2] - capped;
                counts[j][j2] = capped;
            }
        }
    }
    DispatchDecision { counts }
}

fn execute(
    scenario: &Scenario,
    state: &FleetState,
    decision: &DispatchDecision,
    bids_per_station: &[Vec<RentalBid>],
    rng: &mut RngStream,
) -> (FleetState, f64, f64) {
    let stations = scenario.stations;
    let constraint_cost = scenario.constraint_cost(state);
    let mut reward = 0.0;
    let mut vehicles = Vec::with_capacity(state.vehicles.len());
    for &(q, tau) in &state.vehicles {
        if tau > 0 {
            vehicles.push((q, tau - 1));
        }
    }
    for j in 0..stations {
        for j2 in 0..stations {
            let slots = decision.counts[j][j2];
            if slots == 0 {
                continue;
            }
            if j2 != j {
                // Top-ranked outbound bids are all accepted; the random
                // bijection to vehicles only permutes the durations.
                let ranked = rank_bids(&bids_per_station[j], j2 + 1);
                debug_assert!(ranked.len() >= slots, "decision validated against arrivals");
                let mut durations: Vec<usize> = Vec::with_capacity(slots);
                for bid in &ranked[..slots] {
                    reward += bid.fare;
                    durations.push(bid.duration);
                }
                rng.shuffle(&mut durations);
                for dur in durations {
                    vehicles.push((j2 + 1, dur));
                }
            } else {
                // Stay slots serve profitable round trips first; the rest
                // idle with a zero row.
                let ranked: Vec<RentalBid> = rank_bids(&bids_per_station[j], j + 1)
                    .into_iter()
                    .filter(|b| rank_value(b, j + 1) > 0.0)
                    .collect();
                let served = slots.min(ranked.len());
                let mut durations: Vec<usize> = Vec::with_capacity(served);
                for bid in &ranked[..served] {
                    reward += bid.fare;
                    durations.push(bid.duration);
                }
                rng.shuffle(&mut durations);
                for dur in durations {
                    vehicles.push((j + 1, dur));
                }
                for _ in served..slots {
                    vehicles.push((j + 1, 0));
                }
            }
        }
    }
    debug_assert_eq!(vehicles.len(), state.vehicles.len(), "vehicles are conserved");
    let next = if state.k + 1 >= scenario.horizon {
        FleetState::end(scenario.horizon)
    } else {
        let next = FleetState { k: state.k + 1, vehicles };
        if scenario.canonicalize {
            next.canonical()
        } else {
            next
        }
    };
    (next, reward, constraint_cost)
}

/// Steps the environment under a decision that must satisfy the dispatch
/// constraints for the realized bids exactly.
pub fn env_step(
    scenario: &Scenario,
    state: &FleetState,
    decision: &DispatchDecision,
    bids_per_station: &[Vec<RentalBid>],
    rng: &mut RngStream,
) -> Result<(FleetState, f64, f64), EnvError> {
    let arrivals = Arrivals::from_bids(bids_per_station, scenario.stations);
    validate_decision(state, decision, &arrivals, scenario)?;
    Ok(execute(scenario, state, decision, bids_per_station, rng))
}

/// Steps the environment under a nominal decision, clamping outbound counts
/// to the bids actually present; clamped vehicles stay idle.
pub fn env_step_capped(
    scenario: &Scenario,
    state: &FleetState,
    decision: &DispatchDecision,
    bids_per_station: &[Vec<RentalBid>],
    rng: &mut RngStream,
) -> (FleetState, f64, f64) {
    let arrivals = Arrivals::from_bids(bids_per_station, scenario.stations);
    let capped = cap_decision(decision, &arrivals, scenario.stations);
    debug_assert!(validate_decision(state, &capped, &arrivals, scenario).is_ok());
    execute(scenario, state, &capped, bids_per_station, rng)
}

impl Scenario {
    fn sample_all_bids(&self, t: usize, rng: &mut RngStream) -> Vec<Vec<RentalBid>> {
        (1..=self.stations).map(|j| sample_bids(self, t, j, rng)).collect()
    }
}

impl SampledModel for Scenario {
    type State = FleetState;
    type Action = DispatchDecision;
    type Obs = Vec<Vec<RentalBid>>;

    fn initial_state(&self) -> FleetState {
        self.initial_fleet_state()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn is_absorbing(&self, state: &FleetState) -> bool {
        state.k >= self.horizon
    }

    fn offer(&self, state: &FleetState, rng: &mut RngStream) -> (Vec<Vec<RentalBid>>, Vec<DispatchDecision>) {
        let bids = self.sample_all_bids(state.k, rng);
        let actions = nominal_decisions(state, self)
            .expect("decision enumeration exceeded the scenario bound; shrink the fleet or raise decision_bound");
        (bids, actions)
    }

    fn transition(
        &self,
        state: &FleetState,
        obs: &Vec<Vec<RentalBid>>,
        action: &DispatchDecision,
        rng: &mut RngStream,
    ) -> Step<FleetState> {
        let (next, reward, constraint_cost) = env_step_capped(self, state, action, obs, rng);
        Step { next, reward, constraint_cost }
    }

    fn sample_successor(
        &self,
        state: &FleetState,
        action: &DispatchDecision,
        rng: &mut RngStream,
    ) -> Step<FleetState> {
        let bids = self.sample_all_bids(state.k, rng);
        let (next, reward, constraint_cost) = env_step_capped(self, state, action, &bids, rng);
        Step { next, reward, constraint_cost }
    }

    fn backup_actions(&self, state: &FleetState) -> Vec<DispatchDecision> {
        if state.k >= self.horizon {
            return Vec::new();
        }
        nominal_decisions(state, self)
            .expect("decision enumeration exceeded the scenario bound; shrink the fleet or raise decision_bound")
    }
}
