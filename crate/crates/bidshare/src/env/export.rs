//! Exact explicit-model export for micro scenarios.
//!
//! Enumerates every reachable canonical fleet state, every nominal dispatch
//! decision, and every bid realization with its probability, producing a
//! table model whose transition rows, expected rewards, and constraint costs
//! are exact. This bridges the simulation to the exact solvers and the
//! enumeration oracle for cross-validation.

use std::collections::BTreeMap;

use crate::cmdp::{ExplicitCmdp, ModelBuilder};
use crate::env::dynamics::{env_step_capped, nominal_decisions, FleetState};
use crate::env::scenario::{CountDist, RentalBid, Scenario};
use crate::env::EnvError;
use crate::rng::RngStream;

const STATE_LIMIT: usize = 50_000;
const REALIZATION_LIMIT: usize = 200_000;
const COUNT_TAIL: f64 = 1e-9;

/// Bid-count support with the Poisson tail (mass below `1e-9`) folded into
/// the largest retained count.
pub(super) fn count_support(dist: &CountDist) -> Vec<(usize, f64)> {
    match dist {
        CountDist::Fixed { fixed } => vec![(*fixed, 1.0)],
        CountDist::Poisson { poisson } => {
            let lambda = *poisson;
            if lambda == 0.0 {
                return vec![(0, 1.0)];
            }
            let mut support = Vec::new();
            let mut p = (-lambda).exp();
            let mut cumulative = 0.0;
            let mut n = 0usize;
            loop {
                support.push((n, p));
                cumulative += p;
                if 1.0 - cumulative < COUNT_TAIL {
                    break;
                }
                n += 1;
                p *= lambda / n as f64;
            }
            let last = support.len() - 1;
            support[last].1 += 1.0 - cumulative;
            support
        }
    }
}

/// All bid multisets of one station-time cell with their probabilities.
///
/// Bid order within a station only breaks ties between bids of equal rank
/// and fare, where either order yields the same successor and reward, so
/// multisets (not sequences) are sufficient for exact enumeration.
fn cell_realizations(
    scenario: &Scenario,
    station: usize,
    time: usize,
) -> Result<Vec<(Vec<RentalBid>, f64)>, EnvError> {
    let Some(cell) = scenario.demand.cell(station, time) else {
        return Ok(vec![(Vec::new(), 1.0)]);
    };
    let fares = cell
        .fare
        .support(scenario.max_fare)
        .map_err(|e| EnvError::Export(e.to_string()))?;
    // Atomic bid support: destination x duration x fare with positive mass.
    let mut atoms: Vec<(RentalBid, f64)> = Vec::new();
    for (d, &pd) in cell.dest_probs.iter().enumerate() {
        for (dur, &pt) in cell.duration_probs.iter().enumerate() {
            for &(fare, pf) in &fares {
                let p = pd * pt * pf;
                if p > 0.0 {
                    atoms.push((
                        RentalBid { destination: d + 1, duration: dur + 1, fare },
                        p,
                    ));
                }
            }
        }
    }
    let mut out = Vec::new();
    for (n, pn) in count_support(&cell.count) {
        if n == 0 {
            out.push((Vec::new(), pn));
            continue;
        }
        if atoms.is_empty() {
            return Err(EnvError::Export(format!(
                "station {station} at time {time} draws bids from an empty support"
            )));
        }
        // Multisets of size n over the atoms, with multinomial weights.
        let mut counts = vec![0usize; atoms.len()];
        enumerate_multisets(&atoms, &mut counts, 0, n, pn, &mut out);
    }
    if out.len() > REALIZATION_LIMIT {
        return Err(EnvError::Export(format!(
            "station {station} at time {time} has {} bid realizations",
            out.len()
        )));
    }
    Ok(out)
}

fn enumerate_multisets(
    atoms: &[(RentalBid, f64)],
    counts: &mut Vec<usize>,
    index: usize,
    left: usize,
    scale: f64,
    out: &mut Vec<(Vec<RentalBid>, f64)>,
) {
    if index == atoms.len() - 1 {
        counts[index] = left;
        let mut prob = scale * multinomial(counts);
        let mut bids = Vec::new();
        for (i, &(bid, p)) in atoms.iter().enumerate() {
            for _ in 0..counts[i] {
                bids.push(bid);
            }
            prob *= p.powi(counts[i] as i32);
        }
        out.push((bids, prob));
        counts[index] = 0;
        return;
    }
    for c in 0..=left {
        counts[index] = c;
        enumerate_multisets(atoms, counts, index + 1, left - c, scale, out);
    }
    counts[index] = 0;
}

fn multinomial(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let mut value = 1.0;
    let mut factor = 1usize;
    for &c in counts {
        for k in 1..=c {
            value *= factor as f64 / k as f64;
            factor += 1;
        }
    }
    debug_assert_eq!(factor, n + 1);
    value
}

/// Joint bid realizations across all stations at one time slot.
fn joint_realizations(
    scenario: &Scenario,
    time: usize,
) -> Result<Vec<(Vec<Vec<RentalBid>>, f64)>, EnvError> {
    let mut joint: Vec<(Vec<Vec<RentalBid>>, f64)> = vec![(Vec::new(), 1.0)];
    for station in 1..=scenario.stations {
        let cell = cell_realizations(scenario, station, time)?;
        let mut next = Vec::with_capacity(joint.len() * cell.len());
        for (prefix, p) in &joint {
            for (bids, q) in &cell {
                let mut stations = prefix.clone();
                stations.push(bids.clone());
                next.push((stations, p * q));
            }
        }
        joint = next;
        if joint.len() > REALIZATION_LIMIT {
            return Err(EnvError::Export(format!(
                "time {time} has more than {REALIZATION_LIMIT} joint bid realizations"
            )));
        }
    }
    Ok(joint)
}

/// Exhaustively converts a micro scenario into an explicit table model.
///
/// States are reachable canonical fleet states in discovery order, with the
/// single END state last; action `a` at a state is the `a`-th nominal
/// decision in sorted order. Rewards are exact expectations over the bid
/// realizations; transition rows are exact probabilities.
pub fn export_explicit(scenario: &Scenario) -> Result<ExplicitCmdp, EnvError> {
    scenario.validate().map_err(|e| EnvError::Export(e.to_string()))?;
    if !scenario.canonicalize {
        return Err(EnvError::Export(
            "explicit export requires canonical states; enable canonicalize".into(),
        ));
    }
    let realizations_by_time: Vec<Vec<(Vec<Vec<RentalBid>>, f64)>> = (0..scenario.horizon)
        .map(|t| joint_realizations(scenario, t))
        .collect::<Result<_, _>>()?;

    // The shuffle inside execution permutes identical vehicles only; any
    // stream yields the same canonical successor.
    let mut scratch_rng = RngStream::new(0, 0);

    let initial = scenario.initial_fleet_state();
    let mut index_of: BTreeMap<FleetState, usize> = BTreeMap::new();
    index_of.insert(initial.clone(), 0);
    let mut states = vec![initial];
    let mut rows: Vec<Vec<(f64, f64, BTreeMap<FleetState, f64>)>> = Vec::new();
    let mut cursor = 0usize;
    while cursor < states.len() {
        let state = states[cursor].clone();
        cursor += 1;
        let decisions = nominal_decisions(&state, scenario)?;
        let mut state_rows = Vec::with_capacity(decisions.len());
        for decision in &decisions {
            let mut reward = 0.0;
            let mut cost = 0.0;
            let mut transitions: BTreeMap<FleetState, f64> = BTreeMap::new();
            for (bids, p) in &realizations_by_time[state.k] {
                let (next, r, d) =
                    env_step_capped(scenario, &state, decision, bids, &mut scratch_rng);
                reward += p * r;
                cost = d;
                *transitions.entry(next).or_insert(0.0) += p;
            }
            for next in transitions.keys() {
                if next.k < scenario.horizon && !index_of.contains_key(next) {
                    index_of.insert(next.clone(), states.len());
                    states.push(next.clone());
                    if states.len() > STATE_LIMIT {
                        return Err(EnvError::Export(format!(
                            "more than {STATE_LIMIT} reachable states"
                        )));
                    }
                }
            }
            state_rows.push((reward, cost, transitions));
        }
        rows.push(state_rows);
    }

    let end_id = states.len();
    let mut builder = ModelBuilder::new(end_id + 1, 0, scenario.horizon).absorbing(end_id);
    for (x, state_rows) in rows.iter().enumerate() {
        for (a, (reward, cost, transitions)) in state_rows.iter().enumerate() {
            let mut sparse: Vec<(usize, f64)> = transitions
                .iter()
                .map(|(next, &p)| {
                    let id = if next.k >= scenario.horizon { end_id } else { index_of[next] };
                    (id, p)
                })
                .collect();
            // Transition keys can collapse onto END; merge and renormalize
            // the last entry so rows are exactly stochastic.
            sparse.sort_unstable_by_key(|&(id, _)| id);
            sparse.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            let sum_except_last: f64 = sparse[..sparse.len() - 1].iter().map(|e| e.1).sum();
            let last = sparse.len() - 1;
            sparse[last].1 = 1.0 - sum_except_last;
            builder = builder.action(x, a, *reward, *cost, sparse);
        }
    }
    builder
        .build()
        .map_err(|e| EnvError::Export(format!("exported model failed validation: {e:?}")))
}
