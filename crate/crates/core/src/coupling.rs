//! The state bijection between the ring automaton and the multiclass
//! network, and coupled runs of both chains (and of the two ring variants)
//! on one shared uniform field.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ParameterSetting;
use crate::randomness::UniformField;
use crate::sim_mcn::{McnSimulator, McnState};
use crate::sim_ring::{RingModel, RingSimulator, RingState};

/// `(Q_i, C_i) -> (Q_i, 1{C_i = 1}, ..., 1{C_i = L})` at every station.
pub fn forward(state: &RingState) -> McnState {
    let l = state.ring_size();
    let mut counts = vec![0u64; l * (l + 1)];
    for station in 0..l {
        counts[station * (l + 1)] = state.queues[station];
        if let Some(ty) = state.cells[station] {
            counts[station * (l + 1) + ty + 1] = 1;
        }
    }
    McnState::new(l, counts).expect("one vehicle per cell maps to at most one ring customer")
}

/// `(Q_i0, Q_i1, ..., Q_iL) -> (Q_i0, sum_j j Q_ij)`.
pub fn inverse(state: &McnState) -> RingState {
    let l = state.ring_size();
    RingState {
        cells: (0..l).map(|s| state.ring_occupant(s)).collect(),
        queues: (0..l).map(|s| state.entry_queue(s)).collect(),
    }
}

fn corresponds(ring: &RingState, network: &McnState) -> bool {
    let l = ring.ring_size();
    network.ring_size() == l
        && (0..l).all(|s| {
            network.entry_queue(s) == ring.queues[s]
                && (0..l).all(|ty| network.get(s, ty + 1) == u64::from(ring.cells[s] == Some(ty)))
        })
}

/// Full states around the first mismatch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub t: u64,
    pub ring_state: RingState,
    pub mapped_ring_state: McnState,
    pub network_state: McnState,
    /// States one step earlier, when `t > 0`.
    pub previous_ring_state: Option<RingState>,
    pub previous_network_state: Option<McnState>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub passed: bool,
    pub seed: u64,
    pub horizon: u64,
    /// Number of time points compared (including `t = 0`).
    pub steps_checked: u64,
    pub divergence: Option<Divergence>,
}

/// Runs both chains from `(initial, forward(initial))` and compares
/// `forward(X1(t))` with `X2(t)` at every `t <= horizon`.
pub fn coupled_run(
    initial: &RingState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    horizon: u64,
) -> Result<CouplingReport> {
    coupled_run_from(initial, &forward(initial), ps, field, horizon)
}

/// Like [`coupled_run`] but with an arbitrary network initial state.
pub fn coupled_run_from(
    ring_initial: &RingState,
    network_initial: &McnState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    horizon: u64,
) -> Result<CouplingReport> {
    ring_initial.validate(ps.ring_size())?;
    let mut ring = RingSimulator::new(RingModel::Current, ring_initial.clone(), ps, *field)?;
    let mut network = McnSimulator::new(network_initial.clone(), ps, *field)?;
    let mut previous_ring = ring.state().clone();
    let mut previous_network = network.state().clone();
    loop {
        let t = ring.time();
        if !corresponds(ring.state(), network.state()) {
            let (previous_ring_state, previous_network_state) = if t > 0 {
                (Some(previous_ring), Some(previous_network))
            } else {
                (None, None)
            };
            return Ok(CouplingReport {
                passed: false,
                seed: field.seed(),
                horizon,
                steps_checked: t + 1,
                divergence: Some(Divergence {
                    t,
                    ring_state: ring.state().clone(),
                    mapped_ring_state: forward(ring.state()),
                    network_state: network.state().clone(),
                    previous_ring_state,
                    previous_network_state,
                }),
            });
        }
        if t == horizon {
            return Ok(CouplingReport {
                passed: true,
                seed: field.seed(),
                horizon,
                steps_checked: horizon + 1,
                divergence: None,
            });
        }
        previous_ring.clone_from(ring.state());
        previous_network.clone_from(network.state());
        ring.advance();
        network.advance();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegacyViolation {
    pub t: u64,
    pub current: RingState,
    pub legacy: RingState,
    /// `1{U_i0(t) <= p_i}` per queue.
    pub expected_gaps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegacyCouplingReport {
    pub passed: bool,
    pub seed: u64,
    pub horizon: u64,
    /// Largest observed `Q1_i(t) - Q~_i(t)`.
    pub max_queue_gap: u64,
    pub violation: Option<LegacyViolation>,
}

fn arrival_indicators(ps: &ParameterSetting<f64>, field: &UniformField, t: u64) -> Vec<u64> {
    (0..ps.ring_size())
        .map(|i| u64::from(field.arrival(i, t) <= *ps.arrival(i)))
        .collect()
}

/// Couples the legacy chain started in `initial_legacy` with the current
/// chain started in `Q1(0) = Q~(0) + 1{U_i0(0) <= p_i}`, same cells, and
/// checks `Q1(t) - Q~(t) = 1{U_i0(t) <= p_i}` with identical cells at every
/// `t <= horizon`.
pub fn legacy_coupled_run(
    initial_legacy: &RingState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    horizon: u64,
) -> Result<LegacyCouplingReport> {
    initial_legacy.validate(ps.ring_size())?;
    let offsets = arrival_indicators(ps, field, 0);
    let initial_current = RingState {
        cells: initial_legacy.cells.clone(),
        queues: initial_legacy
            .queues
            .iter()
            .zip(&offsets)
            .map(|(q, a)| q.checked_add(*a).ok_or_else(|| Error::InvalidState("queue overflow".into())))
            .collect::<Result<_>>()?,
    };
    let mut current = RingSimulator::new(RingModel::Current, initial_current, ps, *field)?;
    let mut legacy = RingSimulator::new(RingModel::Legacy, initial_legacy.clone(), ps, *field)?;
    let mut max_queue_gap = 0;
    loop {
        let t = current.time();
        let expected = arrival_indicators(ps, field, t);
        let (a, b) = (current.state(), legacy.state());
        let holds = a.cells == b.cells
            && a.queues.iter().zip(&b.queues).zip(&expected).all(|((x, y), e)| x.checked_sub(*y) == Some(*e));
        if !holds {
            return Ok(LegacyCouplingReport {
                passed: false,
                seed: field.seed(),
                horizon,
                max_queue_gap,
                violation: Some(LegacyViolation {
                    t,
                    current: a.clone(),
                    legacy: b.clone(),
                    expected_gaps: expected,
                }),
            });
        }
        max_queue_gap = max_queue_gap.max(expected.iter().copied().max().unwrap_or(0));
        if t == horizon {
            return Ok(LegacyCouplingReport {
                passed: true,
                seed: field.seed(),
                horizon,
                max_queue_gap,
                violation: None,
            });
        }
        current.advance();
        legacy.advance();
    }
}
