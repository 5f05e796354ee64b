//! Exact simulation of the ring cellular automaton.
//!
//! At every step, independently for each cell `i` (with `i + 1` read modulo
//! the ring size):
//!
//! ```text
//! Q_i(t+1)     = Q_i(t) - 1{Q_i(t) > 0} 1{C_i(t) = 0} + 1{U_i0(t+1) <= p_i}
//! C_{i+1}(t+1) = i 1{Q_i(t) > 0} 1{C_i(t) = 0}
//!              + sum_j j 1{C_i(t) = j} 1{U_ij(t) > q_ij}
//! ```
//!
//! The legacy variant lets a vehicle arriving to an empty queue in front of an
//! empty cell enter the ring in the same step, and draws arrivals from
//! `U_i0(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParameterSetting;
use crate::randomness::UniformField;
use crate::stats::least_squares_slope;

/// Cells (`None` = empty, `Some(j)` = type-`j` vehicle) and queue lengths.
///
/// Serialized with cell labels in `0..=L`: 0 for an empty cell and `j + 1`
/// for a type-`j` vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "LabelledState", try_from = "LabelledState")]
pub struct RingState {
    pub cells: Vec<Option<usize>>,
    pub queues: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct LabelledState {
    cells: Vec<usize>,
    queues: Vec<u64>,
}

impl From<RingState> for LabelledState {
    fn from(state: RingState) -> Self {
        Self {
            cells: (0..state.ring_size()).map(|c| state.cell_label(c)).collect(),
            queues: state.queues,
        }
    }
}

impl TryFrom<LabelledState> for RingState {
    type Error = Error;

    fn try_from(doc: LabelledState) -> Result<Self> {
        let cells = doc.cells.iter().map(|&label| label.checked_sub(1)).collect();
        RingState::new(cells, doc.queues)
    }
}

impl RingState {
    pub fn empty(ring_size: usize) -> Self {
        Self {
            cells: vec![None; ring_size],
            queues: vec![0; ring_size],
        }
    }

    pub fn new(cells: Vec<Option<usize>>, queues: Vec<u64>) -> Result<Self> {
        let state = Self { cells, queues };
        state.validate(state.cells.len())?;
        Ok(state)
    }

    /// Queues only, empty ring.
    pub fn with_queues(queues: Vec<u64>) -> Self {
        Self {
            cells: vec![None; queues.len()],
            queues,
        }
    }

    pub fn ring_size(&self) -> usize {
        self.cells.len()
    }

    pub fn validate(&self, ring_size: usize) -> Result<()> {
        if self.cells.len() != ring_size || self.queues.len() != ring_size {
            return Err(Error::Dimension {
                what: "ring state".into(),
                expected: ring_size,
                found: self.cells.len().max(self.queues.len()),
            });
        }
        if let Some(ty) = self.cells.iter().flatten().find(|&&ty| ty >= ring_size) {
            return Err(Error::InvalidState(format!(
                "cell holds vehicle type {} on a ring of {ring_size} cells",
                ty + 1
            )));
        }
        Ok(())
    }

    /// Cell state as a label in `0..=L` (0 = empty, `j + 1` = type `j`).
    pub fn cell_label(&self, cell: usize) -> usize {
        self.cells[cell].map_or(0, |ty| ty + 1)
    }

    pub fn total_queue(&self) -> u64 {
        self.queues.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RingModel {
    /// Arrivals wait at least one step in the queue.
    Current,
    /// Arrivals to an empty queue in front of an empty cell enter at once.
    Legacy,
}

/// Per-cell event counts of a single step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct StepEvents {
    arrival: bool,
    entry: bool,
    departure: bool,
}

#[inline]
fn step_cell(
    model: RingModel,
    state: &RingState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    t: u64,
    cell: usize,
    next: &mut RingState,
) -> StepEvents {
    let l = state.ring_size();
    let downstream = (cell + 1) % l;
    let queue = state.queues[cell];
    let p = *ps.arrival(cell);
    let mut events = StepEvents::default();
    let mut moved = None;
    match state.cells[cell] {
        Some(ty) => {
            if field.departure(cell, ty, t) > *ps.departure(cell, ty) {
                moved = Some(ty);
            } else {
                events.departure = true;
            }
        }
        None if queue > 0 => {
            moved = Some(cell);
            events.entry = true;
        }
        None => {}
    }
    let next_queue = match model {
        RingModel::Current => {
            events.arrival = field.arrival(cell, t + 1) <= p;
            queue - u64::from(events.entry) + u64::from(events.arrival)
        }
        RingModel::Legacy => {
            events.arrival = field.arrival(cell, t) <= p;
            let occupied = state.cells[cell].is_some();
            if !occupied && queue == 0 && events.arrival {
                // bypasses the queue
                moved = Some(cell);
                events.entry = true;
                0
            } else if !occupied && queue > 0 {
                queue - u64::from(!events.arrival)
            } else {
                queue + u64::from(occupied && events.arrival)
            }
        }
    };
    next.queues[cell] = next_queue;
    next.cells[downstream] = moved;
    events
}

fn step_model(
    model: RingModel,
    state: &RingState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    t: u64,
    next: &mut RingState,
) {
    for cell in 0..state.ring_size() {
        step_cell(model, state, ps, field, t, cell, next);
    }
}

/// One step of the current model, from time `t` to `t + 1`.
pub fn step(state: &RingState, ps: &ParameterSetting<f64>, field: &UniformField, t: u64) -> RingState {
    let mut next = state.clone();
    step_model(RingModel::Current, state, ps, field, t, &mut next);
    next
}

/// One step of the legacy model, from time `t` to `t + 1`.
pub fn step_legacy(
    state: &RingState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    t: u64,
) -> RingState {
    let mut next = state.clone();
    step_model(RingModel::Legacy, state, ps, field, t, &mut next);
    next
}

/// In-place stepper for long runs.
#[derive(Debug, Clone)]
pub struct RingSimulator<'a> {
    model: RingModel,
    ps: &'a ParameterSetting<f64>,
    field: UniformField,
    state: RingState,
    scratch: RingState,
    time: u64,
}

impl<'a> RingSimulator<'a> {
    pub fn new(
        model: RingModel,
        initial: RingState,
        ps: &'a ParameterSetting<f64>,
        field: UniformField,
    ) -> Result<Self> {
        initial.validate(ps.ring_size())?;
        Ok(Self {
            model,
            ps,
            field,
            scratch: initial.clone(),
            state: initial,
            time: 0,
        })
    }

    pub fn state(&self) -> &RingState {
        &self.state
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Advances one step; per-cell events are reported through `on_event`.
    fn advance_with(&mut self, mut on_event: impl FnMut(usize, StepEvents)) {
        for cell in 0..self.state.ring_size() {
            let events = step_cell(
                self.model,
                &self.state,
                self.ps,
                &self.field,
                self.time,
                cell,
                &mut self.scratch,
            );
            on_event(cell, events);
        }
        std::mem::swap(&mut self.state, &mut self.scratch);
        self.time += 1;
    }

    pub fn advance(&mut self) -> &RingState {
        self.advance_with(|_, _| {});
        &self.state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: u64,
    pub state: RingState,
    /// `occupancy[i * (L + 1) + j]`: number of times `s < t` at which cell `i`
    /// had label `j`.
    pub occupancy: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub model: RingModel,
    pub horizon: u64,
    pub record_every: u64,
    /// Snapshots at `t = 0`, every multiple of `record_every`, and `horizon`.
    pub snapshots: Vec<Snapshot>,
    pub arrivals: Vec<u64>,
    /// Vehicles moving from queue `i` onto the ring.
    pub entries: Vec<u64>,
    /// Vehicles leaving the ring from cell `i`.
    pub departures: Vec<u64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &RingState {
        &self.snapshots.last().expect("at least the initial snapshot").state
    }

    /// CSV with columns `t, Q_1..Q_L, C_1..C_L` at the recorded stride.
    pub fn to_csv(&self) -> String {
        let l = self.final_state().ring_size();
        let mut out = String::from("t");
        for i in 1..=l {
            out.push_str(&format!(",Q_{i}"));
        }
        for i in 1..=l {
            out.push_str(&format!(",C_{i}"));
        }
        out.push('\n');
        for snap in &self.snapshots {
            out.push_str(&snap.t.to_string());
            for q in &snap.state.queues {
                out.push_str(&format!(",{q}"));
            }
            for cell in 0..l {
                out.push_str(&format!(",{}", snap.state.cell_label(cell)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn run(
    initial: RingState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    horizon: u64,
    record_every: u64,
) -> Result<Trajectory> {
    run_model(RingModel::Current, initial, ps, field, horizon, record_every)
}

pub fn run_model(
    model: RingModel,
    initial: RingState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    horizon: u64,
    record_every: u64,
) -> Result<Trajectory> {
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be positive".into()));
    }
    let l = ps.ring_size();
    let width = l + 1;
    let mut sim = RingSimulator::new(model, initial, ps, *field)?;
    let mut occupancy = vec![0u64; l * width];
    let mut arrivals = vec![0u64; l];
    let mut entries = vec![0u64; l];
    let mut departures = vec![0u64; l];
    let mut snapshots = vec![Snapshot {
        t: 0,
        state: sim.state().clone(),
        occupancy: occupancy.clone(),
    }];
    while sim.time() < horizon {
        for (cell, label) in sim.state.cells.iter().enumerate() {
            occupancy[cell * width + label.map_or(0, |ty| ty + 1)] += 1;
        }
        sim.advance_with(|cell, events| {
            arrivals[cell] += u64::from(events.arrival);
            entries[cell] += u64::from(events.entry);
            departures[cell] += u64::from(events.departure);
        });
        let t = sim.time();
        if t % record_every == 0 || t == horizon {
            snapshots.push(Snapshot {
                t,
                state: sim.state().clone(),
                occupancy: occupancy.clone(),
            });
        }
    }
    Ok(Trajectory {
        model,
        horizon,
        record_every,
        snapshots,
        arrivals,
        entries,
        departures,
    })
}

/// Long-run fraction of time each cell spends in each state, over the steps
/// from the first snapshot at or after `burn_in` up to the horizon.
pub fn estimate_marginals(traj: &Trajectory, burn_in: u64) -> Result<Vec<Vec<f64>>> {
    if traj.horizon <= burn_in {
        return Err(Error::HorizonTooShort {
            needed: burn_in + 1,
            available: traj.horizon,
        });
    }
    let start = traj
        .snapshots
        .iter()
        .find(|s| s.t >= burn_in)
        .expect("final snapshot is at the horizon");
    let end = traj.snapshots.last().expect("non-empty");
    let span = (end.t - start.t) as f64;
    let width = start.state.ring_size() + 1;
    Ok(end
        .occupancy
        .chunks(width)
        .zip(start.occupancy.chunks(width))
        .map(|(hi, lo)| hi.iter().zip(lo).map(|(a, b)| (a - b) as f64 / span).collect())
        .collect())
}

/// Least-squares slope of each queue length against time, over the recorded
/// snapshots within the last `window` steps.
pub fn queue_growth_slopes(traj: &Trajectory, window: u64) -> Result<Vec<f64>> {
    if window > traj.horizon {
        return Err(Error::HorizonTooShort {
            needed: window,
            available: traj.horizon,
        });
    }
    let from = traj.horizon - window;
    let used: Vec<&Snapshot> = traj.snapshots.iter().filter(|s| s.t >= from).collect();
    let times: Vec<f64> = used.iter().map(|s| s.t as f64).collect();
    let l = traj.final_state().ring_size();
    Ok((0..l)
        .map(|q| {
            let lengths: Vec<f64> = used.iter().map(|s| s.state.queues[q] as f64).collect();
            least_squares_slope(&times, &lengths)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64, q: f64) -> ParameterSetting<f64> {
        ParameterSetting::new(vec![p], vec![vec![q]]).unwrap()
    }

    /// First time index at which the arrival draw of `cell` fails/succeeds.
    fn find_time(field: &UniformField, cell: usize, p: f64, want_arrival: bool) -> u64 {
        (0..).find(|&t| (field.arrival(cell, t) <= p) == want_arrival).unwrap()
    }

    #[test]
    fn states_serialize_with_labels() {
        let state = RingState::new(vec![Some(1), None, Some(0)], vec![4, 0, 1]).unwrap();
        let json = serde_json::to_string(&state).unwrap();
        assert_eq!(json, r#"{"cells":[2,0,1],"queues":[4,0,1]}"#);
        assert_eq!(serde_json::from_str::<RingState>(&json).unwrap(), state);
        assert!(serde_json::from_str::<RingState>(r#"{"cells":[3,0],"queues":[0,0]}"#).is_err());
    }

    #[test]
    fn empty_stays_empty_without_arrivals() {
        let ps = ParameterSetting::new(vec![0.0, 0.0], vec![vec![0.5; 2]; 2]).unwrap();
        let field = UniformField::new(3, 2);
        let mut s = RingState::empty(2);
        for t in 0..100 {
            s = step(&s, &ps, &field, t);
            assert_eq!(s, RingState::empty(2));
        }
    }

    #[test]
    fn queued_vehicle_enters_empty_cell() {
        let ps = single(0.3, 0.5);
        let field = UniformField::new(11, 1);
        // U_10(t+1) > p1: no arrival during the step
        let t = (1..).find(|&t| field.arrival(0, t) > 0.3).unwrap() - 1;
        let s = RingState::new(vec![None], vec![1]).unwrap();
        let next = step(&s, &ps, &field, t);
        assert_eq!(next, RingState::new(vec![Some(0)], vec![0]).unwrap());
    }

    #[test]
    fn vehicle_departs_when_draw_is_below_q() {
        let ps = ParameterSetting::new(vec![0.0, 0.0], vec![vec![0.6, 0.6], vec![0.6, 0.6]])
            .unwrap();
        let field = UniformField::new(5, 2);
        let t = (0..).find(|&t| field.departure(0, 0, t) <= 0.6).unwrap();
        let s = RingState::new(vec![Some(0), None], vec![0, 0]).unwrap();
        assert_eq!(step(&s, &ps, &field, t), RingState::empty(2));
        let t = (0..).find(|&t| field.departure(0, 0, t) > 0.6).unwrap();
        assert_eq!(
            step(&s, &ps, &field, t),
            RingState::new(vec![None, Some(0)], vec![0, 0]).unwrap()
        );
    }

    #[test]
    fn legacy_arrival_bypasses_queue() {
        let ps = single(0.4, 0.5);
        let field = UniformField::new(2, 1);
        let t = find_time(&field, 0, 0.4, true);
        let next = step_legacy(&RingState::empty(1), &ps, &field, t);
        assert_eq!(next, RingState::new(vec![Some(0)], vec![0]).unwrap());
        let t = find_time(&field, 0, 0.4, false);
        assert_eq!(step_legacy(&RingState::empty(1), &ps, &field, t), RingState::empty(1));
    }

    #[test]
    fn circulating_vehicle_moves_identically_in_both_variants() {
        let ps = ParameterSetting::new(vec![0.3; 3], vec![vec![0.2; 3]; 3]).unwrap();
        let field = UniformField::new(9, 3);
        let s = RingState::new(vec![Some(2), None, None], vec![0, 4, 0]).unwrap();
        for t in 0..200 {
            if field.departure(0, 2, t) > 0.2 {
                assert_eq!(step(&s, &ps, &field, t).cells[1], Some(2));
                assert_eq!(step_legacy(&s, &ps, &field, t).cells[1], Some(2));
            }
        }
    }

    #[test]
    fn zero_horizon_keeps_initial() {
        let ps = single(0.2, 0.5);
        let init = RingState::new(vec![Some(0)], vec![3]).unwrap();
        let traj = run(init.clone(), &ps, &UniformField::new(0, 1), 0, 10).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].state, init);
    }

    #[test]
    fn certain_departure_empties_cell() {
        let ps = single(0.0, 1.0);
        let init = RingState::new(vec![Some(0)], vec![0]).unwrap();
        let traj = run(init, &ps, &UniformField::new(4, 1), 50, 1).unwrap();
        assert!(traj.snapshots[1..].iter().all(|s| s.state == RingState::empty(1)));
        assert_eq!(traj.departures, vec![1]);
    }

    #[test]
    fn zero_load_marginals_and_slopes() {
        let ps = ParameterSetting::new(vec![0.0, 0.0], vec![vec![0.5; 2]; 2]).unwrap();
        let traj = run(RingState::empty(2), &ps, &UniformField::new(1, 2), 1000, 10).unwrap();
        let pi = estimate_marginals(&traj, 100).unwrap();
        assert_eq!(pi, vec![vec![1.0, 0.0, 0.0]; 2]);
        assert_eq!(queue_growth_slopes(&traj, 500).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_cell_occupancy() {
        // occupied fraction b11 p1 = 0.3 / 0.75 = 0.4
        let ps = single(0.3, 0.75);
        let traj = run(RingState::empty(1), &ps, &UniformField::new(8, 1), 400_000, 1000).unwrap();
        let pi = estimate_marginals(&traj, 40_000).unwrap();
        assert!((pi[0][1] - 0.4).abs() < 0.01, "{pi:?}");
        assert!((pi[0][0] + pi[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conservation_of_vehicles() {
        let ps = ParameterSetting::new(
            vec![0.2, 0.1, 0.15],
            vec![vec![0.3, 0.5, 0.2], vec![0.6, 0.2, 0.4], vec![0.5, 0.5, 0.5]],
        )
        .unwrap();
        let init = RingState::new(vec![Some(1), None, Some(0)], vec![2, 0, 5]).unwrap();
        let traj = run(init.clone(), &ps, &UniformField::new(13, 3), 5_000, 5_000).unwrap();
        let fin = traj.final_state();
        let on_ring = |s: &RingState| s.cells.iter().flatten().count() as u64;
        let before = init.total_queue() + on_ring(&init) + traj.arrivals.iter().sum::<u64>();
        let after = fin.total_queue() + on_ring(fin) + traj.departures.iter().sum::<u64>();
        assert_eq!(before, after);
    }

    #[test]
    fn estimators_validate_windows() {
        let ps = single(0.1, 0.5);
        let traj = run(RingState::empty(1), &ps, &UniformField::new(0, 1), 100, 10).unwrap();
        assert!(estimate_marginals(&traj, 100).is_err());
        assert!(queue_growth_slopes(&traj, 101).is_err());
        assert!(run(RingState::empty(1), &ps, &UniformField::new(0, 1), 10, 0).is_err());
    }
}
