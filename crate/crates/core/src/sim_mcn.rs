//! Exact simulation of the multiclass network chain with full bookkeeping of
//! arrivals `A`, service completions `T`, routing `Phi` and idleness `I`,
//! plus an integer audit of the six queueing equations.
//!
//! Station `i` serves one customer per step. Ring classes `(i, j)`, `j >= 1`,
//! have priority over the entry class `(i, 0)`; at most one ring customer is
//! present at a station at any time. A served entry customer becomes class
//! `(i + 1, i)`. A served ring customer of type `j` leaves when
//! `U_ij(t) <= q_ij` and otherwise becomes class `(i + 1, j)`. Exogenous
//! arrivals to `(i, 0)` use `U_i0(t + 1)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::ClassSpace;
use crate::params::ParameterSetting;
use crate::randomness::UniformField;

/// Class queue lengths, flat in the [`ClassSpace`] layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct McnState {
    ring_size: usize,
    counts: Vec<u64>,
}

impl McnState {
    pub fn empty(ring_size: usize) -> Self {
        Self {
            ring_size,
            counts: vec![0; ClassSpace::new(ring_size).len()],
        }
    }

    /// Builds a state from flat counts, rejecting stations that hold more
    /// than one ring customer.
    pub fn new(ring_size: usize, counts: Vec<u64>) -> Result<Self> {
        let space = ClassSpace::new(ring_size);
        if counts.len() != space.len() {
            return Err(Error::Dimension {
                what: "class queue vector".into(),
                expected: space.len(),
                found: counts.len(),
            });
        }
        for (station, row) in counts.chunks(space.columns()).enumerate() {
            let ring: u64 = row[1..].iter().sum();
            if ring > 1 {
                return Err(Error::InvalidState(format!(
                    "station {} holds {ring} ring customers",
                    station + 1
                )));
            }
        }
        Ok(Self { ring_size, counts })
    }

    /// Builds a state from an `L x (L + 1)` matrix.
    pub fn from_matrix(rows: Vec<Vec<u64>>) -> Result<Self> {
        let l = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != l + 1) {
            return Err(Error::Dimension {
                what: "class queue row".into(),
                expected: l + 1,
                found: bad.len(),
            });
        }
        Self::new(l, rows.concat())
    }

    pub fn ring_size(&self) -> usize {
        self.ring_size
    }

    pub fn space(&self) -> ClassSpace {
        ClassSpace::new(self.ring_size)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, station: usize, column: usize) -> u64 {
        self.counts[station * (self.ring_size + 1) + column]
    }

    pub fn entry_queue(&self, station: usize) -> u64 {
        self.get(station, 0)
    }

    /// Type of the ring customer at `station`, if any.
    pub fn ring_occupant(&self, station: usize) -> Option<usize> {
        let width = self.ring_size + 1;
        self.counts[station * width + 1..(station + 1) * width]
            .iter()
            .position(|&c| c > 0)
    }

    pub fn to_matrix(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.ring_size + 1)
            .map(<[u64]>::to_vec)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

impl Serialize for McnState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_matrix().serialize(serializer)
    }
}

/// Increments of the primitive processes over one step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct StepDelta {
    /// Exogenous arrivals to each entry class `(i, 0)`.
    pub arrivals: Vec<u64>,
    /// Service completions per class.
    pub completions: Vec<u64>,
    /// `(source class, target class)` for every served customer that stays.
    pub routes: Vec<(usize, usize)>,
}

impl StepDelta {
    pub fn zero(ring_size: usize) -> Self {
        Self {
            arrivals: vec![0; ring_size],
            completions: vec![0; ClassSpace::new(ring_size).len()],
            routes: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.arrivals.iter_mut().for_each(|a| *a = 0);
        self.completions.iter_mut().for_each(|c| *c = 0);
        self.routes.clear();
    }
}

fn step_into(
    state: &McnState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    t: u64,
    next: &mut McnState,
    delta: &mut StepDelta,
) {
    let space = state.space();
    let l = state.ring_size;
    delta.clear();
    next.counts.copy_from_slice(&state.counts);
    for station in 0..l {
        let served = match state.ring_occupant(station) {
            Some(ty) => {
                let class = space.ring(station, ty);
                let stays = field.departure(station, ty, t) > *ps.departure(station, ty);
                Some((class, stays))
            }
            None if state.entry_queue(station) > 0 => Some((space.entry(station), true)),
            None => None,
        };
        if let Some((class, stays)) = served {
            next.counts[class] -= 1;
            delta.completions[class] += 1;
            if stays {
                let target = space.successor(class);
                next.counts[target] += 1;
                delta.routes.push((class, target));
            }
        }
        if field.arrival(station, t + 1) <= *ps.arrival(station) {
            next.counts[space.entry(station)] += 1;
            delta.arrivals[station] += 1;
        }
    }
}

/// One step from time `t` to `t + 1`.
pub fn step_mcn(
    state: &McnState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    t: u64,
) -> (McnState, StepDelta) {
    let mut next = state.clone();
    let mut delta = StepDelta::zero(state.ring_size);
    step_into(state, ps, field, t, &mut next, &mut delta);
    (next, delta)
}

/// In-place stepper that reuses its buffers.
#[derive(Debug, Clone)]
pub struct McnSimulator<'a> {
    ps: &'a ParameterSetting<f64>,
    field: UniformField,
    state: McnState,
    scratch: McnState,
    delta: StepDelta,
    time: u64,
}

impl<'a> McnSimulator<'a> {
    pub fn new(initial: McnState, ps: &'a ParameterSetting<f64>, field: UniformField) -> Result<Self> {
        if initial.ring_size != ps.ring_size() {
            return Err(Error::Dimension {
                what: "network state".into(),
                expected: ps.ring_size(),
                found: initial.ring_size,
            });
        }
        Ok(Self {
            ps,
            field,
            scratch: initial.clone(),
            delta: StepDelta::zero(initial.ring_size),
            state: initial,
            time: 0,
        })
    }

    pub fn state(&self) -> &McnState {
        &self.state
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Advances one step and returns the increments it produced.
    pub fn advance(&mut self) -> &StepDelta {
        step_into(
            &self.state,
            self.ps,
            &self.field,
            self.time,
            &mut self.scratch,
            &mut self.delta,
        );
        std::mem::swap(&mut self.state, &mut self.scratch);
        self.time += 1;
        &self.delta
    }
}

/// Cumulative primitive processes at the current time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bookkeeping {
    /// `A`: exogenous arrivals per class (zero on ring classes).
    pub arrivals: Vec<u64>,
    /// `T`: service completions per class.
    pub completions: Vec<u64>,
    /// `Phi[source * K + target]`: routed customers.
    pub routing: Vec<u64>,
    /// `I`: idle time per station.
    pub idle: Vec<u64>,
    /// `I0`: time per station not spent on ring classes.
    pub entry_available: Vec<u64>,
    pub time: u64,
}

impl Bookkeeping {
    pub fn new(ring_size: usize) -> Self {
        let k = ClassSpace::new(ring_size).len();
        Self {
            arrivals: vec![0; k],
            completions: vec![0; k],
            routing: vec![0; k * k],
            idle: vec![0; ring_size],
            entry_available: vec![0; ring_size],
            time: 0,
        }
    }

    /// Adds one step of increments. Returns an error on counter overflow.
    pub fn apply(&mut self, delta: &StepDelta) -> Result<()> {
        let l = self.idle.len();
        let space = ClassSpace::new(l);
        let k = space.len();
        let overflow = || Error::InvalidState("bookkeeping counter overflow".into());
        for (station, &a) in delta.arrivals.iter().enumerate() {
            let slot = &mut self.arrivals[space.entry(station)];
            *slot = slot.checked_add(a).ok_or_else(overflow)?;
        }
        for (slot, &c) in self.completions.iter_mut().zip(&delta.completions) {
            *slot = slot.checked_add(c).ok_or_else(overflow)?;
        }
        for &(source, target) in &delta.routes {
            let slot = &mut self.routing[source * k + target];
            *slot = slot.checked_add(1).ok_or_else(overflow)?;
        }
        for station in 0..l {
            let row = &delta.completions[space.entry(station)..space.entry(station) + space.columns()];
            let busy: u64 = row.iter().sum();
            let ring: u64 = row[1..].iter().sum();
            self.idle[station] += 1u64.saturating_sub(busy);
            self.entry_available[station] += 1u64.saturating_sub(ring);
        }
        self.time += 1;
        Ok(())
    }

    /// Net routed inflow into every class, `sum_source Phi[source][target]`.
    pub fn routed_inflow(&self) -> Vec<u64> {
        let k = self.completions.len();
        (0..k)
            .map(|target| (0..k).map(|source| self.routing[source * k + target]).sum())
            .collect()
    }
}

/// A recorded network path: `states[t]` for `t = 0..=horizon` and the
/// increments `deltas[t]` leading from `states[t]` to `states[t + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct McnPath {
    pub states: Vec<McnState>,
    pub deltas: Vec<StepDelta>,
}

impl McnPath {
    pub fn horizon(&self) -> usize {
        self.deltas.len()
    }

    pub fn bookkeeping(&self) -> Result<Bookkeeping> {
        let mut book = Bookkeeping::new(self.states[0].ring_size);
        for delta in &self.deltas {
            book.apply(delta)?;
        }
        Ok(book)
    }

    /// CSV with columns `t, Q_(1,0), ..., Q_(L,L)`.
    pub fn to_csv(&self) -> String {
        let space = self.states[0].space();
        let mut out = String::from("t");
        for class in 0..space.len() {
            out.push_str(&format!(",Q_{}", space.label(class)));
        }
        out.push('\n');
        for (t, state) in self.states.iter().enumerate() {
            out.push_str(&t.to_string());
            for c in state.counts() {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn simulate_mcn(
    initial: McnState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    horizon: u64,
) -> Result<McnPath> {
    let mut sim = McnSimulator::new(initial, ps, *field)?;
    let mut states = vec![sim.state().clone()];
    let mut deltas = Vec::new();
    for _ in 0..horizon {
        deltas.push(sim.advance().clone());
        states.push(sim.state().clone());
    }
    Ok(McnPath { states, deltas })
}

/// Outcome of one queueing equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquationCheck {
    pub equation: u8,
    pub passed: bool,
    /// Time index of the first violation.
    pub first_violation: Option<u64>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub steps: u64,
    pub checks: Vec<EquationCheck>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, equation: u8) -> &EquationCheck {
        &self.checks[usize::from(equation) - 1]
    }
}

/// Streaming auditor for the six queueing equations. Feed it the increments
/// and resulting state of each step in order.
#[derive(Debug, Clone)]
pub struct Auditor {
    space: ClassSpace,
    initial: Vec<i128>,
    current: Vec<i128>,
    arrivals: Vec<i128>,
    completions: Vec<i128>,
    inflow: Vec<i128>,
    routed_out: Vec<i128>,
    time: u64,
    violations: [Option<(u64, String)>; 6],
}

impl Auditor {
    pub fn new(initial: &McnState) -> Self {
        let space = initial.space();
        let k = space.len();
        let q: Vec<i128> = initial.counts.iter().map(|&c| i128::from(c)).collect();
        Self {
            space,
            initial: q.clone(),
            current: q,
            arrivals: vec![0; k],
            completions: vec![0; k],
            inflow: vec![0; k],
            routed_out: vec![0; k],
            time: 0,
            violations: Default::default(),
        }
    }

    fn flag(&mut self, equation: usize, detail: impl FnOnce() -> String) {
        if self.violations[equation - 1].is_none() {
            self.violations[equation - 1] = Some((self.time, detail()));
        }
    }

    /// Records the step from the current time `t` to `t + 1`.
    pub fn observe(&mut self, delta: &StepDelta, next: &McnState) {
        let space = self.space;
        let k = space.len();
        let t = self.time;
        // (3): completions increase by at most one per class
        for class in 0..k {
            if delta.completions[class] > 1 {
                self.flag(3, || format!("class {} served {} times at t={t}", space.label(class), delta.completions[class]));
            }
        }
        // (4), (5), (6) use the state at t and the idleness increment over [t, t+1)
        for station in 0..space.ring_size() {
            let base = space.entry(station);
            let row = &delta.completions[base..base + space.columns()];
            let busy: i128 = row.iter().map(|&c| i128::from(c)).sum();
            let ring_busy: i128 = row[1..].iter().map(|&c| i128::from(c)).sum();
            let d_idle = 1 - busy;
            let d_entry = 1 - ring_busy;
            if d_idle < 0 {
                self.flag(4, || format!("station {} idle time decreased at t={t}", station + 1));
            }
            let queued: i128 = self.current[base..base + space.columns()].iter().sum();
            if queued * d_idle != 0 {
                self.flag(5, || {
                    format!("station {} idle with {queued} customers at t={t}", station + 1)
                });
            }
            let priority: i128 = self.current[base + 1..base + space.columns()].iter().sum();
            if priority * d_entry != 0 {
                self.flag(6, || {
                    format!(
                        "station {} gave time to its entry class with a ring customer present at t={t}",
                        station + 1
                    )
                });
            }
        }
        for station in 0..space.ring_size() {
            self.arrivals[space.entry(station)] += i128::from(delta.arrivals[station]);
        }
        for class in 0..k {
            self.completions[class] += i128::from(delta.completions[class]);
        }
        for &(source, target) in &delta.routes {
            self.inflow[target] += 1;
            self.routed_out[source] += 1;
        }
        self.time += 1;
        let t = self.time;
        for class in 0..k {
            let observed = i128::from(next.counts[class]);
            // (1): balance, with at most one routing per completion
            let balance = self.initial[class] + self.arrivals[class] + self.inflow[class]
                - self.completions[class];
            if balance != observed || self.routed_out[class] > self.completions[class] {
                self.flag(1, || {
                    format!(
                        "class {} at t={t}: balance gives {balance}, state has {observed}",
                        space.label(class)
                    )
                });
            }
            // (2): non-negative with unit increments
            let before = self.current[class];
            if observed < 0 || (observed - before).abs() > 1 {
                self.flag(2, || {
                    format!(
                        "class {} moved from {before} to {observed} at t={t}",
                        space.label(class)
                    )
                });
            }
            self.current[class] = observed;
        }
    }

    pub fn report(&self) -> AuditReport {
        AuditReport {
            steps: self.time,
            checks: self
                .violations
                .iter()
                .enumerate()
                .map(|(idx, v)| EquationCheck {
                    equation: idx as u8 + 1,
                    passed: v.is_none(),
                    first_violation: v.as_ref().map(|(t, _)| *t),
                    detail: v.as_ref().map(|(_, d)| d.clone()),
                })
                .collect(),
        }
    }
}

/// Audits a recorded path.
pub fn audit(path: &McnPath) -> AuditReport {
    let mut auditor = Auditor::new(&path.states[0]);
    for (delta, next) in path.deltas.iter().zip(&path.states[1..]) {
        auditor.observe(delta, next);
    }
    auditor.report()
}

/// Simulates and audits without storing the path.
pub fn simulate_audited(
    initial: McnState,
    ps: &ParameterSetting<f64>,
    field: &UniformField,
    horizon: u64,
) -> Result<(McnState, AuditReport)> {
    let mut auditor = Auditor::new(&initial);
    let mut sim = McnSimulator::new(initial, ps, *field)?;
    for _ in 0..horizon {
        sim.advance();
        let (delta, state) = (&sim.delta, &sim.state);
        auditor.observe(delta, state);
    }
    Ok((sim.state().clone(), auditor.report()))
}
