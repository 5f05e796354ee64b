//! Slotted-ring local area networks as ring models.
//!
//! A slotted ring has `n` stations and `c` slots circulating past them. A
//! packet arriving at station `r` is destined for station `s` with
//! probability `dest[r][s]`; it waits for an empty slot, rides it and frees
//! it at its destination.
//!
//! With `n <= c` every slot is a cell (`L = c`) and station `s` sits at cell
//! `s`. With `n > c` the ring gets `L = lcm(n, c)` cells, `m = L / c` cells
//! per slot and a station every `k = L / n` cells. The cells between slots
//! are filled by phantom vehicles that never leave, so only one cell in `m`
//! is ever usable. Time runs `m` times faster, so arrival probabilities are
//! `lambda / m` and the stability condition becomes `rho_i < 1 / m`.
//!
//! Destinations become departure probabilities through conditional hazards:
//! a type-`r` vehicle reaching station `s` leaves with probability
//! `dest[r][s] / (1 - mass of the stations passed before s)`, and with
//! probability one once no mass is left.
//!
//! Cell, station and type labels in the public structs are 1-based.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{stability_verdict, visit_matrix, Verdict};
use crate::error::{Error, Result};
use crate::params::{ParameterDocument, ParameterSetting};
use crate::randomness::UniformField;
use crate::scalar::Scalar;
use crate::sim_ring::{RingModel, RingSimulator, RingState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlottedSpec<T> {
    /// Number of stations.
    pub n: usize,
    /// Number of slots.
    pub c: usize,
    /// `lambda_i`: packet arrival probability per slot time at station `i`.
    pub arrival_rates: Vec<T>,
    /// `dest[i][j]`: probability that a packet from station `i` is for `j`.
    pub dest: Vec<Vec<T>>,
}

impl<T: Scalar> SlottedSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSlottedSpec(msg));
        if self.n == 0 || self.c == 0 {
            return bad("need at least one station and one slot".into());
        }
        if self.arrival_rates.len() != self.n {
            return bad(format!("{} arrival rates for {} stations", self.arrival_rates.len(), self.n));
        }
        if self.dest.len() != self.n || self.dest.iter().any(|row| row.len() != self.n) {
            return bad(format!("destination matrix must be {0} x {0}", self.n));
        }
        if let Some(i) = self.arrival_rates.iter().position(|l| *l < T::zero()) {
            return bad(format!("negative arrival rate at station {}", i + 1));
        }
        let tol = T::boundary_tolerance() * T::lit(10.0 * self.n as f64);
        for (i, row) in self.dest.iter().enumerate() {
            if !row[i].is_zero() {
                return bad(format!("station {} sends packets to itself", i + 1));
            }
            if row.iter().any(|d| *d < T::zero() || *d > T::one()) {
                return bad(format!("destination row {} has entries outside [0, 1]", i + 1));
            }
            let total = row.iter().cloned().fold(T::zero(), |a, b| a + b);
            if (total - T::one()).abs() > tol {
                return bad(format!("destination row {} does not sum to 1", i + 1));
            }
        }
        Ok(())
    }
}

/// `sum_k coefficients[k] * lambda_k < bound`, one per station.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauInequality<T> {
    pub station: usize,
    pub cell: usize,
    pub coefficients: Vec<T>,
    pub bound: T,
}

impl<T: Scalar> TauInequality<T> {
    pub fn lhs(&self, lambda: &[T]) -> T {
        self.coefficients
            .iter()
            .zip(lambda)
            .fold(T::zero(), |acc, (a, l)| acc + a.clone() * l.clone())
    }

    pub fn holds(&self, lambda: &[T]) -> bool {
        self.lhs(lambda) < self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlottedMapping<T> {
    pub spec: SlottedSpec<T>,
    pub ps: ParameterSetting<T>,
    pub ring_size: usize,
    /// Cells per slot.
    pub m: usize,
    /// Cells between stations (only meaningful when `n > c`).
    pub k: usize,
    /// Cell of each station.
    pub station_cells: Vec<usize>,
    /// Cells holding slots at time 0 (all cells when `m = 1`).
    pub slot_cells: Vec<usize>,
    /// Type used for phantom vehicles, when `m > 1`.
    pub phantom_type: Option<usize>,
    /// `1 / m`.
    pub threshold: T,
    pub condition: Vec<TauInequality<T>>,
}

/// Serialized form of a mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlottedMappingDocument {
    pub n: usize,
    pub c: usize,
    #[serde(rename = "L")]
    pub ring_size: usize,
    pub m: usize,
    pub k: usize,
    pub station_cells: Vec<usize>,
    pub slot_cells: Vec<usize>,
    pub phantom_type: Option<usize>,
    pub threshold: f64,
    pub parameters: ParameterDocument,
    pub condition: Vec<TauInequality<f64>>,
}

impl<T: Scalar> SlottedMapping<T> {
    pub fn to_document(&self) -> SlottedMappingDocument {
        SlottedMappingDocument {
            n: self.spec.n,
            c: self.spec.c,
            ring_size: self.ring_size,
            m: self.m,
            k: self.k,
            station_cells: self.station_cells.clone(),
            slot_cells: self.slot_cells.clone(),
            phantom_type: self.phantom_type,
            threshold: self.threshold.as_f64(),
            parameters: ParameterDocument::from(&self.ps),
            condition: self
                .condition
                .iter()
                .map(|c| TauInequality {
                    station: c.station,
                    cell: c.cell,
                    coefficients: c.coefficients.iter().map(Scalar::as_f64).collect(),
                    bound: c.bound.as_f64(),
                })
                .collect(),
        }
    }

    /// Initial ring state: phantoms in every cell outside the slots.
    pub fn initial_state(&self) -> RingState {
        let mut state = RingState::empty(self.ring_size);
        if let Some(phantom) = self.phantom_type {
            for cell in 0..self.ring_size {
                if !self.slot_cells.contains(&(cell + 1)) {
                    state.cells[cell] = Some(phantom - 1);
                }
            }
        }
        state
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Departure probabilities for stations placed at 0-based `cells`.
fn hazards<T: Scalar>(spec: &SlottedSpec<T>, ring_size: usize, cells: &[usize]) -> Vec<Vec<T>> {
    let mut q = vec![vec![T::zero(); ring_size]; ring_size];
    for (r, &home) in cells.iter().enumerate() {
        let mut passed = T::zero();
        for d in 1..=ring_size {
            let cell = (home + d) % ring_size;
            let Some(s) = cells.iter().position(|&x| x == cell) else {
                continue;
            };
            let remaining = T::one() - passed.clone();
            let mass = spec.dest[r][s].clone();
            q[cell][home] = if remaining <= T::boundary_tolerance() {
                T::one()
            } else {
                T::min_of(mass.clone() / remaining, T::one())
            };
            passed = passed + mass;
        }
    }
    q
}

fn build<T: Scalar>(spec: &SlottedSpec<T>, ring_size: usize, m: usize, k: usize, cells: Vec<usize>) -> Result<SlottedMapping<T>> {
    let q = hazards(spec, ring_size, &cells);
    let m_t = T::from_usize_exact(m);
    let mut p = vec![T::zero(); ring_size];
    for (s, &cell) in cells.iter().enumerate() {
        p[cell] = spec.arrival_rates[s].clone() / m_t.clone();
    }
    let exempt: Vec<usize> = (0..ring_size).filter(|c| !cells.contains(c)).collect();
    let ps = ParameterSetting::with_exempt_types(p, q, exempt.iter().copied())?;
    let slot_cells: Vec<usize> = (1..=spec.c).map(|s| s * m).collect();
    let phantom_type = (m > 1).then(|| exempt[0] + 1);
    let threshold = T::one() / m_t;

    // rho_i = (lambda_i + sum_j b_ij lambda_j) / m at a station cell; cells
    // without a station carry at most the load of the station before them.
    let b = visit_matrix(&ps);
    let condition = cells
        .iter()
        .enumerate()
        .map(|(s, &cell)| TauInequality {
            station: s + 1,
            cell: cell + 1,
            coefficients: cells
                .iter()
                .enumerate()
                .map(|(j, &home)| {
                    let visits = b.finite(cell, home).cloned().unwrap_or_else(T::zero);
                    if j == s {
                        T::one() + visits
                    } else {
                        visits
                    }
                })
                .collect(),
            bound: T::one(),
        })
        .collect();
    Ok(SlottedMapping {
        spec: spec.clone(),
        ps,
        ring_size,
        m,
        k,
        station_cells: cells.iter().map(|c| c + 1).collect(),
        slot_cells,
        phantom_type,
        threshold,
        condition,
    })
}

/// `n <= c`: one cell per slot, stations at cells `1..=n`.
pub fn map_simple<T: Scalar>(spec: &SlottedSpec<T>) -> Result<SlottedMapping<T>> {
    spec.validate()?;
    if spec.n > spec.c {
        return Err(Error::InvalidSlottedSpec(format!(
            "{} stations exceed {} slots; use the general mapping",
            spec.n, spec.c
        )));
    }
    build(spec, spec.c, 1, 1, (0..spec.n).collect())
}

/// `L = lcm(n, c)` cells with stations every `k = L / n` cells and slots
/// every `m = L / c` cells. When `c` divides `n` with `m > 1` there would be
/// no cell left over for the phantom type, so the ring is doubled.
pub fn map_general<T: Scalar>(spec: &SlottedSpec<T>) -> Result<SlottedMapping<T>> {
    spec.validate()?;
    let mut ring_size = spec.n / gcd(spec.n, spec.c) * spec.c;
    if ring_size == spec.n && ring_size > spec.c {
        ring_size *= 2;
    }
    let m = ring_size / spec.c;
    let k = ring_size / spec.n;
    let cells = (1..=spec.n).map(|s| s * k - 1).collect();
    build(spec, ring_size, m, k, cells)
}

/// Simple mapping when it applies, the general one otherwise.
pub fn map_spec<T: Scalar>(spec: &SlottedSpec<T>) -> Result<SlottedMapping<T>> {
    if spec.n <= spec.c {
        map_simple(spec)
    } else {
        map_general(spec)
    }
}

/// The stability condition in the original arrival rates.
pub fn tau_condition<T: Scalar>(mapping: &SlottedMapping<T>) -> &[TauInequality<T>] {
    &mapping.condition
}

/// Whether the rates of the mapping satisfy the condition, checked through
/// the stability verdict with threshold `1 / m`.
pub fn tau_stable<T: Scalar>(mapping: &SlottedMapping<T>) -> Result<bool> {
    let report = stability_verdict(&mapping.ps, Some(mapping.threshold.clone()))?;
    Ok(report.verdict == Verdict::Stable)
}

/// Station queue lengths observed every `sample_every` steps after
/// `burn_in`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueSamples {
    pub samples: Vec<Vec<u64>>,
    /// Steps at which the number of phantom cells differed from `L - c`.
    pub phantom_violations: u64,
}

/// Runs the mapped ring model from its phantom-filled initial state.
pub fn simulate_mapped(
    mapping: &SlottedMapping<f64>,
    horizon: u64,
    burn_in: u64,
    seed: u64,
) -> Result<QueueSamples> {
    let l = mapping.ring_size;
    let field = UniformField::new(seed, l);
    let mut sim = RingSimulator::new(RingModel::Current, mapping.initial_state(), &mapping.ps, field)?;
    let phantom = mapping.phantom_type.map(|p| p - 1);
    let expected_phantoms = l - mapping.spec.c;
    let stations: Vec<usize> = mapping.station_cells.iter().map(|c| c - 1).collect();
    let mut samples = Vec::new();
    let mut phantom_violations = 0;
    for t in 0..=horizon {
        let state = sim.state();
        let phantoms = phantom.map_or(0, |ph| state.cells.iter().filter(|c| **c == Some(ph)).count());
        if phantoms != expected_phantoms {
            phantom_violations += 1;
        }
        if t >= burn_in && t % l as u64 == 0 {
            samples.push(stations.iter().map(|&c| state.queues[c]).collect());
        }
        if t < horizon {
            sim.advance();
        }
    }
    Ok(QueueSamples {
        samples,
        phantom_violations,
    })
}

/// Direct slot-level simulation: `c` slots advance one cell per step; a
/// station whose position holds an empty slot loads the head packet of its
/// queue with a destination drawn from `dest`, and the slot frees once the
/// packet has passed its destination position. Arrivals are Bernoulli with
/// probability `lambda / m` per step.
pub fn simulate_direct(
    mapping: &SlottedMapping<f64>,
    horizon: u64,
    burn_in: u64,
    seed: u64,
) -> Result<QueueSamples> {
    let spec = &mapping.spec;
    let l = mapping.ring_size;
    let m = mapping.m as f64;
    let positions: Vec<usize> = mapping.station_cells.iter().map(|c| c - 1).collect();
    let base: Vec<usize> = mapping.slot_cells.iter().map(|c| c - 1).collect();
    // destination position carried by each slot
    let mut cargo: Vec<Option<usize>> = vec![None; spec.c];
    let mut queues = vec![0u64; spec.n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for t in 0..=horizon {
        if t >= burn_in && t % l as u64 == 0 {
            samples.push(queues.clone());
        }
        if t == horizon {
            break;
        }
        let shift = (t % l as u64) as usize;
        for (slot, load) in cargo.iter_mut().enumerate() {
            let pos = (base[slot] + shift) % l;
            match *load {
                Some(target) if target == pos => *load = None,
                Some(_) => {}
                None => {
                    if let Some(s) = positions.iter().position(|&x| x == pos) {
                        if queues[s] > 0 {
                            queues[s] -= 1;
                            let u: f64 = rng.gen();
                            let mut acc = 0.0;
                            let mut dest = spec.dest[s].iter().rposition(|d| *d > 0.0).unwrap_or(0);
                            for (j, d) in spec.dest[s].iter().enumerate() {
                                acc += d;
                                if u < acc {
                                    dest = j;
                                    break;
                                }
                            }
                            *load = Some(positions[dest]);
                        }
                    }
                }
            }
        }
        for (s, q) in queues.iter_mut().enumerate() {
            if rng.gen::<f64>() < spec.arrival_rates[s] / m {
                *q += 1;
            }
        }
    }
    Ok(QueueSamples {
        samples,
        phantom_violations: 0,
    })
}

/// Empirical distribution of one station's queue length, lumping values at
/// or above `cap`.
pub fn queue_distribution(samples: &QueueSamples, station: usize, cap: usize) -> Vec<f64> {
    let mut hist = vec![0.0; cap + 1];
    for s in &samples.samples {
        hist[(s[station] as usize).min(cap)] += 1.0;
    }
    let n = samples.samples.len().max(1) as f64;
    hist.iter().map(|h| h / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub mean_direct: Vec<f64>,
    pub mean_mapped: Vec<f64>,
    /// Total-variation distance between the station queue distributions.
    pub tv_distance: Vec<f64>,
    pub phantom_violations: u64,
}

/// Compares the direct slotted simulation with the mapped ring model,
/// sampling station queues every `L` steps.
pub fn compare_direct_and_mapped(
    mapping: &SlottedMapping<f64>,
    horizon: u64,
    seed: u64,
) -> Result<EquivalenceReport> {
    let burn_in = horizon / 10;
    let (direct, mapped) = rayon::join(
        || simulate_direct(mapping, horizon, burn_in, seed),
        || simulate_mapped(mapping, horizon, burn_in, seed),
    );
    let (direct, mapped) = (direct?, mapped?);
    let n = mapping.spec.n;
    let mean = |s: &QueueSamples, i: usize| {
        s.samples.iter().map(|x| x[i] as f64).sum::<f64>() / s.samples.len().max(1) as f64
    };
    let cap = 8;
    Ok(EquivalenceReport {
        samples: direct.samples.len(),
        mean_direct: (0..n).map(|i| mean(&direct, i)).collect(),
        mean_mapped: (0..n).map(|i| mean(&mapped, i)).collect(),
        tv_distance: (0..n)
            .map(|i| {
                let a = queue_distribution(&direct, i, cap);
                let b = queue_distribution(&mapped, i, cap);
                0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>()
            })
            .collect(),
        phantom_violations: mapped.phantom_violations,
    })
}
