//! Overloaded regime: candidate empty-cell rates `v` solving
//! `v_i = 1 - sum_j b_ij min(v_j, p_j)`, the split of queues into growing
//! (`p_i > v_i`) and stable ones, and the predicted growth rates `p_i - v_i`.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{visit_matrix, VisitMatrix, Visits};
use crate::error::{Error, Result};
use crate::linalg;
use crate::params::ParameterSetting;
use crate::randomness::UniformField;
use crate::scalar::Scalar;
use crate::sim_ring::{queue_growth_slopes, run, RingState};
use crate::stats::mean_estimate;

/// Margin below which a queue counts as sitting on the boundary.
pub const BOUNDARY_MARGIN: f64 = 1e-9;
/// Solutions further apart than this are reported as distinct.
pub const DISTINCT_SOLUTIONS: f64 = 1e-6;
const RESTARTS: usize = 10;
const RESTART_SEED: u64 = 0x7261_6e64;
/// Largest ring for which the exact fallback enumerates all `2^L` pieces.
pub const MAX_ENUMERATION_RING: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    DampedIteration,
    Enumeration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientProfile<T> {
    pub pi_tilde0: Vec<T>,
    /// Queues with `p_i > v_i` (0-based; serialized as 1-based labels).
    #[serde(serialize_with = "one_based")]
    pub unstable: Vec<usize>,
    /// Queues with `p_i < v_i` (0-based; serialized as 1-based labels).
    #[serde(serialize_with = "one_based")]
    pub stable: Vec<usize>,
    pub growth: Vec<T>,
    pub residual: T,
    pub boundary_flag: bool,
    pub method: SolveMethod,
    pub iterations: usize,
    /// Every distinct solution found, when there is more than one.
    pub alternatives: Vec<Vec<T>>,
}

fn one_based<S: serde::Serializer>(indices: &[usize], serializer: S) -> std::result::Result<S::Ok, S::Error> {
    serializer.collect_seq(indices.iter().map(|i| i + 1))
}

impl<T> TransientProfile<T> {
    pub fn has_multiple_solutions(&self) -> bool {
        !self.alternatives.is_empty()
    }
}

fn b_times_min<T: Scalar>(b: &VisitMatrix<T>, i: usize, v: &[T], p: &[T]) -> T {
    let mut acc = T::zero();
    for j in 0..v.len() {
        let m = T::min_of(v[j].clone(), p[j].clone());
        if m.is_zero() {
            continue;
        }
        if let Visits::Finite(bij) = b.get(i, j) {
            acc = acc + bij.clone() * m;
        }
    }
    acc
}

/// `G(v)_i = 1 - sum_j b_ij min(v_j, p_j)`. Columns with infinite visits
/// only appear for types without arrivals and contribute nothing.
pub fn iteration_map<T: Scalar>(b: &VisitMatrix<T>, p: &[T], v: &[T]) -> Vec<T> {
    (0..v.len()).map(|i| T::one() - b_times_min(b, i, v, p)).collect()
}

/// `max_i |v_i - G(v)_i|`.
pub fn fixed_point_residual<T: Scalar>(b: &VisitMatrix<T>, p: &[T], v: &[T]) -> T {
    iteration_map(b, p, v)
        .into_iter()
        .zip(v)
        .map(|(g, x)| (g - x.clone()).abs())
        .fold(T::zero(), T::max_of)
}

fn check_arrivals_have_finite_visits<T: Scalar>(ps: &ParameterSetting<T>, b: &VisitMatrix<T>) -> Result<()> {
    match (0..ps.ring_size()).find(|&j| !ps.arrival(j).is_zero() && !b.is_finite_column(j)) {
        Some(j) => Err(Error::InfiniteLoad { vehicle_type: j + 1 }),
        None => Ok(()),
    }
}

struct Iterated<T> {
    v: Vec<T>,
    residual: T,
    iterations: usize,
}

/// `v <- v + a (G(v) - v)`, halving `a` whenever the residual stops
/// shrinking.
fn damped_iteration<T: Scalar + Float>(
    b: &VisitMatrix<T>,
    p: &[T],
    start: Vec<T>,
    max_iter: usize,
    tol: T,
) -> Iterated<T> {
    let half = T::lit(0.5);
    let mut a = half;
    let mut v = start;
    let mut best = Float::infinity();
    let mut since_best = 0usize;
    let mut residual = fixed_point_residual(b, p, &v);
    for iterations in 0..max_iter {
        if residual <= tol {
            return Iterated { v, residual, iterations };
        }
        let g = iteration_map(b, p, &v);
        for (x, gx) in v.iter_mut().zip(g) {
            *x = *x + a * (gx - *x);
        }
        residual = fixed_point_residual(b, p, &v);
        if residual < best * T::lit(0.5) {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 200 && a > T::lit(1e-6) {
                a = a * half;
                since_best = 0;
                best = residual;
            }
        }
    }
    Iterated { v, residual, iterations: max_iter }
}

/// All solutions of the fixed-point system, found by solving the linear
/// system of each piece `U = {j : v_j <= p_j}` and keeping the consistent
/// ones. Exact for exact scalars. Pieces whose linear system is singular are
/// skipped and reported through the returned flag.
pub fn enumerate_fixed_points<T: Scalar>(ps: &ParameterSetting<T>) -> Result<(Vec<Vec<T>>, bool)> {
    let l = ps.ring_size();
    if l > MAX_ENUMERATION_RING {
        return Err(Error::InvalidArgument(format!(
            "enumeration is limited to rings of at most {MAX_ENUMERATION_RING} cells"
        )));
    }
    let b = visit_matrix(ps);
    check_arrivals_have_finite_visits(ps, &b)?;
    let p = ps.arrivals();
    let finite = |i: usize, j: usize| b.finite(i, j).cloned().unwrap_or_else(T::zero);
    let mut solutions: Vec<Vec<T>> = Vec::new();
    let mut singular = false;
    for mask in 0u32..(1u32 << l) {
        let in_u = |j: usize| mask & (1 << j) != 0;
        // (I + B_U) v = 1 - B_S p
        let a: Vec<Vec<T>> = (0..l)
            .map(|i| {
                (0..l)
                    .map(|j| {
                        let diag = if i == j { T::one() } else { T::zero() };
                        if in_u(j) {
                            diag + finite(i, j)
                        } else {
                            diag
                        }
                    })
                    .collect()
            })
            .collect();
        let rhs: Vec<T> = (0..l)
            .map(|i| {
                (0..l)
                    .filter(|&j| !in_u(j))
                    .fold(T::one(), |acc, j| acc - finite(i, j) * p[j].clone())
            })
            .collect();
        let Some(v) = linalg::solve(a, rhs) else {
            singular = true;
            continue;
        };
        let tol = T::boundary_tolerance();
        let consistent = (0..l).all(|j| {
            if in_u(j) {
                v[j] <= p[j].clone() + tol.clone()
            } else {
                v[j] >= p[j].clone() - tol.clone()
            }
        });
        if consistent && !solutions.iter().any(|s| max_gap(s, &v) <= T::lit(DISTINCT_SOLUTIONS)) {
            solutions.push(v);
        }
    }
    Ok((solutions, singular))
}

fn max_gap<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.clone() - y.clone()).abs())
        .fold(T::zero(), T::max_of)
}

fn classify<T: Scalar>(
    ps: &ParameterSetting<T>,
    b: &VisitMatrix<T>,
    v: Vec<T>,
    method: SolveMethod,
    iterations: usize,
    alternatives: Vec<Vec<T>>,
) -> TransientProfile<T> {
    let p = ps.arrivals();
    let margin = T::lit(BOUNDARY_MARGIN);
    let mut unstable = Vec::new();
    let mut stable = Vec::new();
    let mut boundary_flag = false;
    let mut growth = vec![T::zero(); v.len()];
    for i in 0..v.len() {
        let d = p[i].clone() - v[i].clone();
        if d.abs() <= margin {
            boundary_flag = true;
        } else if d > T::zero() {
            unstable.push(i);
            growth[i] = d;
        } else {
            stable.push(i);
        }
    }
    let residual = fixed_point_residual(b, p, &v);
    TransientProfile {
        pi_tilde0: v,
        unstable,
        stable,
        growth,
        residual,
        boundary_flag,
        method,
        iterations,
        alternatives,
    }
}

/// Solves the fixed-point system by damped iteration from the all-ones
/// vector, restarting from random vectors to detect several solutions, and
/// falls back to exact enumeration of the linear pieces when iteration does
/// not reach `tol` within `max_iter` steps.
pub fn solve_fixed_point<T: Scalar + Float>(
    ps: &ParameterSetting<T>,
    max_iter: usize,
    tol: T,
) -> Result<TransientProfile<T>> {
    let l = ps.ring_size();
    let b = visit_matrix(ps);
    check_arrivals_have_finite_visits(ps, &b)?;
    let p = ps.arrivals();
    let main = damped_iteration(&b, p, vec![T::one(); l], max_iter, tol);

    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let starts: Vec<Vec<T>> = (0..RESTARTS)
        .map(|_| (0..l).map(|_| T::lit(rng.gen::<f64>())).collect())
        .collect();
    let restarts: Vec<Iterated<T>> = starts
        .into_par_iter()
        .map(|s| damped_iteration(&b, p, s, max_iter, tol))
        .collect();

    if main.residual <= tol {
        let mut found: Vec<Vec<T>> = vec![main.v.clone()];
        for r in restarts.iter().filter(|r| r.residual <= tol) {
            if !found.iter().any(|s| max_gap(s, &r.v) <= T::lit(DISTINCT_SOLUTIONS)) {
                found.push(r.v.clone());
            }
        }
        let alternatives = if found.len() > 1 { found } else { Vec::new() };
        return Ok(classify(ps, &b, main.v, SolveMethod::DampedIteration, main.iterations, alternatives));
    }

    if l <= MAX_ENUMERATION_RING {
        let (mut solutions, _) = enumerate_fixed_points(ps)?;
        solutions.retain(|v| fixed_point_residual(&b, p, v) <= tol);
        if let Some(first) = solutions.first().cloned() {
            let alternatives = if solutions.len() > 1 { solutions } else { Vec::new() };
            return Ok(classify(ps, &b, first, SolveMethod::Enumeration, max_iter, alternatives));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: main.residual.as_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSlopes {
    pub seed: u64,
    pub slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientComparison {
    pub horizon: u64,
    pub window: u64,
    pub predicted: Vec<f64>,
    pub mean_slope: Vec<f64>,
    pub std_err: Vec<f64>,
    /// `|mean slope - predicted growth|` per queue.
    pub discrepancy: Vec<f64>,
    pub per_seed: Vec<SeedSlopes>,
}

/// Simulates the ring from empty for each seed and compares the queue
/// growth slopes over the second half of the horizon with the predicted
/// growth rates.
pub fn compare_with_simulation(
    ps: &ParameterSetting<f64>,
    profile: &TransientProfile<f64>,
    horizon: u64,
    seeds: &[u64],
) -> Result<TransientComparison> {
    if profile.boundary_flag {
        return Err(Error::InvalidArgument(
            "growth rates are not predicted on the boundary".into(),
        ));
    }
    if horizon < 2 {
        return Err(Error::HorizonTooShort { needed: 2, available: horizon });
    }
    let l = ps.ring_size();
    let window = horizon / 2;
    let record_every = (horizon / 2000).max(1);
    let per_seed: Vec<SeedSlopes> = seeds
        .par_iter()
        .map(|&seed| {
            let traj = run(RingState::empty(l), ps, &UniformField::new(seed, l), horizon, record_every)?;
            Ok(SeedSlopes {
                seed,
                slopes: queue_growth_slopes(&traj, window)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut mean_slope = Vec::with_capacity(l);
    let mut std_err = Vec::with_capacity(l);
    for i in 0..l {
        let xs: Vec<f64> = per_seed.iter().map(|s| s.slopes[i]).collect();
        let est = mean_estimate(&xs);
        mean_slope.push(est.mean);
        std_err.push(est.std_err);
    }
    let discrepancy = mean_slope
        .iter()
        .zip(&profile.growth)
        .map(|(m, g)| (m - g).abs())
        .collect();
    Ok(TransientComparison {
        horizon,
        window,
        predicted: profile.growth.clone(),
        mean_slope,
        std_err,
        discrepancy,
        per_seed,
    })
}
