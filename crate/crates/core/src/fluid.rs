//! Fluid-scaled views of network paths.
//!
//! A path started from `x` is scaled by `n = ||x||` (the total number of
//! customers, floored at 1): `SQ(t) = Q(n t) / n` and `ST(t) = T(n t) / n`,
//! linearly interpolated between integer times. On these scaled paths we
//! compute the residual work `R_i = Q_i0 + sum_j b_ij Q_j0`, the time to drain,
//! the circularity bound between neighbouring stations and the rate at which
//! `R_i` falls while station `i` is busy with its entry queue.

use serde::Serialize;

use crate::analytics::{load_profile, visit_matrix, VisitMatrix};
use crate::error::{Error, Result};
use crate::network::{solve_traffic, station_totals, ClassSpace};
use crate::params::ParameterSetting;
use crate::randomness::UniformField;
use crate::sim_mcn::{simulate_mcn, McnPath, McnState};
use crate::stats::least_squares_slope;

/// Uniform grid `0, step, 2 step, ..., end` of scaled times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledGrid {
    pub step: f64,
    pub end: f64,
}

impl Default for ScaledGrid {
    fn default() -> Self {
        Self { step: 0.01, end: 20.0 }
    }
}

impl ScaledGrid {
    pub fn new(step: f64, end: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && end >= 0.0 && end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid needs a positive step and non-negative end, got step {step}, end {end}"
            )));
        }
        Ok(Self { step, end })
    }

    pub fn times(&self) -> Vec<f64> {
        let points = (self.end / self.step + 1e-9).floor() as usize;
        (0..=points).map(|k| k as f64 * self.step).collect()
    }

    /// Unscaled horizon needed to cover the grid for a given norm.
    pub fn required_horizon(&self, norm_x: u64) -> u64 {
        let scale = norm_x.max(1) as f64;
        let last = self.times().last().copied().unwrap_or(0.0);
        (scale * last - 1e-9).ceil().max(0.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledTrajectory {
    pub norm_x: u64,
    pub ring_size: usize,
    pub times: Vec<f64>,
    /// `queues[k][class]` = `SQ_class(times[k])`.
    pub queues: Vec<Vec<f64>>,
    /// `services[k][class]` = `ST_class(times[k])`.
    pub services: Vec<Vec<f64>>,
}

impl ScaledTrajectory {
    pub fn space(&self) -> ClassSpace {
        ClassSpace::new(self.ring_size)
    }

    /// L1 norm of the scaled class vector at grid index `k`.
    pub fn norm_at(&self, k: usize) -> f64 {
        self.queues[k].iter().sum()
    }

    pub fn entry(&self, k: usize, station: usize) -> f64 {
        self.queues[k][self.space().entry(station)]
    }

    /// Largest scaled ring-class queue over the whole path.
    pub fn max_ring_class(&self) -> f64 {
        let space = self.space();
        self.queues
            .iter()
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .filter(move |(c, _)| space.decode(*c).1 != 0)
                    .map(|(_, v)| *v)
            })
            .fold(0.0, f64::max)
    }

    /// Largest increment of any `SQ` or `ST` component between neighbouring
    /// grid points.
    pub fn max_increment(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for series in [&self.queues, &self.services] {
            for w in series.windows(2) {
                for (a, b) in w[0].iter().zip(&w[1]) {
                    worst = worst.max((b - a).abs());
                }
            }
        }
        worst
    }

    /// Whether every component moves by at most `step + 2 / norm_x` per grid
    /// step.
    pub fn is_lipschitz(&self, step: f64) -> bool {
        self.max_increment() <= step + 2.0 / self.norm_x.max(1) as f64 + 1e-12
    }
}

/// `||x||`: total number of customers in the initial state.
pub fn initial_norm(path: &McnPath) -> u64 {
    path.states[0].total()
}

/// Scales a recorded path by `norm_x` onto `grid`.
pub fn scale_trajectory(path: &McnPath, norm_x: u64, grid: &ScaledGrid) -> Result<ScaledTrajectory> {
    let needed = grid.required_horizon(norm_x);
    let available = path.horizon() as u64;
    if available < needed {
        return Err(Error::HorizonTooShort { needed, available });
    }
    let ring_size = path.states[0].ring_size();
    let k = ClassSpace::new(ring_size).len();
    let scale = norm_x.max(1) as f64;
    // cumulative completions at each integer time
    let mut cumulative = Vec::with_capacity(path.horizon() + 1);
    let mut running = vec![0u64; k];
    cumulative.push(running.clone());
    for delta in &path.deltas {
        for (r, c) in running.iter_mut().zip(&delta.completions) {
            *r += c;
        }
        cumulative.push(running.clone());
    }
    let times = grid.times();
    let mut queues = Vec::with_capacity(times.len());
    let mut services = Vec::with_capacity(times.len());
    for &s in &times {
        let x = scale * s;
        let lo = (x + 1e-9).floor();
        let frac = if x - lo > 1e-9 { x - lo } else { 0.0 };
        let lo = lo as usize;
        let hi = if frac > 0.0 { lo + 1 } else { lo };
        let interp = |a: u64, b: u64| (a as f64 + frac * (b as f64 - a as f64)) / scale;
        queues.push(
            (0..k)
                .map(|c| interp(path.states[lo].counts()[c], path.states[hi].counts()[c]))
                .collect(),
        );
        services.push((0..k).map(|c| interp(cumulative[lo][c], cumulative[hi][c])).collect());
    }
    Ok(ScaledTrajectory {
        norm_x,
        ring_size,
        times,
        queues,
        services,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualWork {
    pub times: Vec<f64>,
    /// `r[k][i]` = `R_i(times[k])`.
    pub r: Vec<Vec<f64>>,
}

/// `R_i = SQ_i0 + sum_j b_ij SQ_j0` at every grid point.
pub fn residual_work(scaled: &ScaledTrajectory, b: &VisitMatrix<f64>) -> Result<ResidualWork> {
    let l = scaled.ring_size;
    let mut r = Vec::with_capacity(scaled.times.len());
    for k in 0..scaled.times.len() {
        let entry: Vec<f64> = (0..l).map(|j| scaled.entry(k, j)).collect();
        let row = (0..l)
            .map(|i| {
                b.weighted_row_sum(i, &entry)
                    .map(|s| entry[i] + s)
                    .ok_or_else(|| Error::InfiniteLoad {
                        vehicle_type: (0..l)
                            .find(|&j| !b.is_finite_column(j) && entry[j] != 0.0)
                            .map_or(0, |j| j + 1),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        r.push(row);
    }
    Ok(ResidualWork {
        times: scaled.times.clone(),
        r,
    })
}

/// Which part of the class vector enters `C (I - P^T)^{-1} Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResidualRoute {
    /// Entry classes only; coincides with the `b`-weighted sum.
    EntryProjection,
    /// All classes, including the at most one ring customer per station.
    FullClassVector,
}

/// Residual work through the traffic equations, `C (I - P^T)^{-1} SQ`.
pub fn residual_work_via_traffic(
    scaled: &ScaledTrajectory,
    ps: &ParameterSetting<f64>,
    route: ResidualRoute,
) -> Result<ResidualWork> {
    let space = scaled.space();
    let k = space.len();
    // columns of C (I - P^T)^{-1} for every class carrying mass
    let mut columns: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut r = Vec::with_capacity(scaled.times.len());
    for row in &scaled.queues {
        let mut out = vec![0.0; space.ring_size()];
        for (class, &mass) in row.iter().enumerate() {
            if mass == 0.0 || (route == ResidualRoute::EntryProjection && space.decode(class).1 != 0) {
                continue;
            }
            if columns[class].is_none() {
                let mut unit = vec![0.0; k];
                unit[class] = 1.0;
                columns[class] = Some(station_totals(space, &solve_traffic(ps, &unit)?));
            }
            for (o, w) in out.iter_mut().zip(columns[class].as_ref().expect("filled above")) {
                *o += mass * w;
            }
        }
        r.push(out);
    }
    Ok(ResidualWork {
        times: scaled.times.clone(),
        r,
    })
}

/// First grid time with `||SQ(t)|| <= epsilon`.
pub fn drain_time(scaled: &ScaledTrajectory, epsilon: f64) -> Option<f64> {
    (0..scaled.times.len())
        .find(|&k| scaled.norm_at(k) <= epsilon)
        .map(|k| scaled.times[k])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircularityViolation {
    pub station: usize,
    pub t: f64,
    /// `R_i - R_{i-1}` at the violation.
    pub magnitude: f64,
}

/// Grid points where `SQ_i0 <= tol` yet `R_{i-1} < R_i - tol`.
pub fn circularity_check(
    scaled: &ScaledTrajectory,
    residual: &ResidualWork,
    tol: f64,
) -> Vec<CircularityViolation> {
    let l = scaled.ring_size;
    let mut out = Vec::new();
    for (k, r) in residual.r.iter().enumerate() {
        for i in 0..l {
            let upstream = (i + l - 1) % l;
            if scaled.entry(k, i) <= tol && r[upstream] < r[i] - tol {
                out.push(CircularityViolation {
                    station: i + 1,
                    t: scaled.times[k],
                    magnitude: r[i] - r[upstream],
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusyIntervalSlope {
    pub station: usize,
    pub start: f64,
    pub end: f64,
    pub slope: f64,
    /// `-(1 - rho_i)`.
    pub expected: f64,
}

/// Regression slope of `R_i` over every maximal run of grid points where
/// `SQ_i0 > tol`, keeping runs at least `min_length` scaled time long.
pub fn busy_interval_slopes(
    scaled: &ScaledTrajectory,
    residual: &ResidualWork,
    rho: &[f64],
    tol: f64,
    min_length: f64,
) -> Vec<BusyIntervalSlope> {
    let mut out = Vec::new();
    let n = scaled.times.len();
    for (i, rho_i) in rho.iter().enumerate().take(scaled.ring_size) {
        let mut k = 0;
        while k < n {
            if scaled.entry(k, i) <= tol {
                k += 1;
                continue;
            }
            let start = k;
            while k < n && scaled.entry(k, i) > tol {
                k += 1;
            }
            let (t0, t1) = (scaled.times[start], scaled.times[k - 1]);
            if t1 - t0 >= min_length {
                let ys: Vec<f64> = residual.r[start..k].iter().map(|r| r[i]).collect();
                out.push(BusyIntervalSlope {
                    station: i + 1,
                    start: t0,
                    end: t1,
                    slope: least_squares_slope(&scaled.times[start..k], &ys),
                    expected: -(1.0 - rho_i),
                });
            }
        }
    }
    out
}

/// Settings of a fluid experiment started with customers only in entry
/// queues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidExperiment {
    pub entry_mass: Vec<u64>,
    pub grid: ScaledGrid,
    pub epsilon: f64,
    pub circularity_tol: f64,
    /// Minimum busy-interval length for slope regressions.
    pub min_busy_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidRun {
    pub seed: u64,
    pub norm_x: u64,
    pub drain_time: Option<f64>,
    /// `delta = (1 + B) / (1 - rho_bar)`, when finite.
    pub drain_bound: Option<f64>,
    pub circularity_violations: Vec<CircularityViolation>,
    pub busy_slopes: Vec<BusyIntervalSlope>,
    pub lipschitz: bool,
    pub max_ring_class: f64,
    /// Largest gap between the two residual-work routes.
    pub residual_route_gap: f64,
    #[serde(skip)]
    pub scaled: ScaledTrajectory,
    #[serde(skip)]
    pub residual: ResidualWork,
}

impl FluidRun {
    /// CSV with columns `t, SQ_(i,j)..., R_1..R_L`.
    pub fn to_csv(&self) -> String {
        let space = self.scaled.space();
        let mut out = String::from("t");
        for c in 0..space.len() {
            out.push_str(&format!(",SQ_{}", space.label(c)));
        }
        for i in 1..=space.ring_size() {
            out.push_str(&format!(",R_{i}"));
        }
        out.push('\n');
        for (k, t) in self.scaled.times.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in self.scaled.queues[k].iter().chain(&self.residual.r[k]) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn run_fluid_experiment(
    ps: &ParameterSetting<f64>,
    experiment: &FluidExperiment,
    seed: u64,
) -> Result<FluidRun> {
    let l = ps.ring_size();
    if experiment.entry_mass.len() != l {
        return Err(Error::Dimension {
            what: "entry mass".into(),
            expected: l,
            found: experiment.entry_mass.len(),
        });
    }
    let mut counts = vec![0u64; l * (l + 1)];
    for (i, m) in experiment.entry_mass.iter().enumerate() {
        counts[i * (l + 1)] = *m;
    }
    let initial = McnState::new(l, counts)?;
    let norm_x = initial.total();
    let horizon = experiment.grid.required_horizon(norm_x);
    let field = UniformField::new(seed, l);
    let path = simulate_mcn(initial, ps, &field, horizon)?;
    let scaled = scale_trajectory(&path, norm_x, &experiment.grid)?;
    let b = visit_matrix(ps);
    let residual = residual_work(&scaled, &b)?;
    let via_traffic = residual_work_via_traffic(&scaled, ps, ResidualRoute::EntryProjection)?;
    let residual_route_gap = residual
        .r
        .iter()
        .flatten()
        .zip(via_traffic.r.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let profile = load_profile(ps)?;
    let rho_bar = profile.rho.iter().copied().fold(f64::MIN, f64::max);
    let drain_bound = (rho_bar < 1.0).then(|| (1.0 + b.max_finite()) / (1.0 - rho_bar));
    Ok(FluidRun {
        seed,
        norm_x,
        drain_time: drain_time(&scaled, experiment.epsilon),
        drain_bound,
        circularity_violations: circularity_check(&scaled, &residual, experiment.circularity_tol),
        busy_slopes: busy_interval_slopes(
            &scaled,
            &residual,
            &profile.rho,
            experiment.circularity_tol,
            experiment.min_busy_length,
        ),
        lipschitz: scaled.is_lipschitz(experiment.grid.step),
        max_ring_class: scaled.max_ring_class(),
        residual_route_gap,
        scaled,
        residual,
    })
}
