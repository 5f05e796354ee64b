use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use ringstab::analytics::{load_profile, stability_region, stability_verdict, visit_matrix};
use ringstab::coupling::{coupled_run, forward, legacy_coupled_run};
use ringstab::fluid::{run_fluid_experiment, FluidExperiment, ScaledGrid};
use ringstab::network::ClassSpace;
use ringstab::sim_mcn::{audit, simulate_audited, simulate_mcn, AuditReport};
use ringstab::sim_ring::{estimate_marginals, queue_growth_slopes, run_model, RingModel, RingState};
use ringstab::slotted::{compare_direct_and_mapped, map_spec, tau_stable};
use ringstab::transient::{compare_with_simulation, solve_fixed_point};
use ringstab::{ParameterSetting, UniformField};

use crate::config::{Model, RunConfig};

const DEFAULT_HORIZON: u64 = 100_000;
const DEFAULT_RESOLUTION: usize = 100;
const DEFAULT_ENTRY_MASS: u64 = 1_000;

/// Result of a subcommand: the JSON report, CSV sidecars, and whether every
/// check it performed held.
pub struct Report {
    pub json: Value,
    pub sidecars: Vec<(String, String)>,
    pub passed: bool,
}

impl Report {
    fn ok(json: Value) -> Self {
        Self {
            json,
            sidecars: Vec::new(),
            passed: true,
        }
    }
}

fn class_labels(l: usize) -> Vec<String> {
    let space = ClassSpace::new(l);
    (0..space.len()).map(|c| space.label(c)).collect()
}

pub fn analyze(config: &RunConfig) -> Result<Report> {
    let ps = config.ring()?;
    let report = stability_verdict(ps, config.options.threshold)?;
    let profile = load_profile(ps)?;
    Ok(Report::ok(json!({
        "command": "analyze",
        "parameters": ps.to_document(),
        "visit_matrix": visit_matrix(ps),
        "marginals": profile.pi,
        "classes": class_labels(ps.ring_size()),
        "lambda": profile.lambda,
        "rho": profile.rho,
        "stability": report,
    })))
}

pub fn region(config: &RunConfig) -> Result<Report> {
    let ps = config.ring()?;
    let region = stability_region(ps, config.options.resolution.unwrap_or(DEFAULT_RESOLUTION));
    let csv = region.boundary_csv();
    let json = json!({
        "command": "region",
        "parameters": ps.to_document(),
        "halfspaces": region.halfspaces,
        "zero_rate_types": region.pinned_zero.iter().map(|k| k + 1).collect::<Vec<_>>(),
        "intercepts": region.intercepts,
        "boundary": region.boundary,
    });
    Ok(Report {
        json,
        sidecars: vec![("region_boundary.csv".into(), csv)],
        passed: true,
    })
}

#[derive(Serialize)]
struct RingRecord {
    seed: u64,
    final_state: RingState,
    arrivals: Vec<u64>,
    entries: Vec<u64>,
    departures: Vec<u64>,
    /// Empirical cell-state frequencies after burn-in.
    marginals: Vec<Vec<f64>>,
    /// Largest gap to the closed-form marginals, when those exist.
    max_marginal_gap: Option<f64>,
    queue_slopes: Vec<f64>,
}

#[derive(Serialize)]
struct NetworkRecord {
    seed: u64,
    final_state: ringstab::sim_mcn::McnState,
    audit: AuditReport,
}

pub fn simulate(config: &RunConfig) -> Result<Report> {
    let ps = config.ring()?;
    let o = &config.options;
    let l = ps.ring_size();
    let horizon = o.horizon.unwrap_or(DEFAULT_HORIZON);
    let burn_in = o.burn_in.unwrap_or(horizon / 10);
    if burn_in >= horizon {
        bail!("burn_in ({burn_in}) must be below the horizon ({horizon})");
    }
    let record_every = o.record_every.unwrap_or((horizon / 1_000).max(1));
    let initial = o.initial.clone().unwrap_or_else(|| RingState::empty(l));
    let model = o.model.unwrap_or_default();
    let seeds = config.seeds();
    let want_csv = o.out.is_some();

    if model == Model::Mcn {
        let runs: Vec<(NetworkRecord, Option<String>)> = seeds
            .par_iter()
            .map(|&seed| {
                let field = UniformField::new(seed, l);
                if want_csv {
                    let path = simulate_mcn(forward(&initial), ps, &field, horizon)?;
                    let audit = audit(&path);
                    let csv = path.to_csv();
                    let final_state = path.states.last().expect("path starts with the initial state").clone();
                    Ok((NetworkRecord { seed, final_state, audit }, Some(csv)))
                } else {
                    let (final_state, audit) = simulate_audited(forward(&initial), ps, &field, horizon)?;
                    Ok((NetworkRecord { seed, final_state, audit }, None))
                }
            })
            .collect::<ringstab::Result<_>>()?;
        let passed = runs.iter().all(|(r, _)| r.audit.all_passed());
        let sidecars = runs
            .iter()
            .filter_map(|(r, csv)| csv.clone().map(|c| (format!("network_seed{}.csv", r.seed), c)))
            .collect();
        let records: Vec<&NetworkRecord> = runs.iter().map(|(r, _)| r).collect();
        return Ok(Report {
            json: json!({
                "command": "simulate",
                "model": "mcn",
                "parameters": ps.to_document(),
                "horizon": horizon,
                "classes": class_labels(l),
                "passed": passed,
                "runs": records,
            }),
            sidecars,
            passed,
        });
    }

    let ring_model = if model == Model::RingLegacy {
        RingModel::Legacy
    } else {
        RingModel::Current
    };
    let analytic = load_profile(ps).ok().map(|p| p.pi);
    let runs: Vec<(RingRecord, String)> = seeds
        .par_iter()
        .map(|&seed| {
            let field = UniformField::new(seed, l);
            let traj = run_model(ring_model, initial.clone(), ps, &field, horizon, record_every)?;
            let marginals = estimate_marginals(&traj, burn_in)?;
            let max_marginal_gap = analytic.as_ref().map(|pi| {
                pi.iter()
                    .flatten()
                    .zip(marginals.iter().flatten())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            });
            let record = RingRecord {
                seed,
                final_state: traj.final_state().clone(),
                arrivals: traj.arrivals.clone(),
                entries: traj.entries.clone(),
                departures: traj.departures.clone(),
                marginals,
                max_marginal_gap,
                queue_slopes: queue_growth_slopes(&traj, horizon - burn_in)?,
            };
            Ok((record, traj.to_csv()))
        })
        .collect::<ringstab::Result<_>>()?;
    let sidecars = if want_csv {
        runs.iter()
            .map(|(r, csv)| (format!("trajectory_seed{}.csv", r.seed), csv.clone()))
            .collect()
    } else {
        Vec::new()
    };
    let records: Vec<&RingRecord> = runs.iter().map(|(r, _)| r).collect();
    Ok(Report {
        json: json!({
            "command": "simulate",
            "model": if ring_model == RingModel::Legacy { "ring-legacy" } else { "ring" },
            "parameters": ps.to_document(),
            "horizon": horizon,
            "burn_in": burn_in,
            "record_every": record_every,
            "analytic_marginals": analytic,
            "runs": records,
        }),
        sidecars,
        passed: true,
    })
}

pub fn couple(config: &RunConfig) -> Result<Report> {
    let ps = config.ring()?;
    let o = &config.options;
    let l = ps.ring_size();
    let horizon = o.horizon.unwrap_or(DEFAULT_HORIZON);
    let initial = o.initial.clone().unwrap_or_else(|| RingState::empty(l));
    let seeds = config.seeds();
    let (variant, runs, passed) = match o.model.unwrap_or_default() {
        Model::Ring => {
            let reports = seeds
                .par_iter()
                .map(|&seed| coupled_run(&initial, ps, &UniformField::new(seed, l), horizon))
                .collect::<ringstab::Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed);
            ("ring-network", serde_json::to_value(reports)?, passed)
        }
        Model::RingLegacy => {
            let reports = seeds
                .par_iter()
                .map(|&seed| legacy_coupled_run(&initial, ps, &UniformField::new(seed, l), horizon))
                .collect::<ringstab::Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed);
            ("legacy-current", serde_json::to_value(reports)?, passed)
        }
        Model::Mcn => bail!("couple supports the ring and ring-legacy models"),
    };
    Ok(Report {
        json: json!({
            "command": "couple",
            "coupling": variant,
            "parameters": ps.to_document(),
            "horizon": horizon,
            "initial": initial,
            "passed": passed,
            "runs": runs,
        }),
        sidecars: Vec::new(),
        passed,
    })
}

pub fn fluid(config: &RunConfig) -> Result<Report> {
    let ps = config.ring()?;
    let o = &config.options;
    let t = &o.tolerances;
    let experiment = FluidExperiment {
        entry_mass: o
            .entry_mass
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_ENTRY_MASS; ps.ring_size()]),
        grid: ScaledGrid::new(o.grid.step, o.grid.end)?,
        epsilon: t.epsilon,
        circularity_tol: t.circularity,
        min_busy_length: t.min_busy_length,
    };
    if experiment.entry_mass.iter().all(|&m| m == 0) {
        bail!("entry_mass must contain at least one customer");
    }
    let runs = config
        .seeds()
        .par_iter()
        .map(|&seed| run_fluid_experiment(ps, &experiment, seed))
        .collect::<ringstab::Result<Vec<_>>>()?;
    let bound = runs[0].drain_bound;
    let drained = runs
        .iter()
        .filter(|r| matches!((r.drain_time, r.drain_bound), (Some(d), Some(b)) if d < b))
        .count();
    let share = drained as f64 / runs.len() as f64;
    let violations: usize = runs.iter().map(|r| r.circularity_violations.len()).sum();
    let worst_slope = runs
        .iter()
        .flat_map(|r| &r.busy_slopes)
        .map(|s| (s.slope - s.expected).abs())
        .fold(0.0, f64::max);
    let drain_ok = bound.is_some() && share >= t.drain_share;
    let slope_ok = worst_slope <= t.slope;
    let passed = drain_ok && violations == 0 && slope_ok;
    let sidecars = runs
        .iter()
        .map(|r| (format!("fluid_seed{}.csv", r.seed), r.to_csv()))
        .collect();
    Ok(Report {
        json: json!({
            "command": "fluid",
            "parameters": ps.to_document(),
            "experiment": experiment,
            "drain_bound": bound,
            "checks": {
                "drained_share": share,
                "drain": drain_ok,
                "circularity_violations": violations,
                "circularity": violations == 0,
                "max_slope_error": worst_slope,
                "slopes": slope_ok,
            },
            "passed": passed,
            "runs": runs,
        }),
        sidecars,
        passed,
    })
}

pub fn transient(config: &RunConfig) -> Result<Report> {
    let ps: &ParameterSetting<f64> = config.ring()?;
    let o = &config.options;
    let profile = solve_fixed_point(ps, o.tolerances.max_iter, o.tolerances.fixed_point)?;
    let comparison = match o.horizon {
        Some(horizon) if !profile.boundary_flag => Some(compare_with_simulation(ps, &profile, horizon, &config.seeds())?),
        _ => None,
    };
    let verdict = stability_verdict(ps, None)?.verdict;
    Ok(Report::ok(json!({
        "command": "transient",
        "parameters": ps.to_document(),
        "verdict": verdict,
        "profile": profile,
        "comparison": comparison,
    })))
}

pub fn slotted_map(config: &RunConfig) -> Result<Report> {
    let spec = config.slotted()?;
    let mapping = map_spec(spec)?;
    let stable = tau_stable(&mapping)?;
    let equivalence = config
        .options
        .horizon
        .map(|horizon| compare_direct_and_mapped(&mapping, horizon, config.seed()))
        .transpose()?;
    let passed = equivalence.as_ref().is_none_or(|e| e.phantom_violations == 0);
    Ok(Report {
        json: json!({
            "command": "slotted-map",
            "spec": spec,
            "mapping": mapping.to_document(),
            "tau_stable": stable,
            "equivalence": equivalence,
            "passed": passed,
        }),
        sidecars: Vec::new(),
        passed,
    })
}
