use serde::Serialize;

use crate::analytics::load::{marginal_from_visits, traffic_solution};
use crate::analytics::visits::visit_matrix;
use crate::error::Result;
use crate::params::ParameterSetting;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    Unstable,
    /// Maximum load within tolerance of the threshold; undecided.
    Boundary,
}

impl Verdict {
    /// Classification by the largest station load.
    pub fn from_load<T: Scalar>(rho_bar: &T, threshold: &T, tolerance: &T) -> Self {
        let gap = threshold.clone() - rho_bar.clone();
        Self::from_gap(&gap, tolerance)
    }

    /// Classification by the per-cell margins `threshold - rho_i`.
    pub fn from_margins<T: Scalar>(margins: &[T], tolerance: &T) -> Self {
        let smallest = margins
            .iter()
            .cloned()
            .reduce(T::min_of)
            .unwrap_or_else(T::one);
        Self::from_gap(&smallest, tolerance)
    }

    fn from_gap<T: Scalar>(gap: &T, tolerance: &T) -> Self {
        if gap.abs() <= *tolerance {
            Verdict::Boundary
        } else if *gap > T::zero() {
            Verdict::Stable
        } else {
            Verdict::Unstable
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport<T> {
    pub verdict: Verdict,
    /// `pi_i0 - p_i - (1 - threshold)`; equals `pi_i0 - p_i` at the default
    /// threshold.
    pub margins: Vec<T>,
    pub rho: Vec<T>,
    pub rho_bar: T,
    /// Largest finite visit count.
    pub max_visits: T,
    /// Drain-time bound `(1 + B) / (threshold - rho_bar)`, stable settings only.
    pub delta: Option<T>,
    pub threshold: T,
    pub threshold_override: Option<T>,
}

/// Stability of the ring: stable iff `p_i < pi_i0` for every cell, i.e.
/// every station load is below the threshold (1 unless overridden).
pub fn stability_verdict<T: Scalar>(
    ps: &ParameterSetting<T>,
    threshold_override: Option<T>,
) -> Result<StabilityReport<T>> {
    let threshold = threshold_override.clone().unwrap_or_else(T::one);
    let b = visit_matrix(ps);
    let pi = marginal_from_visits(ps, &b)?;
    let slack = T::one() - threshold.clone();
    let margins: Vec<T> = pi
        .iter()
        .zip(ps.arrivals())
        .map(|(row, p)| row[0].clone() - p.clone() - slack.clone())
        .collect();
    let rho = traffic_solution(ps)?.rho;
    let rho_bar = rho
        .iter()
        .cloned()
        .reduce(T::max_of)
        .expect("ring has at least one cell");
    let verdict = Verdict::from_margins(&margins, &T::boundary_tolerance());
    let max_visits = b.max_finite();
    let delta = (verdict == Verdict::Stable).then(|| {
        (T::one() + max_visits.clone()) / (threshold.clone() - rho_bar.clone())
    });
    Ok(StabilityReport {
        verdict,
        margins,
        rho,
        rho_bar,
        max_visits,
        delta,
        threshold,
        threshold_override,
    })
}
