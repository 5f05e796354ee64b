//! Closed-form quantities of the ring model.
//!
//! All functions are pure and generic over [`Scalar`](crate::Scalar), so the
//! same code yields floating point answers for experiments and exact rational
//! answers for checks against hand-derived values.

mod dwell;
mod load;
mod region;
mod stability;
mod visits;

pub use dwell::{dwell_distribution, DwellDistribution};
pub use load::{
    closed_form_load, load_profile, marginal_distribution, marginal_from_visits, traffic_solution,
    LoadProfile, TrafficSolution,
};
pub use region::{stability_region, Halfspace, StabilityRegion};
pub use stability::{stability_verdict, StabilityReport, Verdict};
pub use visits::{visit_matrix, VisitMatrix, Visits};
