//! Stability analysis and exact simulation of a stochastic ring network.
//!
//! A ring of `L` cells is fed by one queue per cell. Vehicles entering from
//! queue `j` occupy cell `j + 1` and then, one cell per step, leave from cell
//! `i` with probability `q_ij`. The crate computes the closed-form visit
//! counts, loads and stability region of this system, simulates it exactly
//! from a counter-based uniform field, and checks the sample-path
//! correspondences with its multiclass queueing network formulation.
//!
//! Closed-form routines are generic over [`Scalar`], which is implemented for
//! `f32`, `f64` and exact rationals ([`Exact`]).

pub mod analytics;
pub mod error;
pub mod fluid;
pub mod linalg;
pub mod network;
pub mod params;
pub mod randomness;
pub mod scalar;
pub mod coupling;
pub mod sim_mcn;
pub mod sim_ring;
pub mod slotted;
pub mod stats;
pub mod transient;

pub use error::{Error, Result};
pub use params::{ParameterDocument, ParameterError, ParameterSetting};
pub use randomness::UniformField;
pub use scalar::{ratio, Exact, Scalar};

pub type ParameterSettingF64 = ParameterSetting<f64>;
pub type ParameterSettingF32 = ParameterSetting<f32>;
pub type ExactParameterSetting = ParameterSetting<Exact>;
pub type VisitMatrixF64 = analytics::VisitMatrix<f64>;
pub type ExactVisitMatrix = analytics::VisitMatrix<Exact>;
pub type LoadProfileF64 = analytics::LoadProfile<f64>;
pub type ExactLoadProfile = analytics::LoadProfile<Exact>;
pub type StabilityReportF64 = analytics::StabilityReport<f64>;
pub type ExactStabilityReport = analytics::StabilityReport<Exact>;
pub type StabilityRegionF64 = analytics::StabilityRegion<f64>;
