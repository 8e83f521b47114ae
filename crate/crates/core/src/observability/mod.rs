//! Observation Gramians, observability constants and null controls for the
//! linearised wave system.
//!
//! Everything is computed in the modal truncation: the anti-damped adjoint
//! flow is sampled along a time grid, its cutoff-weighted position traces
//! form a Gramian, and the observability constant is the reciprocal of the
//! smallest eigenvalue against the fractional pair weight. The truncated
//! variant restricts the data to trajectories ending in a low-mode subspace
//! and projects the observation, which is what the feedback construction
//! actually consumes.

mod gramian;
mod hum;
mod truncated;

pub use gramian::{
    gramian, observability_constant, GramianAssembly, GramianReport, EIGEN_TOL,
};
pub use hum::{control_path_norm, hum_control, HumControl};
pub use truncated::{
    constrained_subspace, select_m, truncated_constant, SelectedTruncation, TruncatedObsReport,
};
