//! Spectral Galerkin toolkit for stabilising a damped semi-linear wave
//! equation to a moving reference trajectory by localised finite-dimensional
//! feedback.
//!
//! The crate is organised along the pipeline:
//!
//! * [`spectral`]: Dirichlet eigenbasis on box domains, fractional norms,
//!   collar cutoffs, spectral-multiplier commutator scans.
//! * [`waveop`]: exact per-mode flows, exponential time stepping for the
//!   linearised equation, energy bookkeeping.
//! * [`observability`]: observation Gramians, truncated observability with
//!   mode-count selection, and minimum-norm steering for the free wave.
//! * [`control`]: finite-horizon interval control with terminal projection
//!   penalty, interval concatenation, and the weighted Riccati feedback law.
//! * [`nlw`]: the cubic-type nonlinear equation, reference trajectories,
//!   linearisation, closed-loop runs, and the contraction probe.

pub mod control;
pub mod error;
pub mod fit;
pub mod nlw;
pub mod observability;
pub mod scenario;
pub mod spectral;
pub mod waveop;

pub use error::{Error, Result};
