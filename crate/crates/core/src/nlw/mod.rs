//! Nonlinear wave dynamics: pseudo-spectral integration of the cubic-type
//! equation, bounded reference trajectories and their linearisation,
//! gain-coupled closed-loop runs with decay verification, and the
//! contraction probe for the difference fixed-point map.

mod closed_loop;
mod drive;
mod nonlinearity;
mod picard;
mod reference;
mod solver;

pub use closed_loop::{
    closed_loop, find_epsilon, open_loop_baseline, ClosedLoopOptions, ClosedLoopResult,
    EpsilonSearch, EpsilonTrial, GainCoupling,
};
pub use drive::Drive;
pub use nonlinearity::{validate_nonlinearity, Nonlinearity, NonlinearityCertificate};
pub use picard::{picard_probe, PicardProbe};
pub use reference::{linearize, linearize_values, reference_trajectory, ReferenceReport};
pub use solver::{nonlinear_energy, nonlinear_energy_balance, project_nonlinearity, solve_nlw};
