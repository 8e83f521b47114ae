//! Linear damped wave propagation in modal coordinates.
//!
//! The free flow of every mode is a 2x2 matrix exponential with a closed
//! form, so the steppers here advance the stiff part exactly and only
//! discretise sources: multiplicative potentials, controls and nonlinear
//! residuals. Two schemes are provided. The trapezoidal one stays linear in
//! its inputs and has an exact transpose for adjoint sweeps; the Heun one
//! accepts state dependent forces for feedback and nonlinear runs.

mod flow;
mod potential;
mod solver;
mod trace;

pub use flow::{free_propagate, mode_flow, FreeFlow};
pub use potential::PotentialField;
pub use solver::{
    energy_balance_residual, lit_transpose, lit_transpose_columns, propagate_pair_columns,
    solve_forced, solve_linear, solve_staged,
    Forcing, StagedForce, VelocityForce,
};
pub use trace::{SimulationTrace, TimeGrid, TraceMeta};

use crate::spectral::ModalState;

/// Linear energy `sum_j v'_j^2 + lambda_j v_j^2`, the squared pair norm at
/// exponent 1.
pub fn energy(state: &ModalState) -> f64 {
    let mut e = state.velocity().norm_squared();
    let basis = state.basis();
    for j in 0..basis.n_modes() {
        let p = state.position()[j];
        e += basis.lambda(j) * p * p;
    }
    e
}

/// Energy with the cross term `alpha sum_j v_j v'_j` added. For
/// `0 < alpha < sqrt(lambda_1)` this is equivalent to [`energy`] and decays
/// monotonically along damped free flows with suitable `alpha`.
pub fn modified_energy(state: &ModalState, alpha: f64) -> f64 {
    energy(state) + alpha * state.position().dot(state.velocity())
}
