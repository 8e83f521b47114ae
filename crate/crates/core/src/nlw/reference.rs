use super::drive::Drive;
use super::nonlinearity::Nonlinearity;
use super::solver::solve_nlw;
use crate::error::{Error, Result};
use crate::spectral::ModalState;
use crate::waveop::{PotentialField, SimulationTrace, TimeGrid};
use nalgebra::DVector;

/// Measured boundedness of a reference run: the supremum over nodes of the
/// spectrally weighted position and velocity norms that stand in for the
/// H2 and H1 norms on the truncation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ReferenceReport {
    /// `sup_t (||u(t)||_2 + ||u'(t)||_1)`.
    pub sup_norm: f64,
    pub sup_position_h2: f64,
    pub sup_velocity_h1: f64,
    /// The late-run supremum exceeds the mid-run supremum by more than ten
    /// percent: the trajectory is still growing at the horizon.
    pub growth_detected: bool,
    /// The energy ceiling truncated the run.
    pub stopped_early: bool,
}

/// Runs the nonlinear equation from smooth data and measures the
/// boundedness certificate of the resulting trajectory.
pub fn reference_trajectory(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    init: &ModalState,
    grid: TimeGrid,
    max_energy: f64,
) -> Result<(SimulationTrace, ReferenceReport)> {
    let basis = init.basis();
    let smooth = basis.h_norm(init.position(), 2.0) + basis.h_norm(init.velocity(), 1.0);
    if !smooth.is_finite() {
        return Err(Error::InvalidArgument(
            "initial data has non-finite weighted norms".into(),
        ));
    }
    for k in 0..8 {
        let t = grid.t0 + grid.dt * (grid.len - 1) as f64 * k as f64 / 7.0;
        if drive.at(t).iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "drive is non-finite at t = {t}"
            )));
        }
    }
    let trace = solve_nlw(f, gamma, drive, None, init, grid, max_energy)?;
    let per_node: Vec<f64> = trace
        .states
        .iter()
        .map(|s| basis.h_norm(s.position(), 2.0) + basis.h_norm(s.velocity(), 1.0))
        .collect();
    let sup = per_node.iter().cloned().fold(0.0f64, f64::max);
    let sup_pos = trace
        .states
        .iter()
        .map(|s| basis.h_norm(s.position(), 2.0))
        .fold(0.0f64, f64::max);
    let sup_vel = trace
        .states
        .iter()
        .map(|s| basis.h_norm(s.velocity(), 1.0))
        .fold(0.0f64, f64::max);
    let len = per_node.len();
    // Compare the last quarter against the middle half; a settled
    // trajectory has comparable suprema, a growing one does not.
    let growth_detected = if len >= 8 {
        let mid: f64 = per_node[len / 4..3 * len / 4].iter().cloned().fold(0.0, f64::max);
        let late: f64 = per_node[3 * len / 4..].iter().cloned().fold(0.0, f64::max);
        late > 1.1 * mid + 1e-12
    } else {
        false
    };
    let report = ReferenceReport {
        sup_norm: sup,
        sup_position_h2: sup_pos,
        sup_velocity_h1: sup_vel,
        growth_detected,
        stopped_early: trace.meta.stopped_at.is_some(),
    };
    Ok((trace, report))
}

/// Pointwise derivative field `f'(values)`, one frame of the linearised
/// potential.
pub fn linearize_values(f: &Nonlinearity, values: &DVector<f64>) -> DVector<f64> {
    values.map(|v| f.derivative(v))
}

/// Potential `b(t, x) = f'(u(t, x))` of the linearisation around a stored
/// trajectory, sampled at the trace nodes.
pub fn linearize(f: &Nonlinearity, trace: &SimulationTrace) -> Result<PotentialField> {
    let basis = trace.state(0).basis().clone();
    let frames: Vec<DVector<f64>> = trace
        .states
        .iter()
        .map(|s| linearize_values(f, &basis.synthesize(s.position())))
        .collect();
    PotentialField::sampled(basis, trace.grid.clone(), frames, 1.0)
}
