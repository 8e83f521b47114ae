use super::flow::FreeFlow;
use super::potential::PotentialField;
use super::trace::{SimulationTrace, TimeGrid, TraceMeta};
use crate::error::{Error, Result};
use crate::spectral::{ModalState, SpectralBasis};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// External modal forcing for the linear stepper, sampled at grid nodes.
pub enum Forcing<'a> {
    None,
    /// One modal vector per grid node.
    Nodes(&'a [DVector<f64>]),
    Time(&'a dyn Fn(f64) -> DVector<f64>),
}

impl Forcing<'_> {
    fn add_to(&self, k: usize, t: f64, into: &mut DVector<f64>) {
        match self {
            Forcing::None => {}
            Forcing::Nodes(fs) => *into += &fs[k],
            Forcing::Time(f) => *into += f(t),
        }
    }

    fn check(&self, grid: &TimeGrid, n: usize) -> Result<()> {
        if let Forcing::Nodes(fs) = self {
            if fs.len() != grid.len {
                return Err(Error::GridMismatch(format!(
                    "{} forcing samples for {} grid nodes",
                    fs.len(),
                    grid.len
                )));
            }
            if fs.iter().any(|f| f.len() != n) {
                return Err(Error::GridMismatch("forcing sample length != n_modes".into()));
            }
        }
        Ok(())
    }
}

fn pair_energy(basis: &SpectralBasis, pos: &DVector<f64>, vel: &DVector<f64>) -> f64 {
    let mut e = vel.norm_squared();
    for j in 0..basis.n_modes() {
        e += basis.lambda(j) * pos[j] * pos[j];
    }
    e
}

fn check_setup(
    initial: &ModalState,
    potential: &PotentialField,
    grid: &TimeGrid,
) -> Result<()> {
    if !potential.is_zero() {
        if !potential.basis().same_as(initial.basis()) {
            return Err(Error::BasisMismatch);
        }
        if !potential.covers(grid.t0, grid.end()) {
            return Err(Error::InvalidArgument(format!(
                "potential frames do not cover [{}, {}]",
                grid.t0,
                grid.end()
            )));
        }
    }
    Ok(())
}

/// Second order exponential trapezoidal stepper for
/// `v'' + gamma v' - Lap v + b(t) v = f(t)`.
///
/// Each step applies the exact free flow and closes the trapezoid on the
/// source `g = f - b v`. The velocity injection at the new node leaves the
/// position explicit, so `g` at the new node is available without solving a
/// system; the whole step stays linear in `(initial, f)`, which is what
/// [`lit_transpose`] exploits.
pub fn solve_linear(
    gamma: f64,
    potential: &PotentialField,
    forcing: Forcing,
    initial: &ModalState,
    grid: TimeGrid,
    max_energy: f64,
) -> Result<SimulationTrace> {
    let basis = initial.basis().clone();
    let n = basis.n_modes();
    check_setup(initial, potential, &grid)?;
    forcing.check(&grid, n)?;

    let flow = FreeFlow::new(&basis, gamma, grid.dt);
    let half = 0.5 * grid.dt;
    let mut states = Vec::with_capacity(grid.len);
    states.push(initial.clone());

    let mut pos = initial.position().clone();
    let mut vel = initial.velocity().clone();
    let mut g = DVector::zeros(n);
    forcing.add_to(0, grid.t0, &mut g);
    if !potential.is_zero() {
        g -= potential.apply(grid.t0, &pos);
    }

    for k in 0..grid.steps() {
        let t1 = grid.node(k + 1);
        flow.apply(&mut pos, &mut vel);
        flow.apply_force(&mut pos, &mut vel, &g, half);
        // Position at the new node is now final; rebuild the source there.
        let mut g1 = DVector::zeros(n);
        forcing.add_to(k + 1, t1, &mut g1);
        if !potential.is_zero() {
            g1 -= potential.apply(t1, &pos);
        }
        vel.axpy(half, &g1, 1.0);
        g = g1;

        let e = pair_energy(&basis, &pos, &vel);
        if !e.is_finite() || e > max_energy {
            return Err(Error::Instability { t: t1, energy: e });
        }
        states.push(
            ModalState::from_coeffs(basis.clone(), pos.clone(), vel.clone())
                .expect("vectors sized by the basis"),
        );
    }

    Ok(SimulationTrace {
        grid,
        states,
        controls: None,
        meta: TraceMeta {
            scheme: "lit".into(),
            max_energy,
            stopped_at: None,
            stopped_energy: None,
        },
    })
}

/// Exact transpose of the [`solve_linear`] step map.
///
/// The forward scheme sends `(initial pair, force samples)` linearly to the
/// terminal pair. Given a terminal cotangent this returns the cotangents of
/// the initial pair and of the force sample at every node, so that
/// `<cot, terminal> = <d_pos, pos_0> + <d_vel, vel_0> + sum_k <d_f[k], f_k>`
/// holds to rounding. Used for discrete adjoint sweeps and exact gradients.
pub fn lit_transpose(
    gamma: f64,
    potential: &PotentialField,
    basis: &Arc<SpectralBasis>,
    grid: &TimeGrid,
    terminal_pos: &DVector<f64>,
    terminal_vel: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, Vec<DVector<f64>>) {
    let n = basis.n_modes();
    let flow = FreeFlow::new(basis, gamma, grid.dt);
    let half = 0.5 * grid.dt;

    let mut cpos = terminal_pos.clone();
    let mut cvel = terminal_vel.clone();
    // Pending cotangent of the source sample at the node being processed.
    let mut cg = DVector::zeros(n);
    let mut d_force = vec![DVector::zeros(0); grid.len];

    for k in (0..grid.steps()).rev() {
        let t1 = grid.node(k + 1);
        // Total cotangent of g at node k+1: later-step use plus the
        // half-weighted velocity update of this step.
        cg.axpy(half, &cvel, 1.0);
        d_force[k + 1] = cg.clone();
        // g = f - b v couples back into the position at the same node.
        if !potential.is_zero() {
            cpos -= potential.apply(t1, &cg);
        }
        flow.apply_transpose(&mut cpos, &mut cvel);
        cg = &cvel * half;
    }
    // Node 0: the source is defined from the initial position only.
    d_force[0] = cg.clone();
    if !potential.is_zero() {
        cpos -= potential.apply(grid.t0, &cg);
    }
    (cpos, cvel, d_force)
}

/// [`lit_transpose`] on many terminal cotangents at once.
///
/// `columns` holds one terminal pair per column (rows `0..n` positions,
/// `n..2n` velocities) and is rewritten in place to the initial-pair
/// cotangents. `visit` receives the force-sample cotangent block of every
/// node in reverse order, node 0 last; column `c` of the block belongs to
/// terminal column `c`. Locked to the vector sweep by a unit test.
pub fn lit_transpose_columns(
    gamma: f64,
    potential: &PotentialField,
    basis: &SpectralBasis,
    grid: &TimeGrid,
    columns: &mut DMatrix<f64>,
    mut visit: impl FnMut(usize, f64, &DMatrix<f64>),
) -> Result<()> {
    let n = basis.n_modes();
    if columns.nrows() != 2 * n {
        return Err(Error::InvalidArgument(format!(
            "pair matrix has {} rows, expected {}",
            columns.nrows(),
            2 * n
        )));
    }
    let coeffs: Vec<[f64; 4]> = (0..n)
        .map(|j| super::flow::mode_flow(basis.lambda(j), gamma, grid.dt))
        .collect();
    let half = 0.5 * grid.dt;
    let m = columns.ncols();
    let mut cg = DMatrix::zeros(n, m);

    for k in (0..grid.steps()).rev() {
        let t1 = grid.node(k + 1);
        for c in 0..m {
            for j in 0..n {
                cg[(j, c)] += half * columns[(n + j, c)];
            }
        }
        visit(k + 1, t1, &cg);
        if !potential.is_zero() {
            let bcg = potential.apply_matrix(t1, &cg);
            for c in 0..m {
                for j in 0..n {
                    columns[(j, c)] -= bcg[(j, c)];
                }
            }
        }
        for c in 0..m {
            for (j, a) in coeffs.iter().enumerate() {
                let (p, v) = (columns[(j, c)], columns[(n + j, c)]);
                columns[(j, c)] = a[0] * p + a[2] * v;
                columns[(n + j, c)] = a[1] * p + a[3] * v;
            }
        }
        for c in 0..m {
            for j in 0..n {
                cg[(j, c)] = half * columns[(n + j, c)];
            }
        }
    }
    visit(0, grid.t0, &cg);
    if !potential.is_zero() {
        let bcg = potential.apply_matrix(grid.t0, &cg);
        for c in 0..m {
            for j in 0..n {
                columns[(j, c)] -= bcg[(j, c)];
            }
        }
    }
    Ok(())
}

/// Steps the homogeneous linear flow on every column of a pair matrix
/// (rows `0..n` positions, `n..2n` velocities), visiting each node in order,
/// node 0 included. Columns evolve independently under the same equation
/// `v'' + gamma v' - Lap v + b(t) v = 0`.
pub fn propagate_pair_columns(
    gamma: f64,
    potential: &PotentialField,
    basis: &SpectralBasis,
    grid: &TimeGrid,
    columns: &mut DMatrix<f64>,
    mut visit: impl FnMut(usize, f64, &DMatrix<f64>),
) -> Result<()> {
    let n = basis.n_modes();
    if columns.nrows() != 2 * n {
        return Err(Error::InvalidArgument(format!(
            "pair matrix has {} rows, expected {}",
            columns.nrows(),
            2 * n
        )));
    }
    let coeffs: Vec<[f64; 4]> = (0..n)
        .map(|j| super::flow::mode_flow(basis.lambda(j), gamma, grid.dt))
        .collect();
    let half = 0.5 * grid.dt;
    let m = columns.ncols();

    let mut g = if potential.is_zero() {
        DMatrix::zeros(n, m)
    } else {
        -potential.apply_matrix(grid.t0, &columns.rows(0, n).into_owned())
    };
    visit(0, grid.t0, columns);

    for k in 0..grid.steps() {
        let t1 = grid.node(k + 1);
        for c in 0..m {
            let mut col = columns.column_mut(c);
            for (j, a) in coeffs.iter().enumerate() {
                let (p, v) = (col[j], col[n + j]);
                let gj = g[(j, c)];
                col[j] = a[0] * p + a[1] * v + half * a[1] * gj;
                col[n + j] = a[2] * p + a[3] * v + half * a[3] * gj;
            }
        }
        if potential.is_zero() {
            // g stays zero.
        } else {
            g = -potential.apply_matrix(t1, &columns.rows(0, n).into_owned());
            for c in 0..m {
                let mut col = columns.column_mut(c);
                for j in 0..n {
                    col[n + j] += half * g[(j, c)];
                }
            }
        }
        visit(k + 1, t1, columns);
    }
    Ok(())
}

/// State dependent force injected into the velocity equation.
pub trait VelocityForce {
    fn eval(&self, t: f64, state: &ModalState) -> DVector<f64>;
}

impl<F: Fn(f64, &ModalState) -> DVector<f64>> VelocityForce for F {
    fn eval(&self, t: f64, state: &ModalState) -> DVector<f64> {
        self(t, state)
    }
}

/// Velocity force with a step-start notification, for feedback terms that
/// freeze data at the accepted node.
///
/// Contract of the Heun stepper: per step it calls `begin_step` once with
/// the accepted state, then `eval_stage` exactly twice, first at the step
/// start with the accepted state and then at the step end with the
/// predictor state.
pub trait StagedForce {
    fn begin_step(&mut self, _t: f64, _state: &ModalState) {}
    fn eval_stage(&mut self, t: f64, state: &ModalState) -> DVector<f64>;
}

struct Memoryless<'a>(&'a dyn VelocityForce);

impl StagedForce for Memoryless<'_> {
    fn eval_stage(&mut self, t: f64, state: &ModalState) -> DVector<f64> {
        self.0.eval(t, state)
    }
}

/// Exponential Heun stepper for `v'' + gamma v' - Lap v = F(t, state)`.
///
/// The free flow is exact per mode; the force enters through a
/// predictor-corrector trapezoid, second order for smooth `F`. Multiplicative
/// potentials, nonlinear terms and feedback are all folded into `F` by the
/// caller.
///
/// A mid-run energy ceiling breach is not an error here: the trace is
/// truncated before the rejected node and flagged in `meta.stopped_at` /
/// `meta.stopped_energy`. Only a breach before the first step completes is
/// a hard error, since a one-node trace cannot be represented.
pub fn solve_staged(
    gamma: f64,
    rhs: &mut dyn StagedForce,
    initial: &ModalState,
    grid: TimeGrid,
    max_energy: f64,
) -> Result<SimulationTrace> {
    let basis = initial.basis().clone();
    let e0 = pair_energy(&basis, initial.position(), initial.velocity());
    if !e0.is_finite() || e0 > max_energy {
        return Err(Error::Instability {
            t: grid.t0,
            energy: e0,
        });
    }
    let flow = FreeFlow::new(&basis, gamma, grid.dt);
    let half = 0.5 * grid.dt;
    let mut states = Vec::with_capacity(grid.len);
    states.push(initial.clone());
    let mut state = initial.clone();
    let mut stopped = None;

    for k in 0..grid.steps() {
        let t0 = grid.node(k);
        let t1 = grid.node(k + 1);
        rhs.begin_step(t0, &state);
        let f0 = rhs.eval_stage(t0, &state);

        let mut pos = state.position().clone();
        let mut vel = state.velocity().clone();
        flow.apply(&mut pos, &mut vel);

        // Predictor: full-step propagated injection of the start force.
        let mut ppos = pos.clone();
        let mut pvel = vel.clone();
        flow.apply_force(&mut ppos, &mut pvel, &f0, grid.dt);
        let predicted = ModalState::from_coeffs(basis.clone(), ppos, pvel)
            .expect("vectors sized by the basis");
        let f1 = rhs.eval_stage(t1, &predicted);

        // Corrector: trapezoid on the two force evaluations.
        flow.apply_force(&mut pos, &mut vel, &f0, half);
        vel.axpy(half, &f1, 1.0);

        let e = pair_energy(&basis, &pos, &vel);
        if !e.is_finite() || e > max_energy {
            if k == 0 {
                return Err(Error::Instability { t: t1, energy: e });
            }
            stopped = Some((k + 1, e));
            break;
        }
        state = ModalState::from_coeffs(basis.clone(), pos, vel)
            .expect("vectors sized by the basis");
        states.push(state.clone());
    }

    let grid = match stopped {
        None => grid,
        Some((bad, _)) => TimeGrid::new(grid.t0, grid.dt, bad)?,
    };
    Ok(SimulationTrace {
        grid,
        states,
        controls: None,
        meta: TraceMeta {
            scheme: "heun-exp".into(),
            max_energy,
            stopped_at: stopped.map(|(bad, _)| bad),
            stopped_energy: stopped.map(|(_, e)| e),
        },
    })
}

/// [`solve_staged`] for memoryless forces, with the original hard-error
/// contract: any ceiling breach is an `Instability` error.
pub fn solve_forced(
    gamma: f64,
    rhs: &dyn VelocityForce,
    initial: &ModalState,
    grid: TimeGrid,
    max_energy: f64,
) -> Result<SimulationTrace> {
    let mut shim = Memoryless(rhs);
    let trace = solve_staged(gamma, &mut shim, initial, grid, max_energy)?;
    if let (Some(bad), Some(e)) = (trace.meta.stopped_at, trace.meta.stopped_energy) {
        return Err(Error::Instability {
            t: trace.grid.t0 + bad as f64 * trace.grid.dt,
            energy: e,
        });
    }
    Ok(trace)
}

/// Largest relative defect of the discrete energy balance
/// `dE/dt = -2 gamma |v'|^2 + 2 <F, v'>` over interior nodes, with the time
/// derivative taken by centred differences. `force_at` must reproduce the
/// total velocity-equation force used in the run. Second order in the step,
/// so this is a consistency diagnostic, not a machine-precision identity.
pub fn energy_balance_residual(
    trace: &SimulationTrace,
    gamma: f64,
    force_at: impl Fn(usize, &ModalState) -> DVector<f64>,
) -> f64 {
    let energies = trace.energies();
    let dt = trace.grid.dt;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for k in 1..trace.grid.len - 1 {
        let rate = (energies[k + 1] - energies[k - 1]) / (2.0 * dt);
        let st = trace.state(k);
        let f = force_at(k, st);
        let expected = -2.0 * gamma * st.velocity().norm_squared() + 2.0 * f.dot(st.velocity());
        worst = worst.max((rate - expected).abs());
        scale = scale.max(rate.abs()).max(expected.abs());
    }
    worst / scale.max(1e-12)
}
