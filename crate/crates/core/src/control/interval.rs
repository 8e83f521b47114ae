use super::space::ControlSpace;
use crate::error::{Error, Result};
use crate::fit::{simpson_weights, trapezoid_weights};
use crate::spectral::ModalState;
use crate::waveop::{
    lit_transpose, lit_transpose_columns, solve_linear, Forcing, PotentialField,
    SimulationTrace, TimeGrid, TraceMeta,
};
use nalgebra::{Cholesky, DMatrix, DVector};

/// One-interval steering problem: drive the low modes of the deviation to
/// (near) zero over `[s, s+T]` at minimal fractional control cost.
///
/// The deviation is split as `v = z + w` with `z` the free damped flow of
/// the initial pair and `w` the controlled remainder driven by
/// `eta - b z`; the objective penalises the control `H^sigma` path norm and,
/// with weight `1/delta_pen`, the energy of the first `n_terminal` modes of
/// `w` at the interval end.
pub struct IntervalProblem<'a> {
    pub potential: &'a PotentialField,
    pub space: &'a ControlSpace,
    pub gamma: f64,
    pub delta_pen: f64,
    pub n_terminal: usize,
    /// Energy ceiling handed to the inner linear solves.
    pub max_energy: f64,
    /// Residual level below which a solution is marked converged.
    pub opt_tol: f64,
}

impl<'a> IntervalProblem<'a> {
    pub fn new(
        potential: &'a PotentialField,
        space: &'a ControlSpace,
        gamma: f64,
        delta_pen: f64,
        n_terminal: usize,
    ) -> Result<IntervalProblem<'a>> {
        let n = space.basis().n_modes();
        if n_terminal == 0 || n_terminal > n {
            return Err(Error::InvalidArgument(format!(
                "terminal projection size {n_terminal} outside 1..={n}"
            )));
        }
        if !(delta_pen > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "terminal penalty weight {delta_pen} not positive"
            )));
        }
        if !potential.is_zero() && !potential.basis().same_as(space.basis()) {
            return Err(Error::BasisMismatch);
        }
        Ok(IntervalProblem {
            potential,
            space,
            gamma,
            delta_pen,
            n_terminal,
            max_energy: f64::INFINITY,
            opt_tol: 1e-6,
        })
    }

    pub(super) fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if grid.steps() < 2 {
            return Err(Error::InvalidArgument(
                "interval grid needs at least two steps".into(),
            ));
        }
        let span = grid.end() - grid.t0;
        let t_min = self.space.basis().domain().t_min();
        // The travel-time floor only binds for a localized cutoff.
        if !self.space.is_uniform_cutoff() && span < t_min * (1.0 - 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "interval length {span} below the observability floor {t_min}"
            )));
        }
        Ok(())
    }
}

/// Optimality-system residuals of a synthesized control, all relative.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OptimalityReport {
    /// Multiplier from the discrete sweep vs the independently solved
    /// adjoint equation, sup over nodes.
    pub adjoint: f64,
    /// Stationarity: fractional weight times zeta against the projected
    /// cutoff-multiplied adjoint.
    pub stationarity: f64,
    /// Terminal pair of the adjoint against the scaled terminal data of `w`.
    pub terminal: f64,
    pub identity_lhs: f64,
    pub identity_rhs: f64,
    /// Relative gap of the energy identity.
    pub identity: f64,
}

impl OptimalityReport {
    pub fn max_residual(&self) -> f64 {
        self.adjoint
            .max(self.stationarity)
            .max(self.terminal)
            .max(self.identity)
    }
}

/// Synthesized control over one interval, self-contained for verification
/// and for handing its terminal state to the next interval.
pub struct IntervalControl {
    pub grid: TimeGrid,
    pub sigma: f64,
    pub init: ModalState,
    /// Control coefficients in the actuated modes, one vector per node.
    pub zeta: Vec<DVector<f64>>,
    /// `H^sigma` path norm of the control.
    pub control_norm: f64,
    pub objective: f64,
    /// Norm of the controlled remainder at the end, one fractional index up.
    pub terminal_w_sigma: f64,
    /// Energy norm of the first `n_terminal` modes of the remainder.
    pub terminal_w_low: f64,
    pub w_terminal: ModalState,
    pub v_terminal: ModalState,
    /// Energy-norm ratio end over start; vacuous (None) from a zero start.
    pub contraction: Option<f64>,
    /// Relative distance between the direct and conjugate-gradient answers.
    pub solver_gap: f64,
    pub cg_iterations: usize,
    pub residuals: OptimalityReport,
    pub converged: bool,
}

impl IntervalControl {
    /// Realised modal force at node `k`.
    pub fn force_at(&self, space: &ControlSpace, k: usize) -> DVector<f64> {
        space.force(&self.zeta[k])
    }
}

/// Control plus the three trajectory pieces it was built from.
pub struct IntervalSolution {
    pub control: IntervalControl,
    pub z_trace: SimulationTrace,
    pub w_trace: SimulationTrace,
    pub v_trace: SimulationTrace,
}

/// `sqrt(lambda_i)` on positions, 1 on velocities: the diagonal factor whose
/// squared image is the penalised terminal energy.
fn terminal_weights(problem: &IntervalProblem) -> DVector<f64> {
    let nt = problem.n_terminal;
    let basis = problem.space.basis();
    DVector::from_fn(2 * nt, |i, _| {
        if i < nt {
            basis.lambda(i).sqrt()
        } else {
            1.0
        }
    })
}

fn weighted_terminal(problem: &IntervalProblem, state: &ModalState) -> DVector<f64> {
    let nt = problem.n_terminal;
    let ew = terminal_weights(problem);
    DVector::from_fn(2 * nt, |i, _| {
        if i < nt {
            ew[i] * state.position()[i]
        } else {
            ew[i] * state.velocity()[i - nt]
        }
    })
}

/// Terminal cotangent pair `scale * E^T u` padded to full mode count.
fn seed_pair(
    problem: &IntervalProblem,
    u: &DVector<f64>,
    scale: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = problem.space.basis().n_modes();
    let nt = problem.n_terminal;
    let ew = terminal_weights(problem);
    let mut pos = DVector::zeros(n);
    let mut vel = DVector::zeros(n);
    for i in 0..nt {
        pos[i] = scale * ew[i] * u[i];
        vel[i] = scale * ew[nt + i] * u[nt + i];
    }
    (pos, vel)
}

fn zero_state(problem: &IntervalProblem) -> ModalState {
    ModalState::zero(problem.space.basis().clone())
}

/// Forcing samples `-b(t_k) z_k` of the remainder equation.
fn remainder_forcing(problem: &IntervalProblem, z_trace: &SimulationTrace) -> Vec<DVector<f64>> {
    let grid = &z_trace.grid;
    (0..grid.len)
        .map(|k| -problem.potential.apply(grid.node(k), z_trace.states[k].position()))
        .collect()
}

/// Cotangent sweep from a weighted terminal seed; returns the per-node
/// gradient of the terminal functional with respect to the control
/// coefficients.
fn control_gradient_from_terminal(
    problem: &IntervalProblem,
    grid: &TimeGrid,
    u: &DVector<f64>,
    scale: f64,
) -> Vec<DVector<f64>> {
    let basis = problem.space.basis();
    let (pos, vel) = seed_pair(problem, u, scale);
    let (_, _, d_force) = lit_transpose(problem.gamma, problem.potential, basis, grid, &pos, &vel);
    d_force.iter().map(|df| problem.space.observe(df)).collect()
}

/// Quadratic objective of a control path against precomputed remainder
/// forcing; also returns the terminal state of `w`.
fn objective_of(
    problem: &IntervalProblem,
    grid: &TimeGrid,
    neg_bz: &[DVector<f64>],
    zetas: &[DVector<f64>],
) -> Result<(f64, ModalState)> {
    let space = problem.space;
    let weights = trapezoid_weights(grid.len, grid.dt);
    let forces: Vec<DVector<f64>> = (0..grid.len)
        .map(|k| &neg_bz[k] + space.force(&zetas[k]))
        .collect();
    let w_trace = solve_linear(
        problem.gamma,
        problem.potential,
        Forcing::Nodes(&forces),
        &zero_state(problem),
        *grid,
        problem.max_energy,
    )?;
    let mut path = 0.0;
    for k in 0..grid.len {
        path += weights[k] * space.cost_norm_sq(&zetas[k]);
    }
    let ew = weighted_terminal(problem, w_trace.last());
    let value = 0.5 * path + ew.norm_squared() / problem.delta_pen;
    Ok((value, w_trace.last().clone()))
}

/// Objective and its exact gradient with respect to every control
/// coefficient, via one forward and one cotangent sweep.
pub fn objective_and_gradient(
    problem: &IntervalProblem,
    init: &ModalState,
    grid: TimeGrid,
    zetas: &[DVector<f64>],
) -> Result<(f64, Vec<DVector<f64>>)> {
    problem.check_grid(&grid)?;
    let space = problem.space;
    let z_trace = solve_linear(
        problem.gamma,
        &PotentialField::zero(space.basis().clone()),
        Forcing::None,
        init,
        grid,
        problem.max_energy,
    )?;
    let neg_bz = remainder_forcing(problem, &z_trace);
    let (value, w_end) = objective_of(problem, &grid, &neg_bz, zetas)?;
    let u = weighted_terminal(problem, &w_end);
    let terminal_grad = control_gradient_from_terminal(problem, &grid, &u, 2.0 / problem.delta_pen);
    let weights = trapezoid_weights(grid.len, grid.dt);
    let grad = (0..grid.len)
        .map(|k| {
            let mut g = terminal_grad[k].clone();
            for j in 0..space.dim() {
                g[j] += weights[k] * space.cost_diag()[j] * zetas[k][j];
            }
            g
        })
        .collect();
    Ok((value, grad))
}

struct ReducedSystem {
    /// `E L R^{-1} L^T E^T`, the terminal-space image of the weighted
    /// control-to-state map.
    gramian: DMatrix<f64>,
}

/// Assembles the reduced normal system by back-propagating every weighted
/// terminal direction at once.
fn assemble_reduced(problem: &IntervalProblem, grid: &TimeGrid) -> Result<ReducedSystem> {
    let space = problem.space;
    let basis = space.basis();
    let n = basis.n_modes();
    let nt = problem.n_terminal;
    let ew = terminal_weights(problem);
    let weights = trapezoid_weights(grid.len, grid.dt);

    let mut cols = DMatrix::zeros(2 * n, 2 * nt);
    for i in 0..nt {
        cols[(i, i)] = ew[i];
        cols[(n + i, nt + i)] = ew[nt + i];
    }
    let mut gramian = DMatrix::zeros(2 * nt, 2 * nt);
    let mut scaled = DMatrix::zeros(space.dim(), 2 * nt);
    lit_transpose_columns(
        problem.gamma,
        problem.potential,
        basis,
        grid,
        &mut cols,
        |k, _t, blk| {
            space.injection().tr_mul_to(blk, &mut scaled);
            for j in 0..space.dim() {
                let f = (1.0 / (weights[k] * space.cost_diag()[j])).sqrt();
                for c in 0..2 * nt {
                    scaled[(j, c)] *= f;
                }
            }
            gramian.gemm_tr(1.0, &scaled, &scaled, 1.0);
        },
    )?;
    Ok(ReducedSystem { gramian })
}

/// Preconditioned conjugate gradients on the full control-coefficient
/// Hessian, with the fractional path weight as preconditioner. The Hessian
/// is that weight plus a rank-limited terminal term, so the iteration count
/// stays near twice the terminal dimension.
fn cg_solve(
    problem: &IntervalProblem,
    grid: &TimeGrid,
    rhs: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, usize)> {
    let space = problem.space;
    let m = space.dim();
    let weights = trapezoid_weights(grid.len, grid.dt);
    let dot = |a: &[DVector<f64>], b: &[DVector<f64>]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
    };
    let precond = |r: &[DVector<f64>]| -> Vec<DVector<f64>> {
        r.iter()
            .enumerate()
            .map(|(k, rk)| {
                DVector::from_fn(m, |j, _| rk[j] / (weights[k] * space.cost_diag()[j]))
            })
            .collect()
    };
    let apply_h = |x: &[DVector<f64>]| -> Result<Vec<DVector<f64>>> {
        let forces: Vec<DVector<f64>> = x.iter().map(|xk| space.force(xk)).collect();
        let w_trace = solve_linear(
            problem.gamma,
            problem.potential,
            Forcing::Nodes(&forces),
            &zero_state(problem),
            *grid,
            problem.max_energy,
        )?;
        let u = weighted_terminal(problem, w_trace.last());
        let terminal = control_gradient_from_terminal(problem, grid, &u, 2.0 / problem.delta_pen);
        Ok((0..grid.len)
            .map(|k| {
                let mut g = terminal[k].clone();
                for j in 0..m {
                    g[j] += weights[k] * space.cost_diag()[j] * x[k][j];
                }
                g
            })
            .collect())
    };

    let mut x: Vec<DVector<f64>> = vec![DVector::zeros(m); grid.len];
    let mut r: Vec<DVector<f64>> = rhs.to_vec();
    let mut z = precond(&r);
    let mut rz = dot(&r, &z);
    let target = rz.sqrt() * 1e-12;
    if rz.sqrt() == 0.0 {
        return Ok((x, 0));
    }
    let mut p = z.clone();
    let max_iter = 4 * (2 * problem.n_terminal + 1) + 20;
    for it in 0..max_iter {
        let hp = apply_h(&p)?;
        let php = dot(&p, &hp);
        if php <= 0.0 {
            return Err(Error::Singular(
                "control Hessian lost positivity in conjugate gradients".into(),
            ));
        }
        let alpha = rz / php;
        for k in 0..grid.len {
            x[k].axpy(alpha, &p[k], 1.0);
            r[k].axpy(-alpha, &hp[k], 1.0);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        if rz_new.sqrt() <= target {
            return Ok((x, it + 1));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..grid.len {
            p[k] = &z[k] + &p[k] * beta;
        }
    }
    Err(Error::NotConverged {
        what: "interval-control conjugate gradients".into(),
        residual: rz.sqrt(),
        tol: target,
    })
}

/// Residuals of the continuous optimality system evaluated on the discrete
/// solution: the adjoint is solved independently backward from the scaled
/// terminal data of `w`, then compared against the sweep multiplier; the
/// energy identity is integrated with Simpson weights.
fn optimality_residuals(
    problem: &IntervalProblem,
    grid: &TimeGrid,
    z_trace: &SimulationTrace,
    w_end: &ModalState,
    zetas: &[DVector<f64>],
) -> Result<OptimalityReport> {
    let space = problem.space;
    let basis = space.basis();
    let n = basis.n_modes();
    let nt = problem.n_terminal;
    let scale = 2.0 / problem.delta_pen;
    let weights = trapezoid_weights(grid.len, grid.dt);

    // Terminal data of the adjoint from the terminal pair of w.
    let mut q_end = DVector::zeros(n);
    let mut qdot_end = DVector::zeros(n);
    for i in 0..nt {
        q_end[i] = -scale * w_end.velocity()[i];
        qdot_end[i] =
            -scale * (-basis.lambda(i) * w_end.position()[i] + problem.gamma * w_end.velocity()[i]);
    }

    // Independent route: reverse time so the anti-damped adjoint becomes a
    // damped solve with reflected potential, then read the trace backward.
    let rev_grid = TimeGrid::new(0.0, grid.dt, grid.len)?;
    let rev_pot = problem.potential.time_reversed(grid.end());
    let q_init = ModalState::from_coeffs(basis.clone(), q_end.clone(), -&qdot_end)?;
    let rev_trace = solve_linear(
        problem.gamma,
        &rev_pot,
        Forcing::None,
        &q_init,
        rev_grid,
        f64::INFINITY,
    )?;
    let q_at = |k: usize| rev_trace.states[grid.len - 1 - k].position();

    // Sweep route: the discrete multiplier is the force cotangent of the
    // terminal seed, normalised by the path quadrature weight.
    let u = weighted_terminal(problem, w_end);
    let (pos, vel) = seed_pair(problem, &u, -scale);
    let (_, _, d_force) = lit_transpose(problem.gamma, problem.potential, basis, grid, &pos, &vel);

    let mut q_scale: f64 = 0.0;
    for k in 0..grid.len {
        q_scale = q_scale.max(q_at(k).norm());
    }
    let mut adjoint: f64 = 0.0;
    for k in 0..grid.len {
        let diff = (&d_force[k] / weights[k]) - q_at(k);
        adjoint = adjoint.max(diff.norm());
    }
    if q_scale > 0.0 {
        adjoint /= q_scale;
    }

    // Stationarity against the independent adjoint.
    let mut stat_num: f64 = 0.0;
    let mut stat_den: f64 = 0.0;
    for k in 0..grid.len {
        let proj = space.observe(q_at(k));
        let mut r = proj.clone();
        for j in 0..space.dim() {
            r[j] = space.cost_diag()[j] * zetas[k][j] - proj[j];
        }
        stat_num = stat_num.max(r.norm());
        stat_den = stat_den.max(proj.norm());
    }
    let stationarity = if stat_den > 0.0 { stat_num / stat_den } else { stat_num };

    // Terminal conditions, checked on the adjoint trace start (= time T).
    let q_horizon = rev_trace.states[0].position();
    let qdot_horizon = -rev_trace.states[0].velocity();
    let term_scale = (q_end.norm() + qdot_end.norm()).max(1e-300);
    let terminal =
        ((q_horizon - &q_end).norm() + (qdot_horizon - qdot_end).norm()) / term_scale;

    // Energy identity: penalised terminal energy plus the dual control norm
    // balances the work of the shifted forcing against the adjoint.
    let simpson = simpson_weights(grid.len, grid.dt);
    let mut dual_norm = 0.0;
    let mut work = 0.0;
    for k in 0..grid.len {
        let proj = space.observe(q_at(k));
        let mut s = 0.0;
        for j in 0..space.dim() {
            s += proj[j] * proj[j] / space.cost_diag()[j];
        }
        dual_norm += simpson[k] * s;
        let bz = problem
            .potential
            .apply(grid.node(k), z_trace.states[k].position());
        work += simpson[k] * bz.dot(q_at(k));
    }
    let mut terminal_energy = 0.0;
    for i in 0..nt {
        terminal_energy += basis.lambda(i) * w_end.position()[i] * w_end.position()[i]
            + w_end.velocity()[i] * w_end.velocity()[i];
    }
    let identity_lhs = scale * terminal_energy + dual_norm;
    let identity_rhs = work;
    let denom = identity_lhs.abs().max(identity_rhs.abs());
    let identity = if denom > 0.0 {
        (identity_lhs - identity_rhs).abs() / denom
    } else {
        0.0
    };

    Ok(OptimalityReport {
        adjoint,
        stationarity,
        terminal,
        identity_lhs,
        identity_rhs,
        identity,
    })
}

/// Solves the one-interval steering problem.
///
/// The normal equations are solved exactly through their terminal-space
/// reduction (the Hessian is the fractional path weight plus a term of rank
/// twice `n_terminal`), then revalidated by preconditioned conjugate
/// gradients on the full coefficient space; the relative gap between the
/// two answers is recorded.
pub fn synthesize_interval_control(
    problem: &IntervalProblem,
    init: &ModalState,
    grid: TimeGrid,
) -> Result<IntervalSolution> {
    problem.check_grid(&grid)?;
    let space = problem.space;
    let basis = space.basis();
    if !init.basis().same_as(basis) {
        return Err(Error::BasisMismatch);
    }
    let m = space.dim();
    let weights = trapezoid_weights(grid.len, grid.dt);

    let z_trace = solve_linear(
        problem.gamma,
        &PotentialField::zero(basis.clone()),
        Forcing::None,
        init,
        grid,
        problem.max_energy,
    )?;

    let (zetas, solver_gap, cg_iterations) = if problem.potential.is_zero() {
        // No potential: the remainder equation is unforced, the optimum is
        // the zero control.
        (vec![DVector::zeros(m); grid.len], 0.0, 0)
    } else {
        let neg_bz = remainder_forcing(problem, &z_trace);
        let w0_trace = solve_linear(
            problem.gamma,
            problem.potential,
            Forcing::Nodes(&neg_bz),
            &zero_state(problem),
            grid,
            problem.max_energy,
        )?;
        let c = weighted_terminal(problem, w0_trace.last());

        let reduced = assemble_reduced(problem, &grid)?;
        let scale = 2.0 / problem.delta_pen;
        let nt2 = 2 * problem.n_terminal;
        let system = DMatrix::identity(nt2, nt2) + &reduced.gramian * scale;
        let chol = Cholesky::new(system).ok_or_else(|| {
            Error::Singular("reduced interval-control system not positive definite".into())
        })?;
        let u = chol.solve(&c);

        let raw = control_gradient_from_terminal(problem, &grid, &u, -scale);
        let zetas: Vec<DVector<f64>> = raw
            .iter()
            .enumerate()
            .map(|(k, g)| {
                DVector::from_fn(m, |j, _| g[j] / (weights[k] * space.cost_diag()[j]))
            })
            .collect();

        // Independent iterative route on the same normal equations.
        let u0 = weighted_terminal(problem, w0_trace.last());
        let rhs = control_gradient_from_terminal(problem, &grid, &u0, -scale);
        let (zetas_cg, iters) = cg_solve(problem, &grid, &rhs)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..grid.len {
            for j in 0..m {
                let w = weights[k] * space.cost_diag()[j];
                let d = zetas[k][j] - zetas_cg[k][j];
                num += w * d * d;
                den += w * zetas[k][j] * zetas[k][j];
            }
        }
        let gap = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
        (zetas, gap, iters)
    };

    // Realised remainder and full deviation.
    let neg_bz = remainder_forcing(problem, &z_trace);
    let forces: Vec<DVector<f64>> = (0..grid.len)
        .map(|k| &neg_bz[k] + space.force(&zetas[k]))
        .collect();
    let w_trace = solve_linear(
        problem.gamma,
        problem.potential,
        Forcing::Nodes(&forces),
        &zero_state(problem),
        grid,
        problem.max_energy,
    )?;
    let etas: Vec<DVector<f64>> = zetas.iter().map(|z| space.force(z)).collect();
    let mut v_states = Vec::with_capacity(grid.len);
    let mut max_energy: f64 = 0.0;
    for k in 0..grid.len {
        let mut v = z_trace.states[k].clone();
        v.add_scaled(&w_trace.states[k], 1.0);
        max_energy = max_energy.max(v.pair_norm(1.0).powi(2));
        v_states.push(v);
    }
    let v_trace = SimulationTrace {
        grid,
        states: v_states,
        controls: Some(etas),
        meta: TraceMeta {
            scheme: "lit".into(),
            max_energy,
            stopped_at: None,
            stopped_energy: None,
        },
    };

    let mut path = 0.0;
    for k in 0..grid.len {
        path += weights[k] * space.cost_norm_sq(&zetas[k]);
    }
    let w_end = w_trace.last().clone();
    let ew = weighted_terminal(problem, &w_end);
    let objective = 0.5 * path + ew.norm_squared() / problem.delta_pen;

    let residuals = optimality_residuals(problem, &grid, &z_trace, &w_end, &zetas)?;
    let init_norm = init.pair_norm(1.0);
    let contraction = if init_norm > 0.0 {
        Some(v_trace.last().pair_norm(1.0) / init_norm)
    } else {
        None
    };
    let converged = solver_gap <= 1e-8 && residuals.max_residual() <= problem.opt_tol;

    let control = IntervalControl {
        grid,
        sigma: space.sigma(),
        init: init.clone(),
        control_norm: path.sqrt(),
        objective,
        terminal_w_sigma: w_end.pair_norm(1.0 + space.sigma()),
        terminal_w_low: w_end.project(problem.n_terminal).pair_norm(1.0),
        w_terminal: w_end,
        v_terminal: v_trace.last().clone(),
        contraction,
        solver_gap,
        cg_iterations,
        residuals,
        converged,
        zeta: zetas,
    };
    Ok(IntervalSolution {
        control,
        z_trace,
        w_trace,
        v_trace,
    })
}

/// Recomputes the optimality residuals of a stored control from scratch:
/// free flow of its initial pair, remainder under the stored coefficients,
/// independent adjoint solve, identity quadrature.
pub fn verify_optimality(
    problem: &IntervalProblem,
    control: &IntervalControl,
) -> Result<OptimalityReport> {
    let grid = control.grid;
    problem.check_grid(&grid)?;
    if control.zeta.len() != grid.len {
        return Err(Error::GridMismatch(format!(
            "{} control samples for {} nodes",
            control.zeta.len(),
            grid.len
        )));
    }
    let z_trace = solve_linear(
        problem.gamma,
        &PotentialField::zero(problem.space.basis().clone()),
        Forcing::None,
        &control.init,
        grid,
        problem.max_energy,
    )?;
    let neg_bz = remainder_forcing(problem, &z_trace);
    let (_, w_end) = objective_of(problem, &grid, &neg_bz, &control.zeta)?;
    optimality_residuals(problem, &grid, &z_trace, &w_end, &control.zeta)
}

/// Dense assembly of the normal equations, column by column; usable only
/// when `modes x nodes` is small. Kept as an oracle for the two production
/// solvers.
pub fn dense_normal_system(
    problem: &IntervalProblem,
    init: &ModalState,
    grid: TimeGrid,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    problem.check_grid(&grid)?;
    let space = problem.space;
    let m = space.dim();
    let dim = m * grid.len;
    if dim > 800 {
        return Err(Error::InvalidArgument(format!(
            "dense normal system of size {dim} refused"
        )));
    }
    let weights = trapezoid_weights(grid.len, grid.dt);
    let z_trace = solve_linear(
        problem.gamma,
        &PotentialField::zero(space.basis().clone()),
        Forcing::None,
        init,
        grid,
        problem.max_energy,
    )?;
    let neg_bz = remainder_forcing(problem, &z_trace);

    let apply = |x: &[DVector<f64>]| -> Result<Vec<DVector<f64>>> {
        let forces: Vec<DVector<f64>> = x.iter().map(|xk| space.force(xk)).collect();
        let w_trace = solve_linear(
            problem.gamma,
            problem.potential,
            Forcing::Nodes(&forces),
            &zero_state(problem),
            grid,
            problem.max_energy,
        )?;
        let u = weighted_terminal(problem, w_trace.last());
        let terminal =
            control_gradient_from_terminal(problem, &grid, &u, 2.0 / problem.delta_pen);
        Ok((0..grid.len)
            .map(|k| {
                let mut g = terminal[k].clone();
                for j in 0..m {
                    g[j] += weights[k] * space.cost_diag()[j] * x[k][j];
                }
                g
            })
            .collect())
    };

    let mut h = DMatrix::zeros(dim, dim);
    let mut unit = vec![DVector::zeros(m); grid.len];
    for col in 0..dim {
        unit[col / m][col % m] = 1.0;
        let hu = apply(&unit)?;
        for k in 0..grid.len {
            for j in 0..m {
                h[(k * m + j, col)] = hu[k][j];
            }
        }
        unit[col / m][col % m] = 0.0;
    }

    let w0_trace = solve_linear(
        problem.gamma,
        problem.potential,
        Forcing::Nodes(&neg_bz),
        &zero_state(problem),
        grid,
        problem.max_energy,
    )?;
    let u0 = weighted_terminal(problem, w0_trace.last());
    let raw = control_gradient_from_terminal(problem, &grid, &u0, -2.0 / problem.delta_pen);
    let mut rhs = DVector::zeros(dim);
    for k in 0..grid.len {
        for j in 0..m {
            rhs[k * m + j] = raw[k][j];
        }
    }
    Ok((h, rhs))
}
