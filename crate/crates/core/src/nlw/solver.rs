use super::drive::Drive;
use super::nonlinearity::Nonlinearity;
use crate::error::{Error, Result};
use crate::spectral::{ModalState, SpectralBasis};
use crate::waveop::{solve_staged, SimulationTrace, StagedForce, TimeGrid};
use nalgebra::DVector;

/// Degrees up to this are integrated exactly by the basis quadrature grid
/// (sized for triple products with a two-fold frequency margin).
pub(crate) const MAX_EXACT_DEGREE: usize = 7;

/// Galerkin projection of `f(u)`: synthesise `u` on the collocation grid,
/// apply `f` pointwise, project back. Exact for polynomial `f` up to the
/// degree cap, which is the dealiasing guarantee.
pub fn project_nonlinearity(
    f: &Nonlinearity,
    basis: &SpectralBasis,
    position: &DVector<f64>,
) -> DVector<f64> {
    let mut vals = basis.synthesize(position);
    for v in vals.iter_mut() {
        *v = f.eval(*v);
    }
    basis.project_values(&vals)
}

fn check_dims(f: &Nonlinearity, n: usize, drive: &Drive, eta: Option<&Drive>) -> Result<()> {
    if f.degree() > MAX_EXACT_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "nonlinearity degree {} exceeds the dealiasing cap {MAX_EXACT_DEGREE} \
             of the collocation grid",
            f.degree()
        )));
    }
    if drive.dim() != n {
        return Err(Error::GridMismatch(format!(
            "drive has {} coefficients, basis has {n}",
            drive.dim()
        )));
    }
    if let Some(e) = eta {
        if e.dim() != n {
            return Err(Error::GridMismatch(format!(
                "control path has {} coefficients, basis has {n}",
                e.dim()
            )));
        }
    }
    Ok(())
}

struct NlwForce<'a> {
    f: &'a Nonlinearity,
    basis: &'a SpectralBasis,
    drive: &'a Drive,
    eta: Option<&'a Drive>,
}

impl StagedForce for NlwForce<'_> {
    fn eval_stage(&mut self, t: f64, state: &ModalState) -> DVector<f64> {
        let mut force = self.drive.at(t);
        if let Some(e) = self.eta {
            force += e.at(t);
        }
        force -= project_nonlinearity(self.f, self.basis, state.position());
        force
    }
}

/// Integrates `u'' + gamma u' - Lap u + f(u) = h + eta` pseudo-spectrally.
///
/// An energy ceiling breach after the first step returns the truncated
/// trace with `meta.stopped_at` set rather than an error; the nonlinear
/// problem is allowed to escape in finite time and callers inspect the
/// flag.
pub fn solve_nlw(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    eta: Option<&Drive>,
    init: &ModalState,
    grid: TimeGrid,
    max_energy: f64,
) -> Result<SimulationTrace> {
    let basis = init.basis().clone();
    check_dims(f, basis.n_modes(), drive, eta)?;
    let mut rhs = NlwForce {
        f,
        basis: &basis,
        drive,
        eta,
    };
    solve_staged(gamma, &mut rhs, init, grid, max_energy)
}

/// Conserved quantity of the undamped unforced flow:
/// `E_u + 2 int F(u) dx` with `E_u` the linear pair energy.
pub fn nonlinear_energy(f: &Nonlinearity, state: &ModalState) -> f64 {
    let basis = state.basis();
    let vals = basis.synthesize(state.position());
    let mut potential = 0.0;
    for (v, w) in vals.iter().zip(basis.quad_weights().iter()) {
        potential += w * f.energy_density(*v);
    }
    let e = state.pair_norm(1.0);
    e * e + 2.0 * potential
}

/// Largest relative defect of the integrated energy balance
/// `H(t) - H(0) = int_0^t (-2 gamma |u'|^2 + 2 (h + eta, u'))`
/// with `H = E_u + 2 int F(u)`, trapezoid in time. Second order.
pub fn nonlinear_energy_balance(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    eta: Option<&Drive>,
    trace: &SimulationTrace,
) -> f64 {
    let h0 = nonlinear_energy(f, trace.state(0));
    let mut scale = h0.abs();
    let rate = |k: usize| {
        let s = trace.state(k);
        let t = trace.grid.node(k);
        let mut g = drive.at(t);
        if let Some(e) = eta {
            g += e.at(t);
        }
        -2.0 * gamma * s.velocity().norm_squared() + 2.0 * g.dot(s.velocity())
    };
    let mut integral = 0.0;
    let mut prev_rate = rate(0);
    let mut worst = 0.0f64;
    for k in 1..trace.grid.len {
        let r = rate(k);
        integral += 0.5 * trace.grid.dt * (prev_rate + r);
        prev_rate = r;
        let hk = nonlinear_energy(f, trace.state(k));
        scale = scale.max(hk.abs()).max(integral.abs());
        let defect = (hk - h0 - integral).abs();
        worst = worst.max(defect);
    }
    worst / scale.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DomainSpec;
    use crate::waveop::{solve_linear, Forcing, PotentialField};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn basis(n: usize) -> Arc<SpectralBasis> {
        Arc::new(SpectralBasis::build(DomainSpec::interval(PI, -1.0, 0.4).unwrap(), n).unwrap())
    }

    #[test]
    fn zero_nonlinearity_matches_linear_solver() {
        let basis = basis(6);
        let n = basis.n_modes();
        let mut init = ModalState::zero(basis.clone());
        init.position_mut()[0] = 0.3;
        init.velocity_mut()[2] = -0.2;
        let grid = TimeGrid::span(0.0, 4.0, 0.01).unwrap();
        let coeffs = DVector::from_fn(n, |j, _| if j == 1 { 0.5 } else { 0.0 });
        let drive = Drive::profile(coeffs.clone(), |t: f64| (0.7 * t).cos());
        let nl = solve_nlw(
            &Nonlinearity::zero(),
            0.2,
            &drive,
            None,
            &init,
            grid.clone(),
            1e8,
        )
        .unwrap();
        let closure = |t: f64| &coeffs * (0.7f64 * t).cos();
        let lin = solve_linear(
            0.2,
            &PotentialField::zero(basis.clone()),
            Forcing::Time(&closure),
            &init,
            grid,
            1e8,
        )
        .unwrap();
        for k in 0..nl.grid.len {
            let d = nl.state(k).difference(lin.state(k)).unwrap();
            assert!(d.pair_norm(1.0) <= 1e-10, "node {k}: {}", d.pair_norm(1.0));
        }
    }

    #[test]
    fn undamped_cubic_conserves_hamiltonian() {
        let basis = basis(8);
        let mut init = ModalState::zero(basis.clone());
        init.position_mut()[0] = 0.2;
        init.position_mut()[2] = -0.1;
        init.velocity_mut()[1] = 0.15;
        // Ten periods of the slowest mode (omega_1 = 1 on (0, pi)).
        let grid = TimeGrid::span(0.0, 10.0 * 2.0 * PI, 1.0 / 640.0).unwrap();
        let f = Nonlinearity::cubic();
        let run = solve_nlw(&f, 0.0, &Drive::zero(8), None, &init, grid, 1e8).unwrap();
        let h0 = nonlinear_energy(&f, run.state(0));
        let mut worst = 0.0f64;
        for k in 0..run.grid.len {
            worst = worst.max((nonlinear_energy(&f, run.state(k)) - h0).abs());
        }
        assert!(worst / h0 <= 1e-6, "relative drift {}", worst / h0);
    }

    #[test]
    fn energy_balance_holds_with_damping_and_forcing() {
        let basis = basis(6);
        let n = basis.n_modes();
        let mut init = ModalState::zero(basis.clone());
        init.position_mut()[1] = 0.4;
        let drive = Drive::profile(
            DVector::from_fn(n, |j, _| 0.3 / (1 + j) as f64),
            |t: f64| (1.3 * t).sin(),
        );
        let eta = Drive::profile(
            DVector::from_fn(n, |j, _| if j == 0 { 0.2 } else { 0.0 }),
            |t: f64| (-0.1 * t).exp(),
        );
        let f = Nonlinearity::cubic();
        let grid = TimeGrid::span(0.0, 6.0, 0.002).unwrap();
        let run = solve_nlw(&f, 0.3, &drive, Some(&eta), &init, grid, 1e8).unwrap();
        let defect = nonlinear_energy_balance(&f, 0.3, &drive, Some(&eta), &run);
        assert!(defect <= 5e-6, "balance defect {defect}");
        // The defect shrinks by about 4x when the step halves.
        let grid2 = TimeGrid::span(0.0, 6.0, 0.001).unwrap();
        let run2 = solve_nlw(&f, 0.3, &drive, Some(&eta), &init, grid2, 1e8).unwrap();
        let defect2 = nonlinear_energy_balance(&f, 0.3, &drive, Some(&eta), &run2);
        assert!(defect2 <= 0.35 * defect, "defects {defect} -> {defect2}");
    }

    #[test]
    fn manufactured_single_mode_solution_converges_at_order_two() {
        let basis = basis(4);
        let n = basis.n_modes();
        let gamma = 0.25;
        let lambda1 = basis.lambda(0);
        let f = Nonlinearity::cubic();
        // u*(t) = cos(t) e_1; the forcing compensates the Galerkin cubic
        // term exactly, so the only error is time discretisation.
        let e1_cubed = {
            let mut vals = basis.synthesize(&DVector::from_fn(n, |j, _| f64::from(j == 0)));
            for v in vals.iter_mut() {
                *v = *v * *v * *v;
            }
            basis.project_values(&vals)
        };
        let mut init = ModalState::zero(basis.clone());
        init.position_mut()[0] = 1.0;
        let mut errors = Vec::new();
        for &dt in &[0.02, 0.01, 0.005] {
            let grid = TimeGrid::span(0.0, 3.0, dt).unwrap();
            let cubed = e1_cubed.clone();
            let drive = Drive::time_fn(n, move |t: f64| {
                let mut h = DVector::zeros(n);
                h[0] = (lambda1 - 1.0) * t.cos() - gamma * t.sin();
                h += &cubed * t.cos().powi(3);
                h
            });
            let run = solve_nlw(&f, gamma, &drive, None, &init, grid, 1e8).unwrap();
            let mut worst = 0.0f64;
            for k in 0..run.grid.len {
                let t = run.grid.node(k);
                let mut exact = ModalState::zero(basis.clone());
                exact.position_mut()[0] = t.cos();
                exact.velocity_mut()[0] = -t.sin();
                let d = run.state(k).difference(&exact).unwrap();
                worst = worst.max(d.pair_norm(1.0));
            }
            errors.push(worst);
        }
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        assert!(order1 >= 1.8, "orders {order1} {order2}, errors {errors:?}");
        assert!(order2 >= 1.8, "orders {order1} {order2}, errors {errors:?}");
    }

    #[test]
    fn focusing_blowup_is_flagged_with_partial_trace() {
        let basis = basis(4);
        let mut init = ModalState::zero(basis.clone());
        init.position_mut()[0] = 2.0;
        init.velocity_mut()[0] = 3.0;
        let f = Nonlinearity::polynomial("focusing", &[0.0, 0.0, -1.0]);
        let grid = TimeGrid::span(0.0, 20.0, 0.005).unwrap();
        let run = solve_nlw(&f, 0.0, &Drive::zero(4), None, &init, grid, 1e4).unwrap();
        let bad = run.meta.stopped_at.expect("focusing run must hit the ceiling");
        assert_eq!(run.grid.len, bad);
        assert_eq!(run.states.len(), bad);
        assert!(run.grid.end() < 20.0);
        assert!(run.meta.stopped_energy.unwrap() > 1e4);
        for e in run.energies() {
            assert!(e.is_finite() && e <= 1e4);
        }
    }

    #[test]
    fn degree_cap_enforced() {
        let basis = basis(4);
        let init = ModalState::zero(basis);
        let mut coeffs = vec![0.0; 9];
        coeffs[8] = 1.0;
        let f = Nonlinearity::polynomial("ninth", &coeffs);
        let grid = TimeGrid::span(0.0, 1.0, 0.1).unwrap();
        let err = solve_nlw(&f, 0.0, &Drive::zero(4), None, &init, grid, 1e8).unwrap_err();
        assert!(err.to_string().contains("dealiasing"), "{err}");
    }
}
