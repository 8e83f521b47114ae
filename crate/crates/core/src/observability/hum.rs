use super::gramian::{GramianAssembly, EIGEN_TOL};
use crate::error::{Error, Result};
use crate::fit::trapezoid_weights;
use crate::spectral::{CutoffField, ModalState, SpectralBasis};
use crate::waveop::{free_propagate, mode_flow, solve_linear, Forcing, PotentialField, TimeGrid};
use nalgebra::{DMatrix, DVector};

/// Minimal-norm distributed control driving the free wave to rest.
#[derive(Debug, Clone)]
pub struct HumControl {
    pub grid: TimeGrid,
    pub sigma: f64,
    /// Modal control coefficients at each node; the force injected into the
    /// velocity equation is `chi * zeta`.
    pub zeta: Vec<DVector<f64>>,
    /// Control size in the fractional time-space norm used by the cost.
    pub control_norm: f64,
    /// Terminal pair norm after re-simulating with the control, relative to
    /// the initial one.
    pub steer_residual: f64,
    /// Duality certificate: `control_norm` never exceeds this.
    pub norm_bound: f64,
}

/// Weighted path norm `sqrt(sum_k w_k |zeta_k|_sigma^2)` with trapezoidal
/// time weights.
pub fn control_path_norm(
    basis: &SpectralBasis,
    grid: &TimeGrid,
    zeta: &[DVector<f64>],
    sigma: f64,
) -> f64 {
    let w = trapezoid_weights(grid.len, grid.dt);
    let mut total = 0.0;
    for (k, z) in zeta.iter().enumerate() {
        let mut s = 0.0;
        for j in 0..basis.n_modes() {
            s += basis.lambda(j).powf(sigma) * z[j] * z[j];
        }
        total += w[k] * s;
    }
    total.sqrt()
}

/// Velocity-injection columns of the remaining free flow at time `t`:
/// diagonals of the two nonzero blocks of `S(T - t) [0; I]`.
fn injection_diagonals(
    basis: &SpectralBasis,
    horizon: f64,
    t: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = basis.n_modes();
    let mut d1 = DVector::zeros(n);
    let mut d3 = DVector::zeros(n);
    for j in 0..n {
        let a = mode_flow(basis.lambda(j), 0.0, horizon - t);
        d1[j] = a[1];
        d3[j] = a[3];
    }
    (d1, d3)
}

struct SteeringOperator {
    /// Injection diagonals per node.
    diags: Vec<(DVector<f64>, DVector<f64>)>,
    /// Cutoff multiplication matrix.
    chi_m: DMatrix<f64>,
    /// `lambda^-sigma` diagonal.
    lam_neg: DVector<f64>,
    /// Steering Gramian in pair coordinates.
    gramian: DMatrix<f64>,
}

impl SteeringOperator {
    fn build(basis: &SpectralBasis, chi: &CutoffField, grid: TimeGrid, sigma: f64) -> SteeringOperator {
        let n = basis.n_modes();
        let horizon = grid.end();
        let weights = trapezoid_weights(grid.len, grid.dt);
        let chi_m = chi.matrix();
        let lam_neg = DVector::from_fn(n, |j, _| basis.lambda(j).powf(-sigma));
        // chi Lambda^-sigma chi, the control-to-force weight.
        let mut lam_chi = chi_m.clone();
        for (j, mut col) in lam_chi.column_iter_mut().enumerate() {
            col *= lam_neg[j];
        }
        let lam_chi = &lam_chi * &chi_m;

        let diags: Vec<_> = (0..grid.len)
            .map(|k| injection_diagonals(basis, horizon, grid.node(k)))
            .collect();
        let mut gramian = DMatrix::zeros(2 * n, 2 * n);
        for (k, (d1, d3)) in diags.iter().enumerate() {
            let w = weights[k];
            for i in 0..n {
                for j in 0..n {
                    let lc = w * lam_chi[(i, j)];
                    gramian[(i, j)] += d1[i] * lc * d1[j];
                    gramian[(i, n + j)] += d1[i] * lc * d3[j];
                    gramian[(n + i, j)] += d3[i] * lc * d1[j];
                    gramian[(n + i, n + j)] += d3[i] * lc * d3[j];
                }
            }
        }
        SteeringOperator {
            diags,
            chi_m,
            lam_neg,
            gramian,
        }
    }

    /// Control path of the multiplier `a`: `zeta_k = -Lambda^-sigma chi M_k^T a`.
    fn control_from_multiplier(&self, a: &DVector<f64>) -> Vec<DVector<f64>> {
        let n = self.lam_neg.len();
        let ap = a.rows(0, n);
        let av = a.rows(n, n);
        self.diags
            .iter()
            .map(|(d1, d3)| {
                let u = DVector::from_fn(n, |j, _| d1[j] * ap[j] + d3[j] * av[j]);
                let mut z = &self.chi_m * u;
                z.component_mul_assign(&self.lam_neg);
                -z
            })
            .collect()
    }

    /// Terminal pair reached from rest by the control path.
    #[cfg(test)]
    fn steer(&self, grid: &TimeGrid, zeta: &[DVector<f64>]) -> DVector<f64> {
        let weights = trapezoid_weights(grid.len, grid.dt);
        let n = self.lam_neg.len();
        let mut out = DVector::zeros(2 * n);
        for (k, z) in zeta.iter().enumerate() {
            let f = &self.chi_m * z;
            let (d1, d3) = &self.diags[k];
            for j in 0..n {
                out[j] += weights[k] * d1[j] * f[j];
                out[n + j] += weights[k] * d3[j] * f[j];
            }
        }
        out
    }
}

/// Minimal-norm null control for `u'' - Lap u = chi zeta` over `[0, horizon]`.
///
/// The multiplier solves the steering Gramian system; the returned path is
/// re-simulated to measure the terminal residual, and its norm is certified
/// against the observability constant of the matching free system through
/// the exact discrete duality between the two Gramians.
pub fn hum_control(
    init: &ModalState,
    chi: &CutoffField,
    horizon: f64,
    sigma: f64,
    dt_target: f64,
) -> Result<HumControl> {
    let basis = init.basis().clone();
    chi.check_same_basis(&basis)?;
    let grid = TimeGrid::span(0.0, horizon, dt_target)?;

    // Observability side: rejects unobservable cutoffs and prices the bound.
    let zero = PotentialField::zero(basis.clone());
    let obs = GramianAssembly::assemble(&zero, chi, horizon, sigma, 0.0, dt_target)?.report();
    if !obs.m6.is_finite() {
        return Err(Error::Singular(
            "free system not observable through this cutoff".into(),
        ));
    }

    let op = SteeringOperator::build(&basis, chi, grid, sigma);
    let eig = op.gramian.clone().symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > EIGEN_TOL * hi.max(0.0)) {
        return Err(Error::Singular(format!(
            "steering gramian near-singular: {lo:.3e} vs {hi:.3e}"
        )));
    }

    let n = basis.n_modes();
    let target = free_propagate(init, 0.0, horizon);
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(target.position());
    y.rows_mut(n, n).copy_from(target.velocity());

    let chol = op
        .gramian
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("steering gramian factorisation failed".into()))?;
    let a = chol.solve(&y);
    let zeta = op.control_from_multiplier(&a);
    let control_norm = a.dot(&y).max(0.0).sqrt();

    // Independent verification: drive the trapezoidal stepper with the
    // control and measure what is left at the horizon.
    let forces: Vec<DVector<f64>> = zeta.iter().map(|z| &op.chi_m * z).collect();
    let run = solve_linear(0.0, &zero, Forcing::Nodes(&forces), init, grid, 1e18)?;
    let init_norm = init.pair_norm(sigma + 1.0);
    let steer_residual = if init_norm > 0.0 {
        run.last().pair_norm(sigma + 1.0) / init_norm
    } else {
        run.last().pair_norm(sigma + 1.0)
    };

    Ok(HumControl {
        grid,
        sigma,
        zeta,
        control_norm,
        steer_residual,
        norm_bound: obs.m6.sqrt() * init_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DomainSpec;
    use rand::SeedableRng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn interval_basis(n: usize) -> Arc<SpectralBasis> {
        Arc::new(
            SpectralBasis::build(DomainSpec::interval(PI, -1.0, 0.4).unwrap(), n).unwrap(),
        )
    }

    #[test]
    fn single_mode_analytic_control() {
        let b = interval_basis(1);
        let chi = CutoffField::constant_one(b.clone());
        let init = ModalState::from_coeffs(
            b.clone(),
            DVector::from_element(1, 0.8),
            DVector::from_element(1, -0.3),
        )
        .unwrap();
        let ctrl = hum_control(&init, &chi, 2.0 * PI, 0.0, 2.0 * PI / 512.0).unwrap();
        assert!(ctrl.steer_residual < 1e-10, "residual {}", ctrl.steer_residual);
        // Explicit Gramian pi*I: norm is |initial| / sqrt(pi), matching the
        // duality bound exactly.
        let expect = (0.8f64 * 0.8 + 0.3 * 0.3).sqrt() / PI.sqrt();
        assert!((ctrl.control_norm - expect).abs() < 1e-9);
        assert!((ctrl.norm_bound - expect).abs() < 1e-6 * expect);
        // zeta(t) = -(v0 sin(T-t) + v1 cos(T-t)) / pi.
        let t = ctrl.grid.node(100);
        let want = -(0.8 * (2.0 * PI - t).sin() - 0.3 * (2.0 * PI - t).cos()) / PI;
        assert!((ctrl.zeta[100][0] - want).abs() < 1e-9);
    }

    #[test]
    fn zero_initial_state_needs_no_control() {
        let b = interval_basis(2);
        let chi = CutoffField::constant_one(b.clone());
        let ctrl = hum_control(&ModalState::zero(b), &chi, 5.0, 0.1, 1e-2).unwrap();
        assert_eq!(ctrl.control_norm, 0.0);
        assert!(ctrl.zeta.iter().all(|z| z.amax() == 0.0));
    }

    #[test]
    fn control_scales_linearly_with_data() {
        let b = interval_basis(3);
        let chi = CutoffField::collar(b.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let init = ModalState::random_unit(b.clone(), &mut rng, 1.0);
        let mut doubled = init.clone();
        doubled.scale(2.0);
        let horizon = 2.0 * (PI + 1.0) + 0.5;
        let c1 = hum_control(&init, &chi, horizon, 0.2, 2e-3).unwrap();
        let c2 = hum_control(&doubled, &chi, horizon, 0.2, 2e-3).unwrap();
        for k in [0, 57, c1.zeta.len() - 1] {
            assert!((&c2.zeta[k] - 2.0 * &c1.zeta[k]).amax() < 1e-10 * c1.zeta[k].amax().max(1.0));
        }
        assert!((c2.control_norm - 2.0 * c1.control_norm).abs() < 1e-9);
    }

    #[test]
    fn collar_steering_hits_rest_within_duality_budget() {
        let b = interval_basis(4);
        let chi = CutoffField::collar(b.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let init = ModalState::random_unit(b.clone(), &mut rng, 1.3);
        let horizon = 2.0 * (PI + 1.0) + 0.3;
        let ctrl = hum_control(&init, &chi, horizon, 0.3, 1e-3).unwrap();
        assert!(ctrl.steer_residual < 1e-9, "residual {}", ctrl.steer_residual);
        assert!(
            ctrl.control_norm <= ctrl.norm_bound * (1.0 + 1e-9),
            "norm {} vs bound {}",
            ctrl.control_norm,
            ctrl.norm_bound
        );
    }

    #[test]
    fn any_other_steering_control_is_no_cheaper() {
        let b = interval_basis(3);
        let n = 3;
        let chi = CutoffField::collar(b.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let init = ModalState::random_unit(b.clone(), &mut rng, 1.2);
        let horizon = 2.0 * (PI + 1.0) + 0.2;
        let sigma = 0.2;
        let ctrl = hum_control(&init, &chi, horizon, sigma, 2e-3).unwrap();

        // Perturb by an arbitrary path with its steering effect removed.
        let op = SteeringOperator::build(&b, &chi, ctrl.grid, sigma);
        let r: Vec<DVector<f64>> = (0..ctrl.grid.len)
            .map(|k| DVector::from_fn(n, |j, _| ((k + j) as f64 * 0.17).sin() * 0.3))
            .collect();
        let drift = op.steer(&ctrl.grid, &r);
        let chol = op.gramian.clone().cholesky().unwrap();
        let a_fix = chol.solve(&drift);
        let fix = op.control_from_multiplier(&a_fix);
        // zeta_fix steers to -drift, so r + fix steers to zero.
        let alt: Vec<DVector<f64>> = ctrl
            .zeta
            .iter()
            .zip(r.iter().zip(fix.iter()))
            .map(|(z, (rk, fk))| z + rk + fk)
            .collect();
        let reached = op.steer(&ctrl.grid, &alt);
        let mut y = DVector::zeros(2 * n);
        let target = free_propagate(&init, 0.0, horizon);
        y.rows_mut(0, n).copy_from(target.position());
        y.rows_mut(n, n).copy_from(target.velocity());
        let still = (&op.steer(&ctrl.grid, &ctrl.zeta) + &y).amax();
        assert!(still < 1e-10, "base control no longer steers: {still}");
        assert!((reached + y).amax() < 1e-9, "alternative control must still steer");

        let base = control_path_norm(&b, &ctrl.grid, &ctrl.zeta, sigma);
        let other = control_path_norm(&b, &ctrl.grid, &alt, sigma);
        assert!(other >= base - 1e-8, "other {other} base {base}");
        assert!((base - ctrl.control_norm).abs() < 1e-9);
    }

    #[test]
    fn unobservable_cutoff_rejected() {
        let b = interval_basis(2);
        let chi = CutoffField::from_fn(b.clone(), |_| 0.0);
        let init = ModalState::mode(b, 0);
        assert!(matches!(
            hum_control(&init, &chi, 4.0, 0.0, 1e-2),
            Err(Error::Singular(_))
        ));
    }
}
