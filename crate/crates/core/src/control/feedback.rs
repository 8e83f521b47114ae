use super::space::ControlSpace;
use crate::error::{Error, Result};
use crate::fit::{exp_decay_fit, simpson_weights};
use crate::spectral::ModalState;
use crate::waveop::{solve_forced, PotentialField, TimeGrid};
use nalgebra::{DMatrix, DVector};

/// One horizon-extension round of the backward value sweep.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExtensionRecord {
    pub horizon: f64,
    /// Frobenius norm of the shifted value matrix at time zero.
    pub p0_norm: f64,
    /// Largest nodewise Frobenius change against the previous round;
    /// infinite on the first round.
    pub change: f64,
}

/// Time-dependent feedback law from the exponentially weighted value
/// problem, stored at the nodes of `grid`.
///
/// `value_p` holds the drift-shifted matrices `P(t)`; the value form of
/// the weighted problem is `Q(t) = e^{beta t} P(t)` and the control is
/// `zeta(t) = K(t) [pos; vel]` with `K = gains`, the exponential factors
/// cancelling.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FeedbackLaw {
    pub schema_version: u32,
    pub grid: TimeGrid,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// Actuated coefficient count.
    pub m: usize,
    pub n_modes: usize,
    /// m x 2n gain per node, mapping pair coordinates to coefficients.
    pub gains: Vec<DMatrix<f64>>,
    /// 2n x 2n shifted value matrix per node.
    pub value_p: Vec<DMatrix<f64>>,
    /// sup over nodes of the spectral norm of `P`: certifies
    /// `||Q(s)|| <= C e^{beta s}` on the grid.
    pub value_growth_constant: f64,
    /// sup over nodes of the Frobenius norm of the gain; interpolation
    /// stays under it by convexity.
    pub gain_bound: f64,
    pub extensions: Vec<ExtensionRecord>,
}

impl FeedbackLaw {
    /// Weighted value form `Q` at node `k`.
    pub fn value_q_at_node(&self, k: usize) -> DMatrix<f64> {
        &self.value_p[k] * (self.beta * self.grid.node(k)).exp()
    }

    /// Quadratic value `(1/2) Phi^T Q(t_k) Phi` of a state pair at node `k`.
    pub fn value_of(&self, k: usize, state: &ModalState) -> f64 {
        let phi = pair_vector(state);
        0.5 * (self.value_q_at_node(k) * &phi).dot(&phi)
    }

    pub fn check_space(&self, space: &ControlSpace) -> Result<()> {
        if space.dim() != self.m || space.basis().n_modes() != self.n_modes {
            return Err(Error::InvalidArgument(format!(
                "law built for m = {}, n = {}; space has m = {}, n = {}",
                self.m,
                self.n_modes,
                space.dim(),
                space.basis().n_modes()
            )));
        }
        Ok(())
    }
}

pub(crate) fn pair_vector(state: &ModalState) -> DVector<f64> {
    let n = state.position().len();
    let mut phi = DVector::zeros(2 * n);
    phi.rows_mut(0, n).copy_from(state.position());
    phi.rows_mut(n, n).copy_from(state.velocity());
    phi
}

/// Gain matrix at an arbitrary time inside the law's span, linearly
/// interpolated between the stored nodes.
pub fn feedback_gain(law: &FeedbackLaw, t: f64) -> Result<DMatrix<f64>> {
    let grid = &law.grid;
    let slack = 1e-9 * grid.dt;
    if t < grid.t0 - slack || t > grid.end() + slack {
        return Err(Error::InvalidArgument(format!(
            "time {t} outside the law's span [{}, {}]",
            grid.t0,
            grid.end()
        )));
    }
    let x = ((t - grid.t0) / grid.dt).clamp(0.0, (grid.len - 1) as f64);
    let k = (x.floor() as usize).min(grid.len - 2);
    let a = x - k as f64;
    if a <= 1e-12 {
        return Ok(law.gains[k].clone());
    }
    Ok(&law.gains[k] * (1.0 - a) + &law.gains[k + 1] * a)
}

/// Closed-loop run of the linear deviation equation under a feedback law.
pub struct LinearFeedbackRun {
    pub trace: crate::waveop::SimulationTrace,
    /// Control coefficients at every node.
    pub zetas: Vec<DVector<f64>>,
    /// Simpson value of `(1/2) int e^{beta t} (energy + |zeta|^2) dt` over
    /// the run.
    pub running_cost_beta: f64,
    /// Fit `E(t) ~ C exp(-rate t)` of the closed-loop energy.
    pub decay_constant: f64,
    pub decay_rate: f64,
}

/// Simulates `v'' + gamma v' - Lap v + b v = chi P_m (K(t) Phi)` on `grid`
/// with the law's gains, and integrates the weighted running cost.
pub fn simulate_linear_feedback(
    law: &FeedbackLaw,
    space: &ControlSpace,
    potential: &PotentialField,
    init: &ModalState,
    grid: TimeGrid,
    max_energy: f64,
) -> Result<LinearFeedbackRun> {
    law.check_space(space)?;
    if !init.basis().same_as(space.basis()) {
        return Err(Error::BasisMismatch);
    }
    let slack = 1e-9 * law.grid.dt;
    if grid.t0 < law.grid.t0 - slack || grid.end() > law.grid.end() + slack {
        return Err(Error::InvalidArgument(format!(
            "simulation span [{}, {}] exceeds the law's [{}, {}]",
            grid.t0,
            grid.end(),
            law.grid.t0,
            law.grid.end()
        )));
    }
    let force = |t: f64, state: &ModalState| -> DVector<f64> {
        let gain = feedback_gain(law, t).expect("span checked upfront");
        let phi = pair_vector(state);
        let mut f = space.force(&(gain * phi));
        if !potential.is_zero() {
            f -= potential.apply(t, state.position());
        }
        f
    };
    let mut trace = solve_forced(gamma_of(law), &force, init, grid, max_energy)?;

    let mut zetas = Vec::with_capacity(grid.len);
    let mut etas = Vec::with_capacity(grid.len);
    for k in 0..grid.len {
        let gain = feedback_gain(law, grid.node(k))?;
        let zeta = gain * pair_vector(&trace.states[k]);
        etas.push(space.force(&zeta));
        zetas.push(zeta);
    }
    trace.controls = Some(etas);

    let weights = simpson_weights(grid.len, grid.dt);
    let mut cost = 0.0;
    let mut energies = Vec::with_capacity(grid.len);
    for k in 0..grid.len {
        let t = grid.node(k);
        let e = trace.states[k].pair_norm(1.0).powi(2);
        energies.push((t, e));
        cost += weights[k] * (law.beta * t).exp() * (e + zetas[k].norm_squared());
    }
    let floor = (energies[0].1 * 1e-30).max(1e-300);
    let (decay_constant, decay_rate) = exp_decay_fit(&energies, floor);
    Ok(LinearFeedbackRun {
        trace,
        zetas,
        running_cost_beta: 0.5 * cost,
        decay_constant,
        decay_rate,
    })
}

fn gamma_of(law: &FeedbackLaw) -> f64 {
    law.gamma
}

/// Two-sided evaluation of the dynamic-programming identity.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DppReport {
    /// `(1/2) Phi_0^T Q(0) Phi_0`.
    pub value_start: f64,
    /// Weighted running cost accumulated on `[0, s_mid]`.
    pub running_cost: f64,
    /// `(1/2) Phi(s)^T Q(s) Phi(s)` at the split point.
    pub value_mid: f64,
    pub residual: f64,
}

/// Checks that the value at time zero splits into the running cost up to a
/// stored node plus the value of the reached state there.
///
/// `s_mid` must sit on a law node: the identity is checked against stored
/// matrices, keeping interpolation error out of the comparison.
pub fn dpp_consistency(
    law: &FeedbackLaw,
    space: &ControlSpace,
    potential: &PotentialField,
    init: &ModalState,
    s_mid: f64,
    dt: f64,
) -> Result<DppReport> {
    law.check_space(space)?;
    let pos = (s_mid - law.grid.t0) / law.grid.dt;
    let node = pos.round() as isize;
    if node < 0 || node as usize >= law.grid.len || (pos - node as f64).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split time {s_mid} is not a stored law node"
        )));
    }
    let node = node as usize;
    let value_start = law.value_of(0, init);
    if node == 0 {
        return Ok(DppReport {
            value_start,
            running_cost: 0.0,
            value_mid: value_start,
            residual: 0.0,
        });
    }
    let grid = TimeGrid::span(law.grid.t0, s_mid - law.grid.t0, dt)?;
    let run = simulate_linear_feedback(law, space, potential, init, grid, f64::INFINITY)?;
    let value_mid = law.value_of(node, run.trace.last());
    let running = run.running_cost_beta;
    let scale = value_start.abs().max(running + value_mid.abs()).max(1e-300);
    Ok(DppReport {
        value_start,
        running_cost: running,
        value_mid,
        residual: (value_start - (running + value_mid)).abs() / scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{CutoffField, DomainSpec, SpectralBasis};
    use rand::Rng;
    use rand::SeedableRng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn toy_law(n: usize, m: usize, len: usize) -> (Arc<SpectralBasis>, ControlSpace, FeedbackLaw) {
        let basis = Arc::new(
            SpectralBasis::build(DomainSpec::interval(PI, -1.0, 0.4).unwrap(), n).unwrap(),
        );
        let chi = CutoffField::constant_one(basis.clone());
        let space = ControlSpace::new(&chi, m, 0.5).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, len).unwrap();
        let gains: Vec<DMatrix<f64>> = (0..len)
            .map(|k| DMatrix::from_fn(m, 2 * n, |i, j| ((i + 2 * j + k) as f64 * 0.1).sin()))
            .collect();
        let gain_bound = gains.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let value_p: Vec<DMatrix<f64>> = (0..len)
            .map(|_| DMatrix::identity(2 * n, 2 * n))
            .collect();
        let law = FeedbackLaw {
            schema_version: 1,
            grid,
            beta: 0.05,
            gamma: 0.1,
            sigma: 0.5,
            m,
            n_modes: n,
            gains,
            value_p,
            value_growth_constant: 1.0,
            gain_bound,
            extensions: Vec::new(),
        };
        (basis, space, law)
    }

    #[test]
    fn gain_interpolates_linearly_and_hits_nodes() {
        let (_, _, law) = toy_law(3, 2, 5);
        for k in 0..5 {
            let g = feedback_gain(&law, law.grid.node(k)).unwrap();
            assert!((&g - &law.gains[k]).amax() < 1e-14);
        }
        let mid = feedback_gain(&law, 0.25).unwrap();
        let expect = (&law.gains[0] + &law.gains[1]) * 0.5;
        assert!((&mid - &expect).amax() < 1e-14);
        assert!(feedback_gain(&law, -0.3).is_err());
        assert!(feedback_gain(&law, 2.4).is_err());
    }

    #[test]
    fn interpolated_gain_stays_under_certificate() {
        let (_, _, law) = toy_law(4, 3, 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let t = rng.gen_range(0.0..law.grid.end());
            let g = feedback_gain(&law, t).unwrap();
            assert!(g.norm() <= law.gain_bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_gain_runs_reduce_to_free_flow() {
        let (basis, space, mut law) = toy_law(3, 2, 41);
        for g in &mut law.gains {
            g.fill(0.0);
        }
        law.gain_bound = 0.0;
        let pot = PotentialField::zero(basis.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        let init = ModalState::random_unit(basis.clone(), &mut rng, 1.0);
        let grid = TimeGrid::span(0.0, 18.0, 0.01).unwrap();
        let run = simulate_linear_feedback(&law, &space, &pot, &init, grid, f64::INFINITY).unwrap();
        for z in &run.zetas {
            assert_eq!(z.amax(), 0.0);
        }
        // Free damped flow: energy decays at rate gamma.
        assert!((run.decay_rate - 0.1).abs() < 0.02, "rate {}", run.decay_rate);
        let expect = init.pair_norm(1.0) * (-0.1 * 18.0 / 2.0_f64).exp();
        let got = run.trace.last().pair_norm(1.0);
        assert!((got - expect).abs() < 0.15 * expect, "{got} vs {expect}");
    }

    #[test]
    fn simulation_respects_law_span() {
        let (basis, space, law) = toy_law(3, 2, 5);
        let pot = PotentialField::zero(basis.clone());
        let init = ModalState::mode(basis.clone(), 0);
        let long = TimeGrid::span(0.0, 5.0, 0.01).unwrap();
        assert!(
            simulate_linear_feedback(&law, &space, &pot, &init, long, f64::INFINITY).is_err()
        );
    }

    #[test]
    fn dpp_split_time_must_be_a_node() {
        let (basis, space, law) = toy_law(3, 2, 5);
        let pot = PotentialField::zero(basis.clone());
        let init = ModalState::mode(basis.clone(), 0);
        assert!(dpp_consistency(&law, &space, &pot, &init, 0.77, 0.01).is_err());
        let report = dpp_consistency(&law, &space, &pot, &init, 0.0, 0.01).unwrap();
        assert_eq!(report.residual, 0.0);
        assert_eq!(report.running_cost, 0.0);
    }

    #[test]
    fn law_round_trips_through_json() {
        let (_, _, law) = toy_law(3, 2, 5);
        let text = serde_json::to_string(&law).unwrap();
        let back: FeedbackLaw = serde_json::from_str(&text).unwrap();
        assert_eq!(back.grid.len, law.grid.len);
        assert_eq!(back.gains.len(), law.gains.len());
        for (a, b) in law.gains.iter().zip(back.gains.iter()) {
            assert_eq!(a, b);
        }
        assert_eq!(back.value_growth_constant, law.value_growth_constant);
    }
}
