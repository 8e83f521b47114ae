use super::drive::Drive;
use super::nonlinearity::Nonlinearity;
use super::solver::project_nonlinearity;
use crate::control::pair_vector;
use crate::control::{feedback_gain, ControlSpace, FeedbackLaw};
use crate::error::{Error, Result};
use crate::fit::exp_decay_fit;
use crate::spectral::{ModalState, SpectralBasis};
use crate::waveop::{solve_staged, SimulationTrace, StagedForce, TimeGrid};
use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::SeedableRng;

/// How the feedback control enters the nonlinear step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainCoupling {
    /// The whole control sample is frozen at the step start: the gain and
    /// the reference are read at the accepted node. Zero perturbations
    /// then track the reference to machine precision, at the price of
    /// first order in the control term.
    SemiImplicit,
    /// Gain and difference read at each stage time; second order, used for
    /// cross-checks and the contraction-probe comparison.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopOptions {
    pub max_energy: f64,
    /// Absolute time where the decay fit starts; transients before it are
    /// excluded.
    pub fit_start: f64,
    pub coupling: GainCoupling,
}

impl ClosedLoopOptions {
    pub fn new(fit_start: f64) -> ClosedLoopOptions {
        ClosedLoopOptions {
            max_energy: 1e8,
            fit_start,
            coupling: GainCoupling::SemiImplicit,
        }
    }
}

/// Outcome of one gain-coupled nonlinear run against a stored reference.
#[derive(Debug, Clone)]
pub struct ClosedLoopResult {
    /// The controlled trajectory; `controls` holds the realised modal
    /// forcing at the nodes.
    pub trace: SimulationTrace,
    /// Actuator coefficients at the nodes.
    pub zetas: Vec<DVector<f64>>,
    /// `E_{u - ref}` at the nodes.
    pub diff_energy: Vec<f64>,
    pub reference_energy: Vec<f64>,
    pub state_energy: Vec<f64>,
    pub control_norm: Vec<f64>,
    pub fit_constant: f64,
    pub fit_rate: f64,
    /// Pair norm of the initial perturbation.
    pub epsilon_used: f64,
    pub success: bool,
    pub stopped_early: bool,
}

struct CoupledForce<'a> {
    f: &'a Nonlinearity,
    basis: &'a SpectralBasis,
    drive: &'a Drive,
    reference: &'a SimulationTrace,
    law: &'a FeedbackLaw,
    space: &'a ControlSpace,
    coupling: GainCoupling,
    gain_off: bool,
    frozen_eta: DVector<f64>,
}

impl CoupledForce<'_> {
    fn control_force(&self, t: f64, state: &ModalState) -> DVector<f64> {
        let here = self.reference.sample(t);
        let mut diff = pair_vector(state);
        let n = self.basis.n_modes();
        for j in 0..n {
            diff[j] -= here.position()[j];
            diff[n + j] -= here.velocity()[j];
        }
        let gain = feedback_gain(self.law, t).expect("grid checked against the law span");
        self.space.force(&(gain * diff))
    }
}

impl StagedForce for CoupledForce<'_> {
    fn begin_step(&mut self, t: f64, state: &ModalState) {
        if self.gain_off || self.coupling == GainCoupling::Explicit {
            return;
        }
        self.frozen_eta = self.control_force(t, state);
    }

    fn eval_stage(&mut self, t: f64, state: &ModalState) -> DVector<f64> {
        let mut force = self.drive.at(t);
        if !self.gain_off {
            match self.coupling {
                GainCoupling::SemiImplicit => force += &self.frozen_eta,
                GainCoupling::Explicit => force += self.control_force(t, state),
            }
        }
        force -= project_nonlinearity(self.f, self.basis, state.position());
        force
    }
}

fn check_setup(
    reference: &SimulationTrace,
    law: &FeedbackLaw,
    space: &ControlSpace,
    perturbation: &ModalState,
    grid: &TimeGrid,
    gamma: f64,
) -> Result<()> {
    law.check_space(space)?;
    if !perturbation.basis().same_as(space.basis()) {
        return Err(Error::BasisMismatch);
    }
    if (law.gamma - gamma).abs() > 1e-12 * (1.0 + gamma.abs()) {
        return Err(Error::InvalidArgument(format!(
            "law was designed for gamma = {}, run requested {gamma}",
            law.gamma
        )));
    }
    let slack = 0.5 * grid.dt;
    if grid.t0 < law.grid.t0 - slack || grid.end() > law.grid.end() + slack {
        return Err(Error::GridMismatch(format!(
            "run span [{}, {}] leaves the law span [{}, {}]",
            grid.t0,
            grid.end(),
            law.grid.t0,
            law.grid.end()
        )));
    }
    if grid.t0 < reference.grid.t0 - slack || grid.end() > reference.grid.end() + slack {
        return Err(Error::GridMismatch(format!(
            "run span [{}, {}] leaves the reference span [{}, {}]",
            grid.t0,
            grid.end(),
            reference.grid.t0,
            reference.grid.end()
        )));
    }
    Ok(())
}

/// Runs the nonlinear equation with the feedback control coupled to the
/// difference from the reference, and fits the decay of the difference
/// energy.
///
/// Success means the run finished under the energy ceiling and the fitted
/// rate reaches 0.8 of the design rate (a vanishing difference counts as
/// success). Failure for large perturbations is an expected outcome, not
/// an error.
pub fn closed_loop(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    reference: &SimulationTrace,
    law: &FeedbackLaw,
    space: &ControlSpace,
    perturbation: &ModalState,
    grid: TimeGrid,
    opts: &ClosedLoopOptions,
) -> Result<ClosedLoopResult> {
    run_with_gain(
        f,
        gamma,
        drive,
        reference,
        law,
        space,
        perturbation,
        grid,
        opts,
        false,
    )
}

/// The same run with the gain disconnected; the open-loop baseline against
/// which the feedback is judged.
pub fn open_loop_baseline(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    reference: &SimulationTrace,
    law: &FeedbackLaw,
    space: &ControlSpace,
    perturbation: &ModalState,
    grid: TimeGrid,
    opts: &ClosedLoopOptions,
) -> Result<ClosedLoopResult> {
    run_with_gain(
        f,
        gamma,
        drive,
        reference,
        law,
        space,
        perturbation,
        grid,
        opts,
        true,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_with_gain(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    reference: &SimulationTrace,
    law: &FeedbackLaw,
    space: &ControlSpace,
    perturbation: &ModalState,
    grid: TimeGrid,
    opts: &ClosedLoopOptions,
    gain_off: bool,
) -> Result<ClosedLoopResult> {
    check_setup(reference, law, space, perturbation, &grid, gamma)?;
    let basis = space.basis().clone();
    let mut init = reference.sample(grid.t0);
    init.add_scaled(perturbation, 1.0);
    let mut rhs = CoupledForce {
        f,
        basis: &basis,
        drive,
        reference,
        law,
        space,
        coupling: opts.coupling,
        gain_off,
        frozen_eta: DVector::zeros(basis.n_modes()),
    };
    let mut trace = solve_staged(gamma, &mut rhs, &init, grid, opts.max_energy)?;
    let stopped_early = trace.meta.stopped_at.is_some();

    let nodes = trace.grid.len;
    let mut diff_energy = Vec::with_capacity(nodes);
    let mut reference_energy = Vec::with_capacity(nodes);
    let mut state_energy = Vec::with_capacity(nodes);
    let mut control_norm = Vec::with_capacity(nodes);
    let mut zetas = Vec::with_capacity(nodes);
    let mut etas = Vec::with_capacity(nodes);
    let n = basis.n_modes();
    for k in 0..nodes {
        let t = trace.grid.node(k);
        let here = reference.sample(t);
        let state = trace.state(k);
        let mut diff = pair_vector(state);
        for j in 0..n {
            diff[j] -= here.position()[j];
            diff[n + j] -= here.velocity()[j];
        }
        let mut e = 0.0;
        for j in 0..n {
            e += basis.lambda(j) * diff[j] * diff[j] + diff[n + j] * diff[n + j];
        }
        diff_energy.push(e);
        reference_energy.push(here.pair_norm(1.0).powi(2));
        state_energy.push(state.pair_norm(1.0).powi(2));
        let zeta = if gain_off {
            DVector::zeros(space.dim())
        } else {
            feedback_gain(law, t)? * diff
        };
        let eta = space.force(&zeta);
        control_norm.push(eta.norm());
        zetas.push(zeta);
        etas.push(eta);
    }
    trace.controls = Some(etas);

    let floor = diff_energy[0].max(1e-300) * 1e-28;
    let samples: Vec<(f64, f64)> = (0..nodes)
        .filter(|&k| trace.grid.node(k) >= opts.fit_start)
        .map(|k| (trace.grid.node(k), diff_energy[k]))
        .collect();
    let (fit_constant, fit_rate) = exp_decay_fit(&samples, floor);
    let all_zero = diff_energy.iter().all(|&e| e <= 1e-28);
    let success = !stopped_early && (all_zero || fit_rate >= 0.8 * law.beta);
    Ok(ClosedLoopResult {
        trace,
        zetas,
        diff_energy,
        reference_energy,
        state_energy,
        control_norm,
        fit_constant,
        fit_rate,
        epsilon_used: perturbation.pair_norm(1.0),
        success,
        stopped_early,
    })
}

/// One probe of the bisection log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpsilonTrial {
    pub epsilon: f64,
    pub passed: usize,
    pub total: usize,
}

/// Outcome of the perturbation-size search.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpsilonSearch {
    /// Largest probed size at which the whole panel succeeded.
    pub epsilon: f64,
    pub panel: usize,
    pub trials: Vec<EpsilonTrial>,
    /// Fitted rates of the panel at the accepted size.
    pub beta_fits: Vec<f64>,
}

fn run_panel(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    reference: &SimulationTrace,
    law: &FeedbackLaw,
    space: &ControlSpace,
    directions: &[ModalState],
    epsilon: f64,
    grid: &TimeGrid,
    opts: &ClosedLoopOptions,
) -> Result<Vec<(bool, f64)>> {
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(directions.len().max(1));
    let mut out = vec![(false, 0.0); directions.len()];
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for w in 0..workers {
            let out_len = directions.len();
            let handle = scope.spawn(move || -> Result<Vec<(usize, bool, f64)>> {
                let mut mine = Vec::new();
                for i in (w..out_len).step_by(workers) {
                    let mut pert = directions[i].clone();
                    pert.scale(epsilon);
                    let run = closed_loop(
                        f,
                        gamma,
                        drive,
                        reference,
                        law,
                        space,
                        &pert,
                        grid.clone(),
                        opts,
                    )?;
                    mine.push((i, run.success, run.fit_rate));
                }
                Ok(mine)
            });
            handles.push(handle);
        }
        for handle in handles {
            for (i, ok, rate) in handle.join().expect("panel worker panicked")? {
                out[i] = (ok, rate);
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Bisects on the perturbation size for the largest probed `epsilon` at
/// which every member of a random unit panel stabilises. Deterministic for
/// a fixed seed; the panel members are independent runs and are fanned out
/// across threads.
#[allow(clippy::too_many_arguments)]
pub fn find_epsilon(
    f: &Nonlinearity,
    gamma: f64,
    drive: &Drive,
    reference: &SimulationTrace,
    law: &FeedbackLaw,
    space: &ControlSpace,
    grid: TimeGrid,
    opts: &ClosedLoopOptions,
    panel: usize,
    seed: u64,
    eps_start: f64,
    refine_rounds: usize,
) -> Result<EpsilonSearch> {
    if panel == 0 || !(eps_start > 0.0) {
        return Err(Error::InvalidArgument(
            "panel must be non-empty and eps_start positive".into(),
        ));
    }
    let basis = space.basis().clone();
    let mut rng = StdRng::seed_from_u64(seed);
    let directions: Vec<ModalState> = (0..panel)
        .map(|_| ModalState::random_unit(basis.clone(), &mut rng, 1.0))
        .collect();
    let mut trials = Vec::new();
    let probe = |eps: f64, trials: &mut Vec<EpsilonTrial>| -> Result<(bool, Vec<f64>)> {
        let results = run_panel(
            f, gamma, drive, reference, law, space, &directions, eps, &grid, opts,
        )?;
        let passed = results.iter().filter(|(ok, _)| *ok).count();
        trials.push(EpsilonTrial {
            epsilon: eps,
            passed,
            total: results.len(),
        });
        Ok((passed == results.len(), results.into_iter().map(|(_, r)| r).collect()))
    };

    let mut hi = eps_start;
    let mut hi_failed = false;
    let mut lo = 0.0;
    let mut best = None;
    for _ in 0..60 {
        let (ok, rates) = probe(hi, &mut trials)?;
        if ok {
            lo = hi;
            best = Some((hi, rates));
            break;
        }
        hi_failed = true;
        hi *= 0.5;
    }
    let (mut eps_ok, mut rates_ok) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no stabilisable perturbation size found down to {hi}"
        ))
    })?;
    if hi_failed {
        // lo passes, 2 lo fails: tighten the bracket.
        let mut bad = 2.0 * lo;
        for _ in 0..refine_rounds {
            let mid = 0.5 * (lo + bad);
            let (ok, rates) = probe(mid, &mut trials)?;
            if ok {
                lo = mid;
                eps_ok = mid;
                rates_ok = rates;
            } else {
                bad = mid;
            }
        }
    }
    Ok(EpsilonSearch {
        epsilon: eps_ok,
        panel,
        trials,
        beta_fits: rates_ok,
    })
}
