use super::nonlinearity::Nonlinearity;
use super::reference::linearize;
use super::solver::MAX_EXACT_DEGREE;
use crate::control::pair_vector;
use crate::control::{feedback_gain, ControlSpace, FeedbackLaw};
use crate::error::{Error, Result};
use crate::spectral::{ModalState, SpectralBasis};
use crate::waveop::{solve_staged, PotentialField, SimulationTrace, StagedForce, TimeGrid};
use nalgebra::DVector;

/// Record of a fixed-point iteration for the controlled difference flow.
///
/// The iteration solves the gain-closed linear difference equation and
/// feeds back the quadratic-and-higher remainder of the nonlinearity from
/// the previous iterate as an external forcing. Contraction of the
/// increments is direct evidence that the nonlinear closed loop sits in
/// the contraction regime; divergence marks the edge of the local basin.
#[derive(Debug)]
pub struct PicardProbe {
    /// Successive increment norms in the weighted sup norm
    /// `sup_t (e^{beta (t - t0)} E(t))^{1/2}`.
    pub increments: Vec<f64>,
    /// `increments[k + 1] / increments[k]`.
    pub ratios: Vec<f64>,
    /// Per-iterate peak of `e^{beta (t - t0)} E(t) / E(t0)`; zero for the
    /// zero trajectory.
    pub theta_memberships: Vec<f64>,
    /// The requested ball radius, echoed for reporting.
    pub theta_bound: f64,
    /// Whether the final iterate stayed inside the requested ball.
    pub in_z_theta: bool,
    /// Three consecutive expanding increments, or an iterate breached the
    /// energy ceiling.
    pub diverged: bool,
    /// Corrective iterates actually computed.
    pub iterations: usize,
    /// The last completed iterate.
    pub fixed_point: SimulationTrace,
}

struct PicardForce<'a> {
    f: &'a Nonlinearity,
    basis: &'a SpectralBasis,
    law: &'a FeedbackLaw,
    space: &'a ControlSpace,
    b: &'a PotentialField,
    reference: &'a SimulationTrace,
    prev: Option<&'a SimulationTrace>,
}

impl StagedForce for PicardForce<'_> {
    fn eval_stage(&mut self, t: f64, state: &ModalState) -> DVector<f64> {
        let gain = feedback_gain(self.law, t).expect("span checked on entry");
        let mut force = self.space.force(&(gain * pair_vector(state)));
        force -= self.b.apply(t, state.position());
        if let Some(prev) = self.prev {
            let w = prev.sample(t);
            let here = self.reference.sample(t);
            let w_vals = self.basis.synthesize(w.position());
            let u_vals = self.basis.synthesize(here.position());
            let mut g_vals = DVector::zeros(w_vals.len());
            for q in 0..w_vals.len() {
                let u = u_vals[q];
                let wv = w_vals[q];
                g_vals[q] = self.f.eval(u + wv) - self.f.eval(u) - self.f.derivative(u) * wv;
            }
            force -= self.basis.project_values(&g_vals);
        }
        force
    }
}

fn weighted_sup(trace: &SimulationTrace, beta: f64) -> f64 {
    let t0 = trace.grid.t0;
    (0..trace.grid.len)
        .map(|k| {
            let e = trace.state(k).pair_norm(1.0).powi(2);
            ((beta * (trace.grid.node(k) - t0)).exp() * e).sqrt()
        })
        .fold(0.0, f64::max)
}

fn weighted_sup_diff(a: &SimulationTrace, b: &SimulationTrace, beta: f64) -> f64 {
    let t0 = a.grid.t0;
    (0..a.grid.len)
        .map(|k| {
            let d = a
                .state(k)
                .difference(b.state(k))
                .expect("iterates share one basis");
            ((beta * (a.grid.node(k) - t0)).exp() * d.pair_norm(1.0).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Iterates the linearised closed-loop map from `perturbation` and reports
/// contraction diagnostics. The damping is read off the law; the run grid
/// must stay inside both the law span and the reference coverage.
#[allow(clippy::too_many_arguments)]
pub fn picard_probe(
    f: &Nonlinearity,
    reference: &SimulationTrace,
    law: &FeedbackLaw,
    space: &ControlSpace,
    perturbation: &ModalState,
    theta: f64,
    grid: TimeGrid,
    iterations: usize,
    max_energy: f64,
) -> Result<PicardProbe> {
    law.check_space(space)?;
    if !perturbation.basis().same_as(space.basis()) {
        return Err(Error::BasisMismatch);
    }
    if f.degree() > MAX_EXACT_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "nonlinearity degree {} exceeds the dealiasing cap {MAX_EXACT_DEGREE}",
            f.degree()
        )));
    }
    if !(theta > 0.0) || iterations == 0 {
        return Err(Error::InvalidArgument(
            "theta must be positive and iterations at least one".into(),
        ));
    }
    let slack = 0.5 * grid.dt;
    if grid.t0 < law.grid.t0 - slack || grid.end() > law.grid.end() + slack {
        return Err(Error::GridMismatch(format!(
            "probe span [{}, {}] leaves the law span [{}, {}]",
            grid.t0,
            grid.end(),
            law.grid.t0,
            law.grid.end()
        )));
    }
    if grid.t0 < reference.grid.t0 - slack || grid.end() > reference.grid.end() + slack {
        return Err(Error::GridMismatch(format!(
            "probe span [{}, {}] leaves the reference span [{}, {}]",
            grid.t0,
            grid.end(),
            reference.grid.t0,
            reference.grid.end()
        )));
    }
    let basis = space.basis().clone();
    let b = linearize(f, reference)?;
    let gamma = law.gamma;

    let solve_iterate = |prev: Option<&SimulationTrace>| -> Result<SimulationTrace> {
        let mut rhs = PicardForce {
            f,
            basis: &basis,
            law,
            space,
            b: &b,
            reference,
            prev,
        };
        solve_staged(gamma, &mut rhs, perturbation, grid.clone(), max_energy)
    };

    let mut current = solve_iterate(None)?;
    let mut diverged = current.meta.stopped_at.is_some();
    let scale = 1.0 + weighted_sup(&current, law.beta);
    let e0 = perturbation.pair_norm(1.0).powi(2);
    let membership = |trace: &SimulationTrace| -> f64 {
        if e0 == 0.0 {
            return 0.0;
        }
        let sup = weighted_sup(trace, law.beta);
        sup * sup / e0
    };
    let mut theta_memberships = vec![membership(&current)];
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let mut expanding = 0usize;
    if !diverged {
        for _ in 0..iterations {
            let next = solve_iterate(Some(&current))?;
            if next.meta.stopped_at.is_some() {
                diverged = true;
                break;
            }
            let d = weighted_sup_diff(&next, &current, law.beta);
            if let Some(&prev_d) = increments.last() {
                if prev_d > 0.0 {
                    let ratio = d / prev_d;
                    ratios.push(ratio);
                    if ratio > 1.0 {
                        expanding += 1;
                        if expanding >= 3 {
                            diverged = true;
                        }
                    } else {
                        expanding = 0;
                    }
                }
            }
            increments.push(d);
            theta_memberships.push(membership(&next));
            current = next;
            if diverged || d <= 1e-15 * scale {
                break;
            }
        }
    }
    let in_z_theta = *theta_memberships.last().unwrap() <= theta;
    Ok(PicardProbe {
        iterations: increments.len(),
        increments,
        ratios,
        theta_memberships,
        theta_bound: theta,
        in_z_theta,
        diverged,
        fixed_point: current,
    })
}
