//! Canned problem setups shared by the integration suites and the
//! command-line pipeline: geometry, physics, actuation, and the numerical
//! knobs every stage agrees on.

use crate::control::{
    algebraic_riccati_oracle, riccati_value, shifted_matrices, ControlSpace, FeedbackLaw,
    RiccatiOptions,
};
use crate::error::{Error, Result};
use crate::nlw::{reference_trajectory, ClosedLoopOptions, Drive, Nonlinearity, ReferenceReport};
use crate::spectral::{CutoffField, DomainSpec, ModalState, SpectralBasis};
use crate::waveop::{PotentialField, SimulationTrace, TimeGrid};
use nalgebra::DVector;
use std::f64::consts::PI;
use std::sync::Arc;

/// A complete stabilisation problem: everything needed to build the basis,
/// the reference trajectory, the observability data, the feedback law, and
/// the closed-loop runs, with no further choices.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Interval length of the spatial domain `(0, length)`.
    pub length: f64,
    /// Observation point, strictly outside the domain.
    pub x0: f64,
    /// Collar width parameter of the cutoff.
    pub delta: f64,
    pub n_modes: usize,
    pub gamma: f64,
    /// Spectral weight exponent of the observation seminorm.
    pub sigma: f64,
    /// Terminal-subspace dimension for the truncation stage.
    pub cap: usize,
    /// Budget factor for the truncated observability constant.
    pub select_factor: f64,
    /// Control penalty of the interval synthesis stage.
    pub delta_pen: f64,
    /// Design decay rate of the feedback law.
    pub beta: f64,
    /// Squeezing interval as a multiple of the minimal control time.
    pub interval_factor: f64,
    /// Run horizon in units of the squeezing interval.
    pub periods: f64,
    pub dt_reference: f64,
    pub dt_run: f64,
    /// 1-based mode carrying the forcing profile.
    pub drive_mode: usize,
    pub drive_amplitude: f64,
    pub drive_frequency: f64,
    /// Polynomial coefficients of the nonlinearity, `coeffs[k] u^(k+1)`.
    pub nonlinearity: Vec<f64>,
    pub seed: u64,
    pub max_energy: f64,
}

impl Scenario {
    /// The calibrated benchmark: cubic medium on `(0, pi)`, collar
    /// actuation at the right end, weak damping. The forcing drives the
    /// second mode at 1.4 rad/s; the induced reference oscillates the
    /// linearised stiffness at 2.8 rad/s, inside the first parametric
    /// resonance tongue of mode one, so the free difference flow grows
    /// near e^(0.2 t) and only the gain contracts it.
    pub fn default_cubic() -> Scenario {
        Scenario {
            name: "default-cubic".into(),
            length: PI,
            x0: -1.0,
            delta: 0.4,
            n_modes: 32,
            gamma: 0.1,
            sigma: 0.5,
            cap: 15,
            select_factor: 2.0,
            delta_pen: 1e-4,
            beta: 0.09,
            interval_factor: 2.5,
            periods: 6.0,
            dt_reference: 1.0 / 320.0,
            dt_run: 1.0 / 160.0,
            drive_mode: 2,
            drive_amplitude: 4.0,
            drive_frequency: 1.4,
            nonlinearity: vec![0.0, 0.0, 1.0],
            seed: 0x5eed,
            max_energy: 1e8,
        }
    }

    /// A reduced copy of the benchmark for smoke tests: same physics,
    /// fewer modes, shorter horizon.
    pub fn compact() -> Scenario {
        Scenario {
            name: "compact".into(),
            n_modes: 12,
            cap: 8,
            periods: 3.0,
            dt_reference: 1.0 / 160.0,
            dt_run: 1.0 / 80.0,
            ..Scenario::default_cubic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, f64); 8] = [
            ("length", self.length),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("interval_factor", self.interval_factor),
            ("periods", self.periods),
            ("dt_reference", self.dt_reference),
            ("dt_run", self.dt_run),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{field} must be positive and finite, got {value}"
                )));
            }
        }
        if self.x0 >= 0.0 && self.x0 <= self.length {
            return Err(Error::InvalidArgument(format!(
                "x0 must lie outside [0, {}], got {}",
                self.length, self.x0
            )));
        }
        if self.beta >= self.gamma {
            return Err(Error::InvalidArgument(format!(
                "design rate {} must stay below the damping {}",
                self.beta, self.gamma
            )));
        }
        if self.n_modes == 0 || self.cap == 0 || self.cap > self.n_modes {
            return Err(Error::InvalidArgument(format!(
                "need 0 < cap <= n_modes, got cap {} with {} modes",
                self.cap, self.n_modes
            )));
        }
        if self.drive_mode == 0 || self.drive_mode > self.n_modes {
            return Err(Error::InvalidArgument(format!(
                "drive_mode must be in 1..={}, got {}",
                self.n_modes, self.drive_mode
            )));
        }
        if self.select_factor < 1.0 {
            return Err(Error::InvalidArgument(
                "select_factor below one can never be met".into(),
            ));
        }
        if self.nonlinearity.is_empty() {
            return Err(Error::InvalidArgument(
                "nonlinearity coefficients must not be empty".into(),
            ));
        }
        self.domain().map(|_| ())
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        DomainSpec::interval(self.length, self.x0, self.delta)
    }

    pub fn basis(&self) -> Result<Arc<SpectralBasis>> {
        Ok(Arc::new(SpectralBasis::build(self.domain()?, self.n_modes)?))
    }

    pub fn cutoff(&self, basis: &Arc<SpectralBasis>) -> CutoffField {
        CutoffField::collar(basis.clone())
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity::polynomial("configured", &self.nonlinearity)
    }

    pub fn t_min(&self) -> f64 {
        self.domain().map(|d| d.t_min()).unwrap_or(f64::NAN)
    }

    /// The squeezing interval length `T`.
    pub fn interval(&self) -> f64 {
        self.interval_factor * self.t_min()
    }

    pub fn horizon(&self) -> f64 {
        self.periods * self.interval()
    }

    pub fn drive(&self) -> Drive {
        let coeffs = DVector::from_fn(self.n_modes, |j, _| {
            if j + 1 == self.drive_mode {
                self.drive_amplitude
            } else {
                0.0
            }
        });
        let om = self.drive_frequency;
        Drive::profile(coeffs, move |t: f64| (om * t).sin())
    }

    pub fn reference_grid(&self) -> Result<TimeGrid> {
        TimeGrid::span(0.0, self.horizon(), self.dt_reference)
    }

    pub fn run_grid(&self) -> Result<TimeGrid> {
        TimeGrid::span(0.0, self.horizon(), self.dt_run)
    }

    /// Runs the reference from rest under the configured forcing.
    pub fn build_reference(
        &self,
        basis: &Arc<SpectralBasis>,
    ) -> Result<(SimulationTrace, ReferenceReport)> {
        let init = ModalState::zero(basis.clone());
        reference_trajectory(
            &self.nonlinearity(),
            self.gamma,
            &self.drive(),
            &init,
            self.reference_grid()?,
            self.max_energy,
        )
    }

    /// Backward value sweep over the whole run horizon. For an oscillatory
    /// potential the sweep is seeded with the stationary value of the
    /// cycle-averaged field, which removes most of the horizon-extension
    /// burden.
    pub fn build_law(
        &self,
        potential: &PotentialField,
        space: &ControlSpace,
    ) -> Result<FeedbackLaw> {
        let mut opts = RiccatiOptions::new(self.beta, self.horizon(), 0.2);
        opts.riccati_tol = 1e-5;
        opts.max_extensions = 6;
        if self.drive_frequency > 0.0 && !potential.is_time_invariant() {
            let period = PI / self.drive_frequency;
            let mean = potential.averaged(self.horizon() - period, self.horizon(), 64)?;
            let (a, b, c) = shifted_matrices(space, &mean, 0.0, self.gamma, self.beta);
            opts.terminal = Some(algebraic_riccati_oracle(&a, &b, &c)?);
        }
        riccati_value(potential, space, self.gamma, &opts)
    }

    /// Decay fit starts after two squeezing intervals, skipping the
    /// transient.
    pub fn closed_loop_options(&self) -> ClosedLoopOptions {
        let mut opts = ClosedLoopOptions::new(2.0 * self.interval());
        opts.max_energy = self.max_energy;
        opts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_consistent() {
        let s = Scenario::default_cubic();
        s.validate().unwrap();
        assert!((s.t_min() - 2.0 * (PI + 1.0)).abs() < 1e-12);
        assert!((s.interval() - 2.5 * 2.0 * (PI + 1.0)).abs() < 1e-12);
        assert!((s.horizon() - 6.0 * s.interval()).abs() < 1e-12);
        let basis = s.basis().unwrap();
        assert_eq!(basis.n_modes(), 32);
        let drive = s.drive();
        assert_eq!(drive.dim(), 32);
        // The forcing sits on the configured mode only.
        let v = drive.at(0.3);
        for j in 0..32 {
            if j == 1 {
                assert!(v[j].abs() > 0.1);
            } else {
                assert_eq!(v[j], 0.0);
            }
        }
        assert_eq!(s.nonlinearity().degree(), 3);
    }

    #[test]
    fn compact_is_valid_and_cheaper() {
        let s = Scenario::compact();
        s.validate().unwrap();
        assert!(s.n_modes < Scenario::default_cubic().n_modes);
        assert!(s.horizon() < Scenario::default_cubic().horizon());
        let grid = s.run_grid().unwrap();
        assert!(grid.covers(s.horizon()));
        assert!(grid.covers(0.0));
    }

    #[test]
    fn bad_fields_are_named_in_errors() {
        let mut s = Scenario::default_cubic();
        s.x0 = 0.5;
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("x0"), "{err}");
        let mut s = Scenario::default_cubic();
        s.beta = 0.2;
        assert!(s.validate().unwrap_err().to_string().contains("damping"));
        let mut s = Scenario::default_cubic();
        s.cap = 40;
        assert!(s.validate().unwrap_err().to_string().contains("cap"));
        let mut s = Scenario::default_cubic();
        s.dt_run = 0.0;
        assert!(s.validate().unwrap_err().to_string().contains("dt_run"));
        let mut s = Scenario::default_cubic();
        s.drive_mode = 60;
        assert!(s.validate().unwrap_err().to_string().contains("drive_mode"));
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = Scenario::default_cubic();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, s.name);
        assert_eq!(back.drive_amplitude, s.drive_amplitude);
        assert_eq!(back.nonlinearity, s.nonlinearity);
        back.validate().unwrap();
    }
}
