use crate::error::{Error, Result};
use crate::spectral::ModalState;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Uniform time grid with `len` nodes `t0 + k dt`, `k = 0 .. len-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<TimeGrid> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt = {dt} must be > 0")));
        }
        if len < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 nodes, got {len}"
            )));
        }
        Ok(TimeGrid { t0, dt, len })
    }

    /// Grid covering `[t0, t0 + duration]` with step at most `dt_target`,
    /// adjusted so the endpoint lands exactly on a node.
    pub fn span(t0: f64, duration: f64, dt_target: f64) -> Result<TimeGrid> {
        if !(duration > 0.0) || !(dt_target > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "duration {duration} and dt {dt_target} must be > 0"
            )));
        }
        let steps = (duration / dt_target).ceil().max(1.0) as usize;
        TimeGrid::new(t0, duration / steps as f64, steps + 1)
    }

    pub fn node(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.node(self.len - 1)
    }

    pub fn steps(&self) -> usize {
        self.len - 1
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.node(k))
    }

    /// Clamped fractional position of `t`: `(lower node index, weight)`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return (0, 0.0);
        }
        let k = (x.floor() as usize).min(self.len - 2);
        ((k), (x - k as f64).min(1.0))
    }

    /// Whether `t` lies within the grid span, with half-step slack.
    pub fn covers(&self, t: f64) -> bool {
        t >= self.t0 - 0.5 * self.dt && t <= self.end() + 0.5 * self.dt
    }
}

/// Time series of modal states with optional realised control forcing.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub grid: TimeGrid,
    pub states: Vec<ModalState>,
    /// Modal coordinates of the applied control forcing at each node.
    pub controls: Option<Vec<DVector<f64>>>,
    pub meta: TraceMeta,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scheme: String,
    pub max_energy: f64,
    /// First node the run failed to reach when an energy ceiling stopped
    /// it early; the stored grid and states end just before it.
    pub stopped_at: Option<usize>,
    /// Energy of the rejected state behind `stopped_at`.
    pub stopped_energy: Option<f64>,
}

impl SimulationTrace {
    pub fn state(&self, k: usize) -> &ModalState {
        &self.states[k]
    }

    pub fn last(&self) -> &ModalState {
        self.states.last().expect("trace is never empty")
    }

    /// Energy `sum_j v'_j^2 + lambda_j v_j^2` at each node.
    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(super::energy).collect()
    }

    /// State at an off-node time by linear interpolation.
    pub fn sample(&self, t: f64) -> ModalState {
        let (k, w) = self.grid.locate(t);
        let mut st = self.states[k].clone();
        if w > 0.0 {
            st.scale(1.0 - w);
            st.add_scaled(&self.states[k + 1], w);
        }
        st
    }

    /// Plain CSV: `t, energy, h1_pair_norm[, control_l2]`.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        let with_control = self.controls.is_some();
        if with_control {
            writeln!(out, "t,energy,pair_norm_h1,control_l2")?;
        } else {
            writeln!(out, "t,energy,pair_norm_h1")?;
        }
        for (k, st) in self.states.iter().enumerate() {
            let e = super::energy(st);
            let n1 = st.pair_norm(1.0);
            if let Some(ctrl) = &self.controls {
                writeln!(out, "{},{:.17e},{:.17e},{:.17e}", self.grid.node(k), e, n1, ctrl[k].norm())?;
            } else {
                writeln!(out, "{},{:.17e},{:.17e}", self.grid.node(k), e, n1)?;
            }
        }
        Ok(())
    }
}
