use super::trace::TimeGrid;
use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Time-dependent multiplication potential `b(t, x)`.
///
/// The field is held by its values on the basis quadrature grid; time
/// variation is piecewise linear between its own frames, which may be much
/// coarser than a solver grid. The Galerkin action `v -> P_n (b v)` is
/// applied pseudo-spectrally (synthesise, multiply, project), which agrees
/// with the assembled matrix because the quadrature is exact for stored
/// triple products.
#[derive(Debug, Clone)]
pub struct PotentialField {
    basis: Arc<SpectralBasis>,
    data: PotentialData,
    /// `sup_k max_x |b(t_k, x)|` over stored frames.
    bound: f64,
    /// `sup_k` of the truncated `H^r` coefficient norm of `b(t_k)`.
    h_r_bound: f64,
    r: f64,
}

#[derive(Debug, Clone)]
enum PotentialData {
    Zero,
    Static(DVector<f64>),
    Sampled { grid: TimeGrid, frames: Vec<DVector<f64>> },
}

impl PotentialField {
    pub fn zero(basis: Arc<SpectralBasis>) -> PotentialField {
        PotentialField {
            basis,
            data: PotentialData::Zero,
            bound: 0.0,
            h_r_bound: 0.0,
            r: 1.0,
        }
    }

    /// Time-constant potential from grid values.
    pub fn constant(basis: Arc<SpectralBasis>, values: DVector<f64>, r: f64) -> Result<PotentialField> {
        if values.len() != basis.n_quad() {
            return Err(Error::GridMismatch(format!(
                "potential has {} values, quadrature grid has {}",
                values.len(),
                basis.n_quad()
            )));
        }
        let bound = values.amax();
        let h_r_bound = basis.h_norm(&basis.project_values(&values), r);
        Ok(PotentialField {
            basis,
            data: PotentialData::Static(values),
            bound,
            h_r_bound,
            r,
        })
    }

    pub fn constant_fn(
        basis: Arc<SpectralBasis>,
        f: impl Fn([f64; 2]) -> f64,
        r: f64,
    ) -> PotentialField {
        let values = basis.field_values(f);
        PotentialField::constant(basis, values, r).expect("values built on the basis grid")
    }

    /// Time-sampled potential; frame `k` holds values at `grid.node(k)`.
    pub fn sampled(
        basis: Arc<SpectralBasis>,
        grid: TimeGrid,
        frames: Vec<DVector<f64>>,
        r: f64,
    ) -> Result<PotentialField> {
        if frames.len() != grid.len {
            return Err(Error::GridMismatch(format!(
                "{} frames for a grid of {} nodes",
                frames.len(),
                grid.len
            )));
        }
        let mut bound = 0.0f64;
        let mut h_r_bound = 0.0f64;
        for f in &frames {
            if f.len() != basis.n_quad() {
                return Err(Error::GridMismatch("frame size != quadrature grid".into()));
            }
            bound = bound.max(f.amax());
            h_r_bound = h_r_bound.max(basis.h_norm(&basis.project_values(f), r));
        }
        Ok(PotentialField {
            basis,
            data: PotentialData::Sampled { grid, frames },
            bound,
            h_r_bound,
            r,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.data, PotentialData::Zero)
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.data, PotentialData::Zero | PotentialData::Static(_))
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn h_r_bound(&self) -> f64 {
        self.h_r_bound
    }

    pub fn regularity(&self) -> f64 {
        self.r
    }

    /// Static field holding the time average of this one over `[a, b]`,
    /// midpoint-sampled. Useful as a terminal seed for backward value
    /// sweeps over oscillatory coefficients.
    pub fn averaged(&self, a: f64, b: f64, samples: usize) -> Result<PotentialField> {
        if !(b > a) || samples == 0 {
            return Err(Error::InvalidArgument(
                "averaging window must have positive length and samples".into(),
            ));
        }
        let mut mean = DVector::zeros(self.basis.n_quad());
        let h = (b - a) / samples as f64;
        for i in 0..samples {
            mean += self.values_at(a + (i as f64 + 0.5) * h);
        }
        mean /= samples as f64;
        PotentialField::constant(self.basis.clone(), mean, self.r)
    }

    /// Whether the potential is defined over `[a, b]` (always true for
    /// time-constant data).
    pub fn covers(&self, a: f64, b: f64) -> bool {
        match &self.data {
            PotentialData::Zero | PotentialData::Static(_) => true,
            PotentialData::Sampled { grid, .. } => grid.covers(a) && grid.covers(b),
        }
    }

    /// Grid values at time `t` (piecewise linear, clamped at the ends).
    pub fn values_at(&self, t: f64) -> DVector<f64> {
        match &self.data {
            PotentialData::Zero => DVector::zeros(self.basis.n_quad()),
            PotentialData::Static(v) => v.clone(),
            PotentialData::Sampled { grid, frames } => {
                let (k, w) = grid.locate(t);
                if w == 0.0 {
                    frames[k].clone()
                } else {
                    let mut v = frames[k].clone();
                    v *= 1.0 - w;
                    v.axpy(w, &frames[k + 1], 1.0);
                    v
                }
            }
        }
    }

    /// Modal action `P_n (b(t) v)` for modal coefficients `v`.
    pub fn apply(&self, t: f64, v: &DVector<f64>) -> DVector<f64> {
        if self.is_zero() {
            return DVector::zeros(v.len());
        }
        let vals = self.values_at(t);
        let grid_v = self.basis.synthesize(v);
        self.basis.project_values(&grid_v.component_mul(&vals))
    }

    /// Same action on each column of a modal matrix.
    pub fn apply_matrix(&self, t: f64, v: &DMatrix<f64>) -> DMatrix<f64> {
        if self.is_zero() {
            return DMatrix::zeros(v.nrows(), v.ncols());
        }
        let vals = self.values_at(t);
        let modes = self.basis.modes_at_nodes();
        let mut grid = modes.tr_mul(v); // n_quad x cols
        let w = self.basis.quad_weights();
        for (q, mut row) in grid.row_iter_mut().enumerate() {
            row *= vals[q] * w[q];
        }
        modes * grid
    }

    /// The field `s -> b(horizon - s, x)`, for time-reversed solves.
    pub fn time_reversed(&self, horizon: f64) -> PotentialField {
        match &self.data {
            PotentialData::Zero | PotentialData::Static(_) => self.clone(),
            PotentialData::Sampled { grid, frames } => {
                let rev: Vec<DVector<f64>> = frames.iter().rev().cloned().collect();
                let rgrid = TimeGrid {
                    t0: horizon - grid.end(),
                    dt: grid.dt,
                    len: grid.len,
                };
                PotentialField {
                    basis: self.basis.clone(),
                    data: PotentialData::Sampled { grid: rgrid, frames: rev },
                    bound: self.bound,
                    h_r_bound: self.h_r_bound,
                    r: self.r,
                }
            }
        }
    }

    /// Assembled Galerkin matrix at time `t`.
    pub fn matrix_at(&self, t: f64) -> DMatrix<f64> {
        if self.is_zero() {
            return DMatrix::zeros(self.basis.n_modes(), self.basis.n_modes());
        }
        self.basis
            .mult_operator_matrix(&self.values_at(t))
            .expect("potential values live on the basis grid")
    }
}
