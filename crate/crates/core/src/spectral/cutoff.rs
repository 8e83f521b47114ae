use super::basis::SpectralBasis;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Smooth localisation weight for observation and actuation.
///
/// The collar variant equals 1 within `delta/2` of the boundary part
/// illuminated from `x0`, falls to 0 across a quintic-smoothstep band of
/// width `delta/4`, and vanishes at distance `3 delta/4` and beyond, so its
/// support stays inside the `delta`-collar with margin.
#[derive(Debug, Clone)]
pub struct CutoffField {
    basis: Arc<SpectralBasis>,
    values: DVector<f64>,
    uniform: bool,
}

impl CutoffField {
    /// Collar cutoff around the illuminated boundary of the basis domain.
    pub fn collar(basis: Arc<SpectralBasis>) -> CutoffField {
        let delta = basis.domain().delta();
        let domain = basis.domain().clone();
        let values = basis.field_values(|p| {
            let d = domain.dist_to_illuminated(p);
            1.0 - smoothstep((d - 0.5 * delta) / (0.25 * delta))
        });
        CutoffField {
            basis,
            values,
            uniform: false,
        }
    }

    /// Constant weight 1: full observation. Exempt from the support
    /// invariant, used for reference constants.
    pub fn constant_one(basis: Arc<SpectralBasis>) -> CutoffField {
        let values = basis.field_values(|_| 1.0);
        CutoffField {
            basis,
            values,
            uniform: true,
        }
    }

    /// Arbitrary weight from a closure; values are clamped to `[0, 1]`.
    pub fn from_fn(basis: Arc<SpectralBasis>, f: impl Fn([f64; 2]) -> f64) -> CutoffField {
        let values = basis.field_values(|p| f(p).clamp(0.0, 1.0));
        CutoffField {
            basis,
            values,
            uniform: false,
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Galerkin multiplication matrix of the weight.
    pub fn matrix(&self) -> DMatrix<f64> {
        self.basis
            .mult_operator_matrix(&self.values)
            .expect("cutoff values live on the basis grid")
    }

    pub fn check_same_basis(&self, basis: &SpectralBasis) -> Result<()> {
        if self.basis.same_as(basis) {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }
}

/// Quintic smoothstep: 0 below 0, 1 above 1, C^2 across the band.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}
