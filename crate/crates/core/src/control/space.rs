use crate::error::{Error, Result};
use crate::spectral::{CutoffField, SpectralBasis};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// The actuated subspace: controls are combinations of the first `m`
/// eigenmodes, injected into the equation through the cutoff, so the
/// realised force is `chi * (c_1 e_1 + ... + c_m e_m)`.
///
/// Holds the injection matrix (modal image of each generator `chi e_j`),
/// the quadrature Gram matrix of the generators, and the fractional weights
/// `lambda_j^sigma` used by the control cost.
///
/// The generators need not be numerically independent: on a thin collar
/// every low mode looks like the same linear ramp, so the Gram collapses
/// quickly with `m`. The control cost acts on the coefficients, not on the
/// realised force, so synthesis stays well posed regardless; span queries
/// go through a rank-revealing factorisation of the injection.
pub struct ControlSpace {
    basis: Arc<SpectralBasis>,
    m: usize,
    sigma: f64,
    uniform_cutoff: bool,
    /// n x m: column j holds the modal coefficients of `chi e_j`.
    injection: DMatrix<f64>,
    /// Generator values on the quadrature grid, one row per generator.
    generator_values: DMatrix<f64>,
    /// m x m quadrature Gram matrix of the generators.
    gram: DMatrix<f64>,
    /// Orthonormal basis of the numerically resolved range of the
    /// injection, columns ordered by decreasing singular value.
    span_basis: DMatrix<f64>,
    rank: usize,
    condition: f64,
    /// lambda_j^sigma for j < m.
    cost_diag: DVector<f64>,
}

impl ControlSpace {
    pub fn new(chi: &CutoffField, m: usize, sigma: f64) -> Result<ControlSpace> {
        let basis = chi.basis().clone();
        let n = basis.n_modes();
        if m == 0 || m > n {
            return Err(Error::InvalidArgument(format!(
                "control dimension {m} outside 1..={n}"
            )));
        }
        if sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fractional index {sigma} negative"
            )));
        }
        let full = chi.matrix();
        let injection = full.columns(0, m).into_owned();

        let modes = basis.modes_at_nodes();
        let mut generator_values = DMatrix::zeros(m, basis.n_quad());
        for j in 0..m {
            for q in 0..basis.n_quad() {
                generator_values[(j, q)] = chi.values()[q] * modes[(j, q)];
            }
        }
        let weights = basis.quad_weights();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let mut s = 0.0;
                for q in 0..basis.n_quad() {
                    s += weights[q] * generator_values[(i, q)] * generator_values[(j, q)];
                }
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }

        let svd = injection.clone().svd(true, false);
        let sv = &svd.singular_values;
        let smax = sv.max();
        if !(smax > 0.0) {
            return Err(Error::Singular(
                "cutoff annihilates every control generator".into(),
            ));
        }
        let rank = sv.iter().filter(|&&s| s > 1e-12 * smax).count();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let u = svd.u.expect("requested u factor");
        let span_basis = u.columns(0, rank).into_owned();

        let cost_diag = DVector::from_fn(m, |j, _| basis.lambda(j).powf(sigma));
        Ok(ControlSpace {
            basis,
            m,
            sigma,
            uniform_cutoff: chi.is_uniform(),
            injection,
            generator_values,
            gram,
            span_basis,
            rank,
            condition,
            cost_diag,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_uniform_cutoff(&self) -> bool {
        self.uniform_cutoff
    }

    /// Modal injection matrix; column j is `chi e_j` projected on the basis.
    pub fn injection(&self) -> &DMatrix<f64> {
        &self.injection
    }

    pub fn generator_values(&self) -> &DMatrix<f64> {
        &self.generator_values
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Numerical rank of the injection.
    pub fn numerical_rank(&self) -> usize {
        self.rank
    }

    /// Singular value spread of the injection; infinite when the generators
    /// collapse completely.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Modal force realised by the coefficient vector `zeta`.
    pub fn force(&self, zeta: &DVector<f64>) -> DVector<f64> {
        &self.injection * zeta
    }

    /// `P_m(chi q)` for a modal field `q`: the first `m` coefficients of the
    /// cutoff-multiplied field, i.e. the transpose of [`Self::force`].
    pub fn observe(&self, q: &DVector<f64>) -> DVector<f64> {
        self.injection.tr_mul(q)
    }

    /// Fractional cost weights `lambda_j^sigma`, j < m.
    pub fn cost_diag(&self) -> &DVector<f64> {
        &self.cost_diag
    }

    /// Squared `H^sigma` norm of a coefficient vector.
    pub fn cost_norm_sq(&self, zeta: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for j in 0..self.m {
            s += self.cost_diag[j] * zeta[j] * zeta[j];
        }
        s
    }

    /// Relative distance of a modal force from the resolved span of the
    /// generators. Zero (to rounding) for anything built by [`Self::force`].
    pub fn span_residual(&self, force: &DVector<f64>) -> f64 {
        let norm = force.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let coeff = self.span_basis.tr_mul(force);
        (force - &self.span_basis * coeff).norm() / norm
    }
}
