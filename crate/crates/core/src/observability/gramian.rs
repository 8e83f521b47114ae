use crate::error::{Error, Result};
use crate::fit::trapezoid_weights;
use crate::spectral::{CutoffField, SpectralBasis};
use crate::waveop::{propagate_pair_columns, PotentialField, TimeGrid};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Relative eigenvalue floor below which a Gramian direction counts as
/// unobserved and the derived constant is flagged infinite.
pub const EIGEN_TOL: f64 = 1e-10;

/// Observation Gramian of the anti-damped system
/// `v'' - gamma v' - Lap v + b v = 0`, observed through the cutoff as
/// `int_0^T |chi v(t)|_{-sigma}^2 dt`.
///
/// The quadratic form is kept as one positive part per observed mode, so the
/// Gramian of an observation truncated to the first `m` modes is the prefix
/// sum of `partials`. Initial data live in plain pair coordinates; norms are
/// taken against the diagonal weight `diag(lambda^-sigma, lambda^-sigma-1)`.
#[derive(Debug, Clone)]
pub struct GramianAssembly {
    basis: Arc<SpectralBasis>,
    potential: PotentialField,
    chi: CutoffField,
    sigma: f64,
    gamma: f64,
    grid: TimeGrid,
    partials: Vec<DMatrix<f64>>,
}

/// Spectrum summary of an assembled Gramian in weighted coordinates.
#[derive(Debug, Clone)]
pub struct GramianReport {
    pub horizon: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// `W^{-1/2} G W^{-1/2}`: the form whose smallest eigenvalue is the
    /// reciprocal observability constant.
    pub weighted: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `1/lambda_min`, infinite when the spectrum touches the floor.
    pub m6: f64,
    /// Whether the horizon clears the geometric threshold of the domain.
    pub meets_time_threshold: bool,
    pub config_hash: u64,
}

pub(crate) fn config_hash(parts: impl IntoIterator<Item = f64>) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for p in parts {
        p.to_bits().hash(&mut h);
    }
    h.finish()
}

impl GramianAssembly {
    /// Propagates the full pair basis over `[0, horizon]` and accumulates the
    /// per-mode observation forms with trapezoidal time weights.
    pub fn assemble(
        potential: &PotentialField,
        chi: &CutoffField,
        horizon: f64,
        sigma: f64,
        gamma: f64,
        dt_target: f64,
    ) -> Result<GramianAssembly> {
        let basis = chi.basis().clone();
        if !potential.is_zero() && !potential.basis().same_as(&basis) {
            return Err(Error::BasisMismatch);
        }
        let n = basis.n_modes();
        let grid = TimeGrid::span(0.0, horizon, dt_target)?;
        if !potential.covers(0.0, horizon) {
            return Err(Error::InvalidArgument(
                "potential frames do not cover the observation window".into(),
            ));
        }
        let weights = trapezoid_weights(grid.len, grid.dt);
        let chi_m = if chi.is_uniform() { None } else { Some(chi.matrix()) };
        let sig_weights: Vec<f64> = (0..n).map(|j| basis.lambda(j).powf(-sigma)).collect();

        let mut partials = vec![DMatrix::zeros(2 * n, 2 * n); n];
        let mut columns = DMatrix::identity(2 * n, 2 * n);
        let mut row = DVector::zeros(2 * n);
        propagate_pair_columns(-gamma, potential, &basis, &grid, &mut columns, |k, _, cols| {
            let pos = cols.rows(0, n);
            let obs = match &chi_m {
                Some(x) => x * pos,
                None => pos.into_owned(),
            };
            for j in 0..n {
                row.tr_copy_from(&obs.row(j));
                partials[j].ger(weights[k] * sig_weights[j], &row, &row, 1.0);
            }
        })?;

        for p in &partials {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NotConverged {
                    what: "gramian accumulation".into(),
                    residual: f64::INFINITY,
                    tol: 0.0,
                });
            }
        }
        Ok(GramianAssembly {
            basis,
            potential: potential.clone(),
            chi: chi.clone(),
            sigma,
            gamma,
            grid,
            partials,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    pub fn chi(&self) -> &CutoffField {
        &self.chi
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> f64 {
        self.grid.end()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Gramian of the observation truncated to the first `m` modes.
    pub fn prefix(&self, m: usize) -> DMatrix<f64> {
        let n = self.basis.n_modes();
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        for p in self.partials.iter().take(m) {
            g += p;
        }
        g
    }

    pub fn full(&self) -> DMatrix<f64> {
        self.prefix(self.basis.n_modes())
    }

    /// Diagonal of the pair weight `diag(lambda^-sigma, lambda^-sigma-1)`.
    pub fn weight_diag(&self) -> DVector<f64> {
        let n = self.basis.n_modes();
        DVector::from_fn(2 * n, |i, _| {
            let j = i % n;
            let p = if i < n { -self.sigma } else { -self.sigma - 1.0 };
            self.basis.lambda(j).powf(p)
        })
    }

    pub fn report(&self) -> GramianReport {
        let g = self.full();
        let w = self.weight_diag();
        let n2 = g.nrows();
        let mut weighted = g;
        for i in 0..n2 {
            for j in 0..n2 {
                weighted[(i, j)] *= (w[i] * w[j]).sqrt().recip();
            }
        }
        let eig = weighted.clone().symmetric_eigen();
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min();
        let m6 = if lambda_min > EIGEN_TOL * lambda_max.max(0.0) && lambda_min > 0.0 {
            1.0 / lambda_min
        } else {
            f64::INFINITY
        };
        let mut hash_parts = vec![
            self.horizon(),
            self.sigma,
            self.gamma,
            self.grid.dt,
            self.basis.n_modes() as f64,
            self.basis.lambda_max(),
            self.potential.bound(),
        ];
        hash_parts.extend(self.chi.values().iter().copied());
        GramianReport {
            horizon: self.horizon(),
            sigma: self.sigma,
            gamma: self.gamma,
            weighted,
            lambda_min,
            lambda_max,
            m6,
            meets_time_threshold: self.horizon() > self.basis.domain().t_min(),
            config_hash: config_hash(hash_parts),
        }
    }
}

/// One-shot Gramian spectrum report.
pub fn gramian(
    potential: &PotentialField,
    chi: &CutoffField,
    horizon: f64,
    sigma: f64,
    gamma: f64,
    dt_target: f64,
) -> Result<GramianReport> {
    Ok(GramianAssembly::assemble(potential, chi, horizon, sigma, gamma, dt_target)?.report())
}

/// Reciprocal of the smallest weighted eigenvalue; infinite when the
/// configuration does not observe some direction.
pub fn observability_constant(report: &GramianReport) -> f64 {
    report.m6
}
