use super::domain::DomainSpec;
use super::quadrature::Rule1d;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Dirichlet Laplacian eigenbasis on a box, truncated to the `n_modes`
/// smallest eigenvalues, together with a quadrature grid that integrates
/// products of up to three stored modes exactly.
///
/// Interval `(0, L)`: `e_j(x) = sqrt(2/L) sin(j pi x / L)`,
/// `lambda_j = (j pi / L)^2`. Rectangles take tensor products and are sorted
/// by eigenvalue with lexicographic tie-breaking on the index pair.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    domain: DomainSpec,
    n_modes: usize,
    eigenvalues: DVector<f64>,
    indices: Vec<[usize; 2]>,
    nodes: Vec<[f64; 2]>,
    weights: DVector<f64>,
    /// `n_modes x n_quad` table of eigenfunction values at quadrature nodes.
    modes_at_nodes: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn build(domain: DomainSpec, n_modes: usize) -> Result<SpectralBasis> {
        domain.validate()?;
        if n_modes == 0 {
            return Err(Error::InvalidArgument("n_modes must be >= 1".into()));
        }
        match domain {
            DomainSpec::Interval { length, .. } => {
                let indices: Vec<[usize; 2]> = (1..=n_modes).map(|j| [j, 0]).collect();
                let eigenvalues = DVector::from_iterator(
                    n_modes,
                    indices
                        .iter()
                        .map(|ix| (ix[0] as f64 * std::f64::consts::PI / length).powi(2)),
                );
                let rule = Rule1d::for_modes(length, n_modes);
                let nodes: Vec<[f64; 2]> = rule.nodes.iter().map(|&x| [x, 0.0]).collect();
                let weights = DVector::from_vec(rule.weights.clone());
                let modes_at_nodes = DMatrix::from_fn(n_modes, nodes.len(), |m, q| {
                    eval_sine(length, indices[m][0], nodes[q][0])
                });
                Ok(SpectralBasis {
                    domain,
                    n_modes,
                    eigenvalues,
                    indices,
                    nodes,
                    weights,
                    modes_at_nodes,
                })
            }
            DomainSpec::Rectangle { lengths, .. } => {
                let indices = enumerate_rect_modes(lengths, n_modes);
                let eigenvalues = DVector::from_iterator(
                    n_modes,
                    indices.iter().map(|ix| rect_lambda(lengths, *ix)),
                );
                let max_ix = [
                    indices.iter().map(|ix| ix[0]).max().unwrap(),
                    indices.iter().map(|ix| ix[1]).max().unwrap(),
                ];
                let rx = Rule1d::for_modes(lengths[0], max_ix[0]);
                let ry = Rule1d::for_modes(lengths[1], max_ix[1]);
                let mut nodes = Vec::with_capacity(rx.len() * ry.len());
                let mut weights = Vec::with_capacity(rx.len() * ry.len());
                for (x, wx) in rx.nodes.iter().zip(&rx.weights) {
                    for (y, wy) in ry.nodes.iter().zip(&ry.weights) {
                        nodes.push([*x, *y]);
                        weights.push(wx * wy);
                    }
                }
                let modes_at_nodes = DMatrix::from_fn(n_modes, nodes.len(), |m, q| {
                    eval_sine(lengths[0], indices[m][0], nodes[q][0])
                        * eval_sine(lengths[1], indices[m][1], nodes[q][1])
                });
                Ok(SpectralBasis {
                    domain,
                    n_modes,
                    eigenvalues,
                    indices,
                    nodes,
                    weights: DVector::from_vec(weights),
                    modes_at_nodes,
                })
            }
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn lambda(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.n_modes - 1]
    }

    pub fn mode_indices(&self) -> &[[usize; 2]] {
        &self.indices
    }

    pub fn n_quad(&self) -> usize {
        self.nodes.len()
    }

    pub fn quad_nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn modes_at_nodes(&self) -> &DMatrix<f64> {
        &self.modes_at_nodes
    }

    /// Step size `1 / (20 sqrt(lambda_max))`: twenty solver steps per radian
    /// of the fastest stored mode.
    pub fn default_dt(&self) -> f64 {
        1.0 / (20.0 * self.lambda_max().sqrt())
    }

    /// Pointwise values of `f` on the quadrature grid.
    pub fn field_values(&self, f: impl Fn([f64; 2]) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.nodes.len(), self.nodes.iter().map(|&p| f(p)))
    }

    /// Eigenfunction value at an arbitrary point (not restricted to the grid).
    pub fn eval_mode(&self, m: usize, p: [f64; 2]) -> f64 {
        let ix = self.indices[m];
        match self.domain {
            DomainSpec::Interval { length, .. } => eval_sine(length, ix[0], p[0]),
            DomainSpec::Rectangle { lengths, .. } => {
                eval_sine(lengths[0], ix[0], p[0]) * eval_sine(lengths[1], ix[1], p[1])
            }
        }
    }

    /// Field synthesis at an arbitrary point from modal coefficients.
    pub fn eval_field(&self, coeffs: &DVector<f64>, p: [f64; 2]) -> f64 {
        (0..self.n_modes).map(|m| coeffs[m] * self.eval_mode(m, p)).sum()
    }

    /// L2 projection of grid values onto the basis: `c_m = sum_q w_q f_q e_m(x_q)`.
    pub fn project_values(&self, values: &DVector<f64>) -> DVector<f64> {
        let weighted = values.component_mul(&self.weights);
        &self.modes_at_nodes * weighted
    }

    /// Grid values of the field with the given modal coefficients.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.modes_at_nodes.tr_mul(coeffs)
    }

    /// Galerkin matrix of multiplication by `a`: `M_ij = int a e_i e_j`.
    /// Symmetrised exactly; `a` is given by its grid values.
    pub fn mult_operator_matrix(&self, a_values: &DVector<f64>) -> Result<DMatrix<f64>> {
        if a_values.len() != self.nodes.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, quadrature grid has {}",
                a_values.len(),
                self.nodes.len()
            )));
        }
        let wa = a_values.component_mul(&self.weights);
        let mut scaled = self.modes_at_nodes.clone();
        for (q, col) in scaled.column_iter_mut().enumerate() {
            let mut col = col;
            col *= wa[q];
        }
        let m = &scaled * self.modes_at_nodes.transpose();
        Ok(0.5 * (&m + m.transpose()))
    }

    /// Fractional Sobolev norm of a coefficient vector:
    /// `(sum_j lambda_j^s c_j^2)^(1/2)`.
    pub fn h_norm(&self, coeffs: &DVector<f64>, s: f64) -> f64 {
        coeffs
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(c, l)| l.powf(s) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Scale coefficient `j` by `psi(h^2 lambda_j)` in place.
    pub fn apply_multiplier(&self, coeffs: &mut DVector<f64>, psi: impl Fn(f64) -> f64, h: f64) {
        for (c, l) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= psi(h * h * l);
        }
    }

    pub fn same_as(&self, other: &SpectralBasis) -> bool {
        self.domain == other.domain && self.n_modes == other.n_modes
    }
}

fn eval_sine(length: f64, j: usize, x: f64) -> f64 {
    (2.0 / length).sqrt() * (j as f64 * std::f64::consts::PI * x / length).sin()
}

fn rect_lambda(lengths: [f64; 2], ix: [usize; 2]) -> f64 {
    (ix[0] as f64 * std::f64::consts::PI / lengths[0]).powi(2)
        + (ix[1] as f64 * std::f64::consts::PI / lengths[1]).powi(2)
}

/// First `n_modes` tensor modes by eigenvalue. The per-dimension cap grows
/// until the selected block provably contains the n-th smallest eigenvalue.
fn enumerate_rect_modes(lengths: [f64; 2], n_modes: usize) -> Vec<[usize; 2]> {
    let mut cap = (n_modes as f64).sqrt().ceil() as usize + 1;
    loop {
        let mut all: Vec<[usize; 2]> = Vec::with_capacity(cap * cap);
        for j in 1..=cap {
            for k in 1..=cap {
                all.push([j, k]);
            }
        }
        all.sort_by(|a, b| {
            rect_lambda(lengths, *a)
                .total_cmp(&rect_lambda(lengths, *b))
                .then(a.cmp(b))
        });
        let beyond = rect_lambda(lengths, [cap + 1, 1]).min(rect_lambda(lengths, [1, cap + 1]));
        if all.len() >= n_modes && rect_lambda(lengths, all[n_modes - 1]) <= beyond {
            all.truncate(n_modes);
            return all;
        }
        cap *= 2;
    }
}
