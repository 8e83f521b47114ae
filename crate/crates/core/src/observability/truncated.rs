use super::gramian::{GramianAssembly, EIGEN_TOL};
use crate::error::{Error, Result};
use crate::waveop::propagate_pair_columns;
use nalgebra::{DMatrix, DVector};

/// Observability constant restricted to trajectories whose terminal pair
/// lies in the span of the first `n_terminal` modes, observed through the
/// first `m` modes only.
#[derive(Debug, Clone)]
pub struct TruncatedObsReport {
    pub n_terminal: usize,
    pub m: usize,
    /// Generalized spectrum of the truncated form on the constrained
    /// subspace, ascending.
    pub spectrum: Vec<f64>,
    pub truncated_constant: f64,
    /// Same subspace, observation kept on all modes.
    pub constrained_full_constant: f64,
    /// Unconstrained constant of the full Gramian.
    pub full_constant: f64,
    /// `truncated / constrained_full`; never below one up to rounding.
    pub ratio: f64,
}

/// Outcome of the minimal-m search.
#[derive(Debug, Clone)]
pub struct SelectedTruncation {
    pub m: usize,
    pub factor: f64,
    pub report: TruncatedObsReport,
    /// `(m, truncated constant)` for every m tried, in scan order.
    pub history: Vec<(usize, f64)>,
}

/// Basis of initial pairs whose evolution under the anti-damped system ends
/// in `H_N x H_N` at the horizon.
///
/// Built by running the reversed equation (true damping, time-reflected
/// potential) forward from the terminal basis; the velocity flips sign on
/// the way in and out of the reversed frame.
pub fn constrained_subspace(asm: &GramianAssembly, n_terminal: usize) -> Result<DMatrix<f64>> {
    let basis = asm.basis();
    let n = basis.n_modes();
    if n_terminal == 0 || n_terminal > n {
        return Err(Error::InvalidArgument(format!(
            "terminal subspace size {n_terminal} outside 1..={n}"
        )));
    }
    let horizon = asm.horizon();
    let reversed = asm.potential().time_reversed(horizon);
    let mut cols = DMatrix::zeros(2 * n, 2 * n_terminal);
    for i in 0..n_terminal {
        cols[(i, i)] = 1.0;
        cols[(n + i, n_terminal + i)] = -1.0;
    }
    let start_energy: Vec<f64> = pair_col_energies(basis.eigenvalues(), &cols);
    propagate_pair_columns(asm.gamma(), &reversed, basis, asm.grid(), &mut cols, |_, _, _| {})?;
    // Back to the original time direction.
    for i in 0..2 * n_terminal {
        for j in 0..n {
            cols[(n + j, i)] = -cols[(n + j, i)];
        }
    }
    // Coarse a priori growth ceiling: damping can only help, the potential
    // can pump at most exp(|b| / sqrt(lambda_1) * T) in energy per unit.
    let rate = asm.gamma().abs() + asm.potential().bound() / basis.lambda(0).sqrt() + 0.1;
    let ceiling = (2.0 * rate * horizon).exp() * 10.0;
    for (c, e) in pair_col_energies(basis.eigenvalues(), &cols).iter().enumerate() {
        if !e.is_finite() || *e > ceiling * start_energy[c] {
            return Err(Error::Instability {
                t: horizon,
                energy: *e,
            });
        }
    }
    Ok(cols)
}

fn pair_col_energies(eigenvalues: &DVector<f64>, cols: &DMatrix<f64>) -> Vec<f64> {
    let n = eigenvalues.len();
    (0..cols.ncols())
        .map(|c| {
            let col = cols.column(c);
            (0..n)
                .map(|j| col[n + j] * col[n + j] + eigenvalues[j] * col[j] * col[j])
                .sum()
        })
        .collect()
}

/// Ascending generalized spectrum of `x^T G x / x^T W x` over the span of
/// `subspace`, with `W` the diagonal pair weight.
fn restricted_spectrum(
    g: &DMatrix<f64>,
    w_diag: &DVector<f64>,
    subspace: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let a = subspace.transpose() * g * subspace;
    let mut wc = subspace.clone();
    for (i, mut row) in wc.row_iter_mut().enumerate() {
        row *= w_diag[i];
    }
    let b = subspace.transpose() * wc;
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::Singular("constrained subspace is degenerate".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let sym = 0.5 * (&z + z.transpose());
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev)
}

fn constant_of(spectrum: &[f64]) -> f64 {
    let lo = spectrum.first().copied().unwrap_or(0.0);
    let hi = spectrum.last().copied().unwrap_or(0.0);
    if lo > EIGEN_TOL * hi.max(0.0) && lo > 0.0 {
        1.0 / lo
    } else {
        f64::INFINITY
    }
}

fn truncated_with(
    asm: &GramianAssembly,
    subspace: &DMatrix<f64>,
    n_terminal: usize,
    m: usize,
    full_constant: f64,
) -> Result<TruncatedObsReport> {
    let n = asm.basis().n_modes();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "observation truncation {m} outside 1..={n}"
        )));
    }
    let w = asm.weight_diag();
    let spectrum = restricted_spectrum(&asm.prefix(m), &w, subspace)?;
    let truncated_constant = constant_of(&spectrum);
    let full_spec = restricted_spectrum(&asm.full(), &w, subspace)?;
    let constrained_full_constant = constant_of(&full_spec);
    Ok(TruncatedObsReport {
        n_terminal,
        m,
        spectrum,
        truncated_constant,
        constrained_full_constant,
        full_constant,
        ratio: truncated_constant / constrained_full_constant,
    })
}

/// Constant of the observation truncated to `m` modes on the subspace of
/// data ending in `H_N x H_N`.
pub fn truncated_constant(
    asm: &GramianAssembly,
    n_terminal: usize,
    m: usize,
) -> Result<TruncatedObsReport> {
    let subspace = constrained_subspace(asm, n_terminal)?;
    let full_constant = asm.report().m6;
    truncated_with(asm, &subspace, n_terminal, m, full_constant)
}

/// Smallest `m` whose truncated constant stays within `factor` times the
/// unconstrained full constant.
pub fn select_m(
    asm: &GramianAssembly,
    n_terminal: usize,
    factor: f64,
) -> Result<SelectedTruncation> {
    let full_constant = asm.report().m6;
    if !full_constant.is_finite() {
        return Err(Error::Infeasible(
            "full observability constant is infinite".into(),
        ));
    }
    let subspace = constrained_subspace(asm, n_terminal)?;
    let n = asm.basis().n_modes();
    let threshold = factor * full_constant;
    let mut history = Vec::new();
    for m in 1..=n {
        let rep = truncated_with(asm, &subspace, n_terminal, m, full_constant)?;
        history.push((m, rep.truncated_constant));
        if rep.truncated_constant <= threshold {
            return Ok(SelectedTruncation {
                m,
                factor,
                report: rep,
                history,
            });
        }
    }
    Err(Error::Infeasible(format!(
        "no observation truncation up to {n} meets {factor} x full constant"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{CutoffField, DomainSpec, SpectralBasis};
    use crate::waveop::PotentialField;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn assembly(
        n: usize,
        chi_one: bool,
        gamma: f64,
        with_potential: bool,
        horizon: f64,
    ) -> GramianAssembly {
        let b = Arc::new(
            SpectralBasis::build(DomainSpec::interval(PI, -1.0, 0.4).unwrap(), n).unwrap(),
        );
        let chi = if chi_one {
            CutoffField::constant_one(b.clone())
        } else {
            CutoffField::collar(b.clone())
        };
        let p = if with_potential {
            PotentialField::constant_fn(b.clone(), |x| 0.6 * (x[0]).cos(), 1.0)
        } else {
            PotentialField::zero(b.clone())
        };
        GramianAssembly::assemble(&p, &chi, horizon, 0.2, gamma, 2e-3).unwrap()
    }

    #[test]
    fn decoupled_scan_selects_exactly_the_terminal_size() {
        // With a uniform cutoff and no potential, modes never mix: an
        // observation missing mode N cannot see the pure mode-N tail state.
        let asm = assembly(6, true, 0.1, false, 4.0);
        let sel = select_m(&asm, 3, 2.0).unwrap();
        assert_eq!(sel.m, 3);
        for (m, c) in &sel.history {
            if *m < 3 {
                assert!(
                    *c > 2.0 * sel.report.full_constant,
                    "m = {m} should violate, constant {c}"
                );
            }
        }
        assert!(sel.report.truncated_constant <= 2.0 * sel.report.full_constant);
    }

    #[test]
    fn full_observation_on_full_subspace_matches_unconstrained() {
        let asm = assembly(5, false, 0.1, true, 3.0);
        let rep = truncated_constant(&asm, 5, 5).unwrap();
        let rel = (rep.truncated_constant - rep.full_constant).abs() / rep.full_constant;
        assert!(rel < 1e-8, "rel {rel}");
        assert!((rep.ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn truncated_matches_constrained_full_at_m_equals_n() {
        let asm = assembly(5, false, 0.2, true, 3.0);
        let rep = truncated_constant(&asm, 2, 5).unwrap();
        let rel = (rep.truncated_constant - rep.constrained_full_constant).abs()
            / rep.constrained_full_constant;
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn constant_never_increases_with_more_observed_modes() {
        let asm = assembly(2, false, 0.0, false, 5.0);
        let c1 = truncated_constant(&asm, 2, 1).unwrap().truncated_constant;
        let c2 = truncated_constant(&asm, 2, 2).unwrap().truncated_constant;
        assert!(c1 >= c2 * (1.0 - 1e-12), "c1 {c1} c2 {c2}");
    }

    #[test]
    fn ratio_at_least_one() {
        let asm = assembly(6, false, 0.15, true, 3.5);
        for (nt, m) in [(2, 3), (3, 4), (4, 6), (6, 2)] {
            let rep = truncated_constant(&asm, nt, m).unwrap();
            assert!(
                rep.ratio >= 1.0 - 1e-10 || rep.ratio.is_nan() && rep.truncated_constant.is_infinite(),
                "ratio {} at nt {nt} m {m}",
                rep.ratio
            );
        }
    }

    #[test]
    fn infinite_factor_accepts_the_first_truncation() {
        let asm = assembly(4, true, 0.1, false, 4.0);
        let sel = select_m(&asm, 2, f64::INFINITY).unwrap();
        assert_eq!(sel.m, 1);
    }

    #[test]
    fn larger_factor_never_selects_more_modes() {
        let asm = assembly(5, false, 0.1, true, 3.0);
        let m2 = select_m(&asm, 3, 2.0).unwrap().m;
        let m10 = select_m(&asm, 3, 10.0).unwrap().m;
        assert!(m10 <= m2);
    }

    #[test]
    fn bad_sizes_rejected() {
        let asm = assembly(3, true, 0.0, false, 3.0);
        assert!(truncated_constant(&asm, 0, 1).is_err());
        assert!(truncated_constant(&asm, 4, 1).is_err());
        assert!(truncated_constant(&asm, 2, 0).is_err());
        assert!(truncated_constant(&asm, 2, 4).is_err());
    }
}
