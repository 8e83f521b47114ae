use super::basis::SpectralBasis;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Norms below this are treated as exactly zero when fitting slopes.
pub const NORM_FLOOR: f64 = 1e-12;

/// One scan of `h -> |Lambda^(t/2) [psi(-h^2 Lap), a] Lambda^(-s/2)|`.
#[derive(Debug, Clone)]
pub struct CommutatorScan {
    /// `(h, operator norm)` pairs in the order given.
    pub points: Vec<(f64, f64)>,
    /// Whether `h^2 lambda_max >= sup supp psi` at each point; only such
    /// points enter the slope fit (the multiplier must see its whole symbol
    /// inside the stored spectrum, otherwise the decay is a truncation
    /// artefact).
    pub resolvable: Vec<bool>,
    /// Least-squares slope of `log norm` vs `log h` over resolvable points.
    /// `None` when all norms sit at the floor (scalar weight) or fewer than
    /// two usable points remain.
    pub slope: Option<f64>,
    /// True when every scanned norm is at the floor.
    pub degenerate: bool,
}

/// Scan commutator norms of the spectral multiplier `psi(-h^2 Lap)` with
/// multiplication by `a`, measured from `H^source` to `H^target`.
///
/// The operator norm is the largest singular value of
/// `Lambda^(target/2) (Psi_h M_a - M_a Psi_h) Lambda^(-source/2)`.
pub fn commutator_norm_scan(
    basis: &SpectralBasis,
    a_values: &DVector<f64>,
    psi: impl Fn(f64) -> f64,
    psi_support_hi: f64,
    h_list: &[f64],
    source: f64,
    target: f64,
) -> Result<CommutatorScan> {
    if h_list.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 scale samples, got {}",
            h_list.len()
        )));
    }
    if h_list.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive".into()));
    }
    let m_a = basis.mult_operator_matrix(a_values)?;
    let n = basis.n_modes();
    let lam = basis.eigenvalues();
    let lam_max = basis.lambda_max();

    let mut points = Vec::with_capacity(h_list.len());
    let mut resolvable = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let psi_vals: Vec<f64> = (0..n).map(|j| psi(h * h * lam[j])).collect();
        // [Psi, M]_ij = (psi_i - psi_j) M_ij, then the weighted norm.
        let weighted = DMatrix::from_fn(n, n, |i, j| {
            (psi_vals[i] - psi_vals[j])
                * m_a[(i, j)]
                * lam[i].powf(0.5 * target)
                * lam[j].powf(-0.5 * source)
        });
        let norm = weighted.svd(false, false).singular_values[0];
        points.push((h, norm));
        resolvable.push(h * h * lam_max >= psi_support_hi);
    }

    let degenerate = points.iter().all(|&(_, v)| v <= NORM_FLOOR);
    let fit: Vec<(f64, f64)> = points
        .iter()
        .zip(&resolvable)
        .filter(|(&(_, v), &r)| r && v > NORM_FLOOR)
        .map(|(&(h, v), _)| (h.ln(), v.ln()))
        .collect();
    let slope = if degenerate || fit.len() < 2 {
        None
    } else {
        Some(crate::fit::linear_slope(&fit))
    };

    Ok(CommutatorScan {
        points,
        resolvable,
        slope,
        degenerate,
    })
}

/// Exponent chain tying the regularity budget to the multiplier scale:
/// `p = (d + 2) / (2 r)`, `s = 3 / (2 p + 1)`, and the transfer exponent
/// `sigma = s / 3`.
pub fn transfer_exponents(dim: usize, r: f64) -> (f64, f64, f64) {
    let p = (dim as f64 + 2.0) / (2.0 * r);
    let s = 3.0 / (2.0 * p + 1.0);
    (p, s, s / 3.0)
}

/// Smooth bump supported on `[lo, hi]`, equal to its maximum at the
/// geometric midpoint. Used as the reference multiplier symbol in scans.
pub fn bump_symbol(lo: f64, hi: f64) -> impl Fn(f64) -> f64 + Clone {
    move |x: f64| {
        if x <= lo || x >= hi {
            0.0
        } else {
            // exp(-1/(1-t^2)) profile over the log-interval.
            let t = (2.0 * (x.ln() - lo.ln()) / (hi.ln() - lo.ln())) - 1.0;
            (-1.0 / (1.0 - t * t)).exp() * std::f64::consts::E
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DomainSpec;
    use std::f64::consts::PI;

    fn basis(n: usize) -> SpectralBasis {
        SpectralBasis::build(DomainSpec::interval(PI, -1.0, 0.4).unwrap(), n).unwrap()
    }

    #[test]
    fn scalar_weight_gives_zero_commutator() {
        let b = basis(12);
        let a = b.field_values(|_| 0.7);
        let scan = commutator_norm_scan(
            &b,
            &a,
            bump_symbol(0.25, 4.0),
            4.0,
            &[0.1, 0.2, 0.4, 0.8],
            1.0,
            0.0,
        )
        .unwrap();
        assert!(scan.degenerate);
        assert!(scan.slope.is_none());
        for (_, v) in scan.points {
            assert!(v <= 1e-10);
        }
    }

    #[test]
    fn too_few_scales_rejected() {
        let b = basis(6);
        let a = b.field_values(|p| p[0]);
        assert!(
            commutator_norm_scan(&b, &a, |x| x, 1.0, &[0.1, 0.2], 1.0, 0.0).is_err()
        );
        assert!(
            commutator_norm_scan(&b, &a, |x| x, 1.0, &[0.1, -0.2, 0.3], 1.0, 0.0).is_err()
        );
    }

    #[test]
    fn exponent_chain_for_cubic_interval() {
        let (p, s, sigma) = transfer_exponents(1, 1.0);
        assert!((p - 1.5).abs() < 1e-15);
        assert!((s - 0.75).abs() < 1e-15);
        assert!((sigma - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bump_symbol_support() {
        let psi = bump_symbol(0.25, 4.0);
        assert_eq!(psi(0.2), 0.0);
        assert_eq!(psi(4.5), 0.0);
        assert!(psi(1.0) > 0.9);
    }
}
