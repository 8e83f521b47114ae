use crate::spectral::{ModalState, SpectralBasis};
use nalgebra::DVector;

/// Exact flow of one damped mode `v'' + gamma v' + lambda v = 0` over time
/// `t`, as the 2x2 matrix `[[a11, a12], [a21, a22]]` acting on `(v, v')`.
///
/// All three root regimes share one formula through
/// `ctilde = cos(w t) | cosh(k t) | series` and the normalised companion
/// `stilde = sin(w t)/w | sinh(k t)/k | t series`; near the critical
/// discriminant a truncated series avoids cancellation.
pub fn mode_flow(lambda: f64, gamma: f64, t: f64) -> [f64; 4] {
    let disc = 0.25 * gamma * gamma - lambda;
    let (ctilde, stilde) = if disc.abs() * t * t < 1e-6 {
        // |disc t^2| tiny: 4-term series, remainder below 1e-26.
        let z = disc * t * t;
        let c = 1.0 + z * (0.5 + z * (1.0 / 24.0 + z / 720.0));
        let s = t * (1.0 + z * (1.0 / 6.0 + z * (1.0 / 120.0 + z / 5040.0)));
        (c, s)
    } else if disc > 0.0 {
        let k = disc.sqrt();
        ((k * t).cosh(), (k * t).sinh() / k)
    } else {
        let w = (-disc).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    };
    let e = (-0.5 * gamma * t).exp();
    let half_g = 0.5 * gamma;
    [
        e * (ctilde + half_g * stilde),
        e * stilde,
        e * (-lambda * stilde),
        e * (ctilde - half_g * stilde),
    ]
}

/// Per-mode flow matrices of a basis for a fixed `(gamma, dt)`.
#[derive(Debug, Clone)]
pub struct FreeFlow {
    coeffs: Vec<[f64; 4]>,
}

impl FreeFlow {
    pub fn new(basis: &SpectralBasis, gamma: f64, dt: f64) -> FreeFlow {
        let coeffs = basis
            .eigenvalues()
            .iter()
            .map(|&l| mode_flow(l, gamma, dt))
            .collect();
        FreeFlow { coeffs }
    }

    /// `state := S(dt) state`.
    pub fn apply(&self, pos: &mut DVector<f64>, vel: &mut DVector<f64>) {
        for (j, a) in self.coeffs.iter().enumerate() {
            let (p, v) = (pos[j], vel[j]);
            pos[j] = a[0] * p + a[1] * v;
            vel[j] = a[2] * p + a[3] * v;
        }
    }

    /// `state += c * S(dt) [0, g]`: propagated velocity injection.
    pub fn apply_force(
        &self,
        pos: &mut DVector<f64>,
        vel: &mut DVector<f64>,
        g: &DVector<f64>,
        c: f64,
    ) {
        for (j, a) in self.coeffs.iter().enumerate() {
            pos[j] += c * a[1] * g[j];
            vel[j] += c * a[3] * g[j];
        }
    }

    /// Transpose action for adjoint sweeps: `state := S(dt)^T state`.
    pub fn apply_transpose(&self, pos: &mut DVector<f64>, vel: &mut DVector<f64>) {
        for (j, a) in self.coeffs.iter().enumerate() {
            let (p, v) = (pos[j], vel[j]);
            pos[j] = a[0] * p + a[2] * v;
            vel[j] = a[1] * p + a[3] * v;
        }
    }
}

/// Exact free propagation of a state by time `t` (any sign, any damping).
pub fn free_propagate(state: &ModalState, gamma: f64, t: f64) -> ModalState {
    let mut out = state.clone();
    let basis = state.basis().clone();
    for j in 0..basis.n_modes() {
        let a = mode_flow(basis.lambda(j), gamma, t);
        let (p, v) = (state.position()[j], state.velocity()[j]);
        out.position_mut()[j] = a[0] * p + a[1] * v;
        out.velocity_mut()[j] = a[2] * p + a[3] * v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DomainSpec;
    use std::sync::Arc;

    #[test]
    fn undamped_mode_rotates() {
        let a = mode_flow(4.0, 0.0, 0.3);
        // v = cos(2t) v0 + sin(2t)/2 v1.
        assert!((a[0] - (0.6f64).cos()).abs() < 1e-14);
        assert!((a[1] - (0.6f64).sin() / 2.0).abs() < 1e-14);
        assert!((a[2] + 2.0 * (0.6f64).sin()).abs() < 1e-14);
        assert!((a[3] - (0.6f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn critical_damping_matches_closed_form() {
        // gamma = 2, lambda = 1: v(t) = (1 + t) e^{-t} from v0 = 1, v1 = 0.
        for t in [0.25, 1.0, 3.0] {
            let a = mode_flow(1.0, 2.0, t);
            assert!((a[0] - (1.0 + t) * (-t).exp()).abs() < 1e-13, "t = {t}");
            assert!((a[1] - t * (-t).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn overdamped_stays_positive_and_decays() {
        let a = mode_flow(0.5, 4.0, 2.0);
        assert!(a[0] > 0.0 && a[0] < 1.0);
    }

    #[test]
    fn near_critical_series_is_continuous() {
        // Compare the series branch against the trig branch just outside it.
        let t: f64 = 0.7;
        let gamma = 2.0;
        let eps_in = 1e-7;
        let eps_out = 1e-5;
        let inside = mode_flow(1.0 + eps_in, gamma, t);
        let outside = mode_flow(1.0 + eps_out, gamma, t);
        for i in 0..4 {
            assert!((inside[i] - outside[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn group_property() {
        let d = DomainSpec::interval(std::f64::consts::PI, -1.0, 0.4).unwrap();
        let b = Arc::new(crate::spectral::SpectralBasis::build(d, 6).unwrap());
        let mut st = ModalState::mode(b.clone(), 3);
        st.velocity_mut()[1] = 0.5;
        let one = free_propagate(&free_propagate(&st, 0.3, 0.4), 0.3, 0.6);
        let two = free_propagate(&st, 0.3, 1.0);
        assert!((one.position() - two.position()).amax() < 1e-12);
        assert!((one.velocity() - two.velocity()).amax() < 1e-12);
    }

    #[test]
    fn backward_undoes_forward() {
        let d = DomainSpec::interval(std::f64::consts::PI, -1.0, 0.4).unwrap();
        let b = Arc::new(crate::spectral::SpectralBasis::build(d, 4).unwrap());
        let mut st = ModalState::mode(b, 2);
        st.velocity_mut()[0] = -1.0;
        let back = free_propagate(&free_propagate(&st, 0.8, 0.5), 0.8, -0.5);
        assert!((back.position() - st.position()).amax() < 1e-12);
    }
}
