use super::basis::SpectralBasis;
use crate::error::{Error, Result};
use nalgebra::DVector;
use std::sync::Arc;

/// Position/velocity pair in modal coordinates over a shared basis.
#[derive(Debug, Clone)]
pub struct ModalState {
    basis: Arc<SpectralBasis>,
    pos: DVector<f64>,
    vel: DVector<f64>,
}

impl ModalState {
    pub fn zero(basis: Arc<SpectralBasis>) -> ModalState {
        let n = basis.n_modes();
        ModalState {
            basis,
            pos: DVector::zeros(n),
            vel: DVector::zeros(n),
        }
    }

    /// Pure eigenmode `e_j` (0-based position index) at rest.
    pub fn mode(basis: Arc<SpectralBasis>, j: usize) -> ModalState {
        let mut st = ModalState::zero(basis);
        st.pos[j] = 1.0;
        st
    }

    pub fn from_coeffs(
        basis: Arc<SpectralBasis>,
        pos: DVector<f64>,
        vel: DVector<f64>,
    ) -> Result<ModalState> {
        if pos.len() != basis.n_modes() || vel.len() != basis.n_modes() {
            return Err(Error::InvalidArgument(format!(
                "coefficient lengths {}/{} do not match n_modes {}",
                pos.len(),
                vel.len(),
                basis.n_modes()
            )));
        }
        Ok(ModalState { basis, pos, vel })
    }

    /// Random pair with independent normal coefficients, rescaled to unit
    /// pair norm at exponent `s`.
    pub fn random_unit(
        basis: Arc<SpectralBasis>,
        rng: &mut impl rand::Rng,
        s: f64,
    ) -> ModalState {
        use rand::distributions::Distribution;
        let normal = rand_distr_standard_normal();
        let n = basis.n_modes();
        let pos = DVector::from_fn(n, |_, _| normal.sample(rng));
        let vel = DVector::from_fn(n, |_, _| normal.sample(rng));
        let mut st = ModalState { basis, pos, vel };
        let nrm = st.pair_norm(s);
        st.scale(1.0 / nrm);
        st
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn position(&self) -> &DVector<f64> {
        &self.pos
    }

    pub fn velocity(&self) -> &DVector<f64> {
        &self.vel
    }

    pub fn position_mut(&mut self) -> &mut DVector<f64> {
        &mut self.pos
    }

    pub fn velocity_mut(&mut self) -> &mut DVector<f64> {
        &mut self.vel
    }

    /// Fractional norm of the position component.
    pub fn h_norm(&self, s: f64) -> f64 {
        self.basis.h_norm(&self.pos, s)
    }

    /// Pair norm at exponent `s`: position in `H^s`, velocity in `H^(s-1)`.
    pub fn pair_norm(&self, s: f64) -> f64 {
        let p = self.basis.h_norm(&self.pos, s);
        let v = self.basis.h_norm(&self.vel, s - 1.0);
        (p * p + v * v).sqrt()
    }

    /// Zero all coefficients with 1-based mode number greater than `n_keep`.
    /// `n_keep >= n_modes` is the identity.
    pub fn project(&self, n_keep: usize) -> ModalState {
        let mut out = self.clone();
        for j in n_keep..self.basis.n_modes() {
            out.pos[j] = 0.0;
            out.vel[j] = 0.0;
        }
        out
    }

    /// Apply `psi(-h^2 Laplacian)` to both components.
    pub fn spectral_multiplier(&self, psi: impl Fn(f64) -> f64, h: f64) -> ModalState {
        let mut out = self.clone();
        self.basis.apply_multiplier(&mut out.pos, &psi, h);
        self.basis.apply_multiplier(&mut out.vel, &psi, h);
        out
    }

    pub fn scale(&mut self, c: f64) {
        self.pos *= c;
        self.vel *= c;
    }

    pub fn add_scaled(&mut self, other: &ModalState, c: f64) {
        self.pos.axpy(c, &other.pos, 1.0);
        self.vel.axpy(c, &other.vel, 1.0);
    }

    pub fn difference(&self, other: &ModalState) -> Result<ModalState> {
        if !self.basis.same_as(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        Ok(out)
    }
}

/// Standard normal sampler without pulling in a separate distributions crate.
fn rand_distr_standard_normal() -> StdNormal {
    StdNormal
}

struct StdNormal;

impl rand::distributions::Distribution<f64> for StdNormal {
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Box-Muller from two open-interval uniforms.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
