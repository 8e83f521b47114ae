//! Dirichlet eigenbasis, fractional norms, localisation weights, and
//! spectral-multiplier calculus on box domains.

mod basis;
mod commutator;
mod cutoff;
mod domain;
mod quadrature;
mod state;

pub use basis::SpectralBasis;
pub use commutator::{
    bump_symbol, commutator_norm_scan, transfer_exponents, CommutatorScan, NORM_FLOOR,
};
pub use cutoff::CutoffField;
pub use domain::DomainSpec;
pub use quadrature::Rule1d;
pub use state::ModalState;
