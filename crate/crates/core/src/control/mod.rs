//! Control synthesis: localized actuation spaces, one-interval steering by
//! a penalised quadratic problem, interval concatenation with exponential
//! bookkeeping, and an infinite-horizon feedback law from a backward
//! Riccati sweep.

mod concatenate;
mod feedback;
pub(crate) use feedback::pair_vector;
mod interval;
mod riccati;
mod space;

pub use concatenate::{concatenate_control, ConcatenatedControl, IntervalRecord};
pub use feedback::{
    dpp_consistency, feedback_gain, simulate_linear_feedback, DppReport, ExtensionRecord,
    FeedbackLaw, LinearFeedbackRun,
};
pub use interval::{
    dense_normal_system, objective_and_gradient, synthesize_interval_control, verify_optimality,
    IntervalControl, IntervalProblem, IntervalSolution, OptimalityReport,
};
pub use riccati::{algebraic_riccati_oracle, riccati_value, shifted_matrices, RiccatiOptions};
pub use space::ControlSpace;
