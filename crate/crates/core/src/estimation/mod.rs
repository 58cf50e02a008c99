//! First-stage and second-stage estimation, sandwich covariance and intervals.

pub mod first_stage;
pub mod fit;
pub mod inference;
pub mod sandwich;
pub mod variant;

pub use first_stage::{fit_first_stage, FirstStageFit};
pub use fit::{
    confidence_intervals, fit_independent, fit_naive, fit_oracle, fit_two_step, fit_with_first_stage, FitOptions,
    FitResult,
};
pub use inference::{interval, wald_p_value, ParamKind};
pub use sandwich::{sandwich_covariance, Sandwich};
pub use variant::EstimatorVariant;
