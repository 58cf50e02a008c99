//! Model types, control functions and the joint-Gaussian likelihood.

pub mod control;
pub mod data;
pub mod design;
pub mod likelihood;
pub mod params;

pub use control::{control_function, control_value, logistic_upper_mean};
pub use data::{Observation, ObservationSet};
pub use design::LikelihoodData;
pub use likelihood::{
    conditional_cdf_y, log_likelihood, log_subdensity, log_subdensity_kernel, log_subdensity_kernel_grad,
    log_subdensity_with_control, residuals, residuals_with_control, KernelValue,
};
pub use params::{FirstStageFamily, ThetaLayout, ThetaParams};
