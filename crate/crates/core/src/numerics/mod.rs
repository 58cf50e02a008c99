//! Numerical kernel: normal distribution functions, Richardson differentiation,
//! dense linear algebra and unconstrained minimization.

pub mod bivariate;
pub mod diff;
pub mod linalg;
pub mod normal;
pub mod optim;

pub use bivariate::binorm_cdf;
pub use diff::{richardson_derivative, richardson_gradient, richardson_hessian, richardson_jacobian, DiffConfig};
pub use linalg::{invert, least_squares, pairwise_mean, pairwise_sum, solve, symmetrize};
pub use normal::{log_norm_cdf, log_norm_pdf, norm_cdf, norm_hazard, norm_pdf, norm_quantile, two_sided_p_value};
pub use optim::{minimize, minimize_with_gradient, Minimum, OptimConfig, OptimMethod};
