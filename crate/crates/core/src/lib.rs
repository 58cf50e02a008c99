// `!(a < b)` is used on purpose so NaN falls through to the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod numerics;
pub mod simulation;

pub use error::{Error, MatrixRole, Result};
pub use model::{FirstStageFamily, Observation, ObservationSet, ThetaParams};
pub use estimation::{EstimatorVariant, FitOptions, FitResult};
