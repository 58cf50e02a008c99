use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::ThetaLayout;

/// Which of the four estimators produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorVariant {
    /// Estimated control function, correlated errors.
    TwoStep,
    /// No control function (`lambda_T = lambda_C = 0`), no first stage.
    Naive,
    /// Estimated control function, `rho = 0`.
    Independent,
    /// True control function supplied by the caller.
    Oracle,
}

impl EstimatorVariant {
    pub const ALL: [EstimatorVariant; 4] = [Self::TwoStep, Self::Naive, Self::Independent, Self::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TwoStep => "two_step",
            Self::Naive => "naive",
            Self::Independent => "independent",
            Self::Oracle => "oracle",
        }
    }

    /// Indices of the full parameter vector that this estimator fits; the rest
    /// are held at zero.
    pub fn free_indices(self, layout: &ThetaLayout) -> Vec<usize> {
        (0..layout.len())
            .filter(|&j| match self {
                Self::Naive => j != layout.lambda_t() && j != layout.lambda_c(),
                Self::Independent => j != layout.rho(),
                Self::TwoStep | Self::Oracle => true,
            })
            .collect()
    }

    pub fn uses_first_stage(self) -> bool {
        matches!(self, Self::TwoStep | Self::Independent)
    }
}

impl fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "two_step" | "twostep" => Ok(Self::TwoStep),
            "naive" => Ok(Self::Naive),
            "independent" => Ok(Self::Independent),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::Config(format!(
                "unknown estimator '{other}' (expected two_step, naive, independent or oracle)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let l = ThetaLayout::new(1);
        assert_eq!(EstimatorVariant::TwoStep.free_indices(&l).len(), 11);
        assert_eq!(EstimatorVariant::Naive.free_indices(&l).len(), 9);
        assert_eq!(EstimatorVariant::Independent.free_indices(&l).len(), 10);
        let l3 = ThetaLayout::new(3);
        assert_eq!(EstimatorVariant::Naive.free_indices(&l3).len(), 2 * 3 + 7);
    }

    #[test]
    fn parse_round_trip() {
        for v in EstimatorVariant::ALL {
            assert_eq!(v.as_str().parse::<EstimatorVariant>().unwrap(), v);
        }
        assert_eq!("two-step".parse::<EstimatorVariant>().unwrap(), EstimatorVariant::TwoStep);
        assert!("probit".parse::<EstimatorVariant>().is_err());
    }
}
