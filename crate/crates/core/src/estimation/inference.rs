//! Confidence intervals and Wald p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ThetaLayout;
use crate::numerics::{norm_quantile, two_sided_p_value};

/// How a parameter's interval is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// `estimate +/- z SE`
    Coefficient,
    /// Symmetric on the log scale.
    Scale,
    /// Symmetric on the Fisher-z (atanh) scale.
    Correlation,
}

impl ParamKind {
    pub fn of(layout: &ThetaLayout, index: usize) -> Self {
        if index == layout.sigma_t() || index == layout.sigma_c() {
            Self::Scale
        } else if index == layout.rho() {
            Self::Correlation
        } else {
            Self::Coefficient
        }
    }
}

/// Standard-normal critical value for a two-sided interval at `level`.
pub fn critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(norm_quantile(0.5 + level / 2.0))
}

/// Interval at `level` for one estimate with natural-scale standard error `se`.
///
/// Scales use `exp(log s +/- z se / s)`; correlations use
/// `tanh(atanh r +/- z se / (1 - r^2))`.
pub fn interval(kind: ParamKind, estimate: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    let z = critical_value(level)?;
    Ok(match kind {
        ParamKind::Coefficient => (estimate - z * se, estimate + z * se),
        ParamKind::Scale => {
            let half = z * se / estimate;
            ((estimate.ln() - half).exp(), (estimate.ln() + half).exp())
        }
        ParamKind::Correlation => {
            let half = z * se / (1.0 - estimate * estimate);
            ((estimate.atanh() - half).tanh(), (estimate.atanh() + half).tanh())
        }
    })
}

/// Two-sided Wald p-value for `H0: parameter = 0` on the natural scale.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if se == 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    two_sided_p_value(estimate / se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_interval() {
        let (lo, hi) = interval(ParamKind::Scale, 1.0, 0.1, 0.95).unwrap();
        assert!((lo - 0.8220).abs() < 1e-4 && (hi - 1.2165).abs() < 1e-4);
        assert!(((-0.1959963984540054f64).exp() - lo).abs() < 1e-14);
    }

    #[test]
    fn correlation_interval_symmetric_at_zero() {
        let (lo, hi) = interval(ParamKind::Correlation, 0.0, 0.1, 0.95).unwrap();
        assert!((lo + 0.1935).abs() < 1e-4);
        assert_eq!(lo, -hi);
        let (lo, hi) = interval(ParamKind::Correlation, 0.97, 0.2, 0.99).unwrap();
        assert!(lo > -1.0 && hi < 1.0 && lo < 0.97 && hi > 0.97);
    }

    #[test]
    fn degenerate_se() {
        for kind in [ParamKind::Coefficient, ParamKind::Scale, ParamKind::Correlation] {
            let (lo, hi) = interval(kind, 0.4, 0.0, 0.95).unwrap();
            assert!((lo - 0.4).abs() < 1e-15 && (hi - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn level_validated() {
        assert!(critical_value(0.0).is_err());
        assert!(critical_value(1.0).is_err());
        assert!(critical_value(f64::NAN).is_err());
        assert!((critical_value(0.95).unwrap() - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn p_values() {
        // -0.430 with SE 0.196
        assert!((wald_p_value(-0.430, 0.196) - 0.028).abs() < 5e-4);
        assert_eq!(wald_p_value(0.0, 0.0), 1.0);
        assert!((wald_p_value(1.959963984540054, 1.0) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn kinds_by_position() {
        let l = ThetaLayout::new(1);
        assert_eq!(ParamKind::of(&l, l.alpha_t()), ParamKind::Coefficient);
        assert_eq!(ParamKind::of(&l, l.sigma_c()), ParamKind::Scale);
        assert_eq!(ParamKind::of(&l, l.rho()), ParamKind::Correlation);
    }
}
