//! Control functions `V = g_gamma(Z, W)`.
//!
//! For binary `Z = 1(W^T gamma > nu)` the control function is the truncated
//! mean of `nu`: `E[nu | nu < a]` when `Z = 1` and `E[nu | nu > a]` when
//! `Z = 0`, with `a = W^T gamma`.

use super::data::Observation;
use super::params::FirstStageFamily;
use crate::error::{Error, Result};
use crate::numerics::normal::norm_hazard;

/// `E[nu | nu > a]` for standard logistic `nu`:
/// `(1 + e^a) ln(1 + e^a) - a e^a`, rearranged to avoid overflow and cancellation.
pub fn logistic_upper_mean(a: f64) -> f64 {
    if a > 0.0 {
        let t = (-a).exp();
        if t < 1e-300 {
            a + 1.0
        } else {
            a + (1.0 + t) * t.ln_1p() / t
        }
    } else {
        let s = a.exp();
        (1.0 + s) * s.ln_1p() - a * s
    }
}

/// Control function for a known instrument index `a = w^T gamma`; no validation of `z`.
#[inline]
pub fn control_value(family: FirstStageFamily, index: f64, z: f64) -> f64 {
    match family {
        FirstStageFamily::Linear => z - index,
        FirstStageFamily::Probit => {
            (1.0 - z) * norm_hazard(index) - z * norm_hazard(-index)
        }
        FirstStageFamily::Logit => {
            (1.0 - z) * logistic_upper_mean(index) - z * logistic_upper_mean(-index)
        }
    }
}

pub(crate) fn check_gamma(gamma: &[f64], m: usize) -> Result<()> {
    if gamma.len() == m + 2 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "gamma has length {}, expected m + 2 = {}",
            gamma.len(),
            m + 2
        )))
    }
}

/// `g_gamma(z, w)` for one observation.
pub fn control_function(family: FirstStageFamily, gamma: &[f64], obs: &Observation) -> Result<f64> {
    check_gamma(gamma, obs.m())?;
    if family.requires_binary_z() && !obs.z_is_binary() {
        return Err(Error::Data(format!(
            "{family} control function needs z in {{0, 1}}, got {}",
            obs.z
        )));
    }
    Ok(control_value(family, obs.instrument_index(gamma), obs.z))
}
