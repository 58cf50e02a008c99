//! First-stage estimation of `gamma` for `Z` on `W = (1, X~, W~)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, MatrixRole, Result};
use crate::model::{FirstStageFamily, ObservationSet};
use crate::numerics::normal::{log_norm_cdf, norm_hazard};
use crate::numerics::{invert, least_squares, minimize_with_gradient, richardson_jacobian, DiffConfig, OptimConfig};

/// Norm of `gamma` beyond which a binary first stage is treated as separated.
pub const SEPARATION_NORM: f64 = 1e3;

/// A fitted binary-choice index this large means a fitted probability within
/// about `2e-9` of 0 or 1; in practice this only happens when the coefficients
/// run off along a separating direction and the optimizer stalls on a flat objective.
pub const SATURATED_INDEX: f64 = 20.0;

/// Sup-norm of the mean moment gradient accepted as a first-order solution.
pub const FIRST_ORDER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageFit {
    pub family: FirstStageFamily,
    pub gamma_hat: Vec<f64>,
    /// `h_m(W_i, Z_i, gamma_hat)`, one row per observation.
    pub moment_gradients: DMatrix<f64>,
    /// Jacobian of the mean moment gradient at `gamma_hat`.
    pub m_hat: DMatrix<f64>,
}

impl FirstStageFit {
    /// `Psi_i = -M^{-1} h_m(W_i, Z_i, gamma_hat)`, one row per observation.
    pub fn influence(&self) -> Result<DMatrix<f64>> {
        let m_inv = invert(&self.m_hat, MatrixRole::FirstStageM)?;
        Ok(-(&self.moment_gradients * m_inv.transpose()))
    }

    /// A fitted binary-choice index this large means a fitted probability within
/// about `2e-9` of 0 or 1; in practice this only happens when the coefficients
/// run off along a separating direction and the optimizer stalls on a flat objective.
pub const SATURATED_INDEX: f64 = 20.0;

/// Sup-norm of the mean moment gradient.
    pub fn first_order_norm(&self) -> f64 {
        let n = self.moment_gradients.nrows() as f64;
        self.moment_gradients
            .row_sum()
            .iter()
            .fold(0.0, |m: f64, v| m.max((v / n).abs()))
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-observation objective `m(W, Z, gamma)`.
fn moment(family: FirstStageFamily, a: f64, z: f64) -> f64 {
    match family {
        FirstStageFamily::Linear => -(z - a) * (z - a),
        // z log F(a) + (1 - z) log(1 - F(a))
        FirstStageFamily::Logit => -z * softplus(-a) - (1.0 - z) * softplus(a),
        FirstStageFamily::Probit => z * log_norm_cdf(a) + (1.0 - z) * log_norm_cdf(-a),
    }
}

/// `d m / d a`; the moment gradient is this times `w`.
fn moment_slope(family: FirstStageFamily, a: f64, z: f64) -> f64 {
    match family {
        FirstStageFamily::Linear => 2.0 * (z - a),
        FirstStageFamily::Logit => z - logistic(a),
        // (z - Phi) phi / (Phi (1 - Phi)) split by outcome to stay finite in the tails
        FirstStageFamily::Probit => z * norm_hazard(-a) - (1.0 - z) * norm_hazard(a),
    }
}

struct Design {
    w: DMatrix<f64>,
    z: DVector<f64>,
}

impl Design {
    fn new(data: &ObservationSet) -> Self {
        let q = data.m() + 2;
        let w = DMatrix::from_fn(data.len(), q, |i, j| {
            let o = &data.observations()[i];
            match j {
                0 => 1.0,
                j if j <= data.m() => o.x_tilde[j - 1],
                _ => o.w_tilde,
            }
        });
        let z = DVector::from_iterator(data.len(), data.iter().map(|o| o.z));
        Self { w, z }
    }

    fn index(&self, gamma: &[f64]) -> DVector<f64> {
        &self.w * DVector::from_column_slice(gamma)
    }

    fn mean_objective(&self, family: FirstStageFamily, gamma: &[f64]) -> f64 {
        let a = self.index(gamma);
        let terms: Vec<f64> = a.iter().zip(self.z.iter()).map(|(&a, &z)| moment(family, a, z)).collect();
        crate::numerics::pairwise_mean(&terms)
    }

    fn slopes(&self, family: FirstStageFamily, gamma: &[f64]) -> DVector<f64> {
        let a = self.index(gamma);
        DVector::from_iterator(a.len(), a.iter().zip(self.z.iter()).map(|(&a, &z)| moment_slope(family, a, z)))
    }

    fn moment_gradients(&self, family: FirstStageFamily, gamma: &[f64]) -> DMatrix<f64> {
        let s = self.slopes(family, gamma);
        let mut h = self.w.clone();
        for (i, mut row) in h.row_iter_mut().enumerate() {
            row *= s[i];
        }
        h
    }

    fn mean_gradient(&self, family: FirstStageFamily, gamma: &[f64]) -> Vec<f64> {
        let s = self.slopes(family, gamma);
        let n = self.w.nrows() as f64;
        (self.w.transpose() * s / n).iter().copied().collect()
    }
}

/// Estimates `gamma` by least squares (linear) or maximum likelihood (probit, logit).
pub fn fit_first_stage(family: FirstStageFamily, data: &ObservationSet) -> Result<FirstStageFit> {
    let design = Design::new(data);
    let q = data.m() + 2;
    if data.len() < q {
        return Err(Error::FirstStage(format!(
            "{} observations cannot identify {q} first-stage coefficients",
            data.len()
        )));
    }
    let ols = least_squares(&design.w, &design.z, MatrixRole::FirstStageDesign)?;

    let gamma_hat = if family.requires_binary_z() {
        if !data.z_is_binary() {
            return Err(Error::FirstStage(format!("{family} first stage needs z in {{0, 1}}")));
        }
        let ones = design.z.iter().filter(|&&z| z == 1.0).count();
        if ones == 0 || ones == data.len() {
            return Err(Error::FirstStage(format!("z is constant ({ones} of {} equal 1)", data.len())));
        }
        binary_mle(family, &design, q)?
    } else {
        ols.iter().copied().collect()
    };

    let moment_gradients = design.moment_gradients(family, &gamma_hat);
    let m_hat = richardson_jacobian(|g| design.mean_gradient(family, g), &gamma_hat, &DiffConfig::default())?;
    invert(&m_hat, MatrixRole::FirstStageM)?;
    let fit = FirstStageFit {
        family,
        gamma_hat,
        moment_gradients,
        m_hat,
    };
    let foc = fit.first_order_norm();
    if !(foc <= FIRST_ORDER_TOLERANCE) {
        return Err(Error::FirstStage(format!(
            "first-order condition not met: mean moment gradient sup-norm {foc:.3e}"
        )));
    }
    Ok(fit)
}

fn binary_mle(family: FirstStageFamily, design: &Design, q: usize) -> Result<Vec<f64>> {
    let f = |g: &[f64]| {
        if g.iter().any(|v| v.abs() > 10.0 * SEPARATION_NORM) {
            return f64::INFINITY;
        }
        -design.mean_objective(family, g)
    };
    let grad = |g: &[f64]| design.mean_gradient(family, g).into_iter().map(|v| -v).collect::<Vec<_>>();
    let cfg = OptimConfig {
        gradient_tolerance: 1e-10,
        ..OptimConfig::default()
    };
    let min = minimize_with_gradient(f, grad, &vec![0.0; q], &cfg)?;
    let mut gamma = min.argmin;
    check_separation(&gamma)?;

    // Newton polish on the concave objective
    for _ in 0..3 {
        let g = design.mean_gradient(family, &gamma);
        if g.iter().all(|v| v.abs() < 1e-12) {
            break;
        }
        let h = richardson_jacobian(|x| design.mean_gradient(family, x), &gamma, &DiffConfig::default())?;
        let Ok(step) = crate::numerics::solve(&h, &DVector::from_vec(g), MatrixRole::FirstStageM) else {
            break;
        };
        let candidate: Vec<f64> = gamma.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        if design.mean_objective(family, &candidate) >= design.mean_objective(family, &gamma) - 1e-15 {
            gamma = candidate;
        } else {
            break;
        }
    }
    check_separation(&gamma)?;
    let max_index = design.index(&gamma).amax();
    if max_index > SATURATED_INDEX {
        return Err(Error::FirstStage(format!(
            "fitted index reaches {max_index:.1}; z is (quasi-)separated by the instruments"
        )));
    }
    Ok(gamma)
}

fn check_separation(gamma: &[f64]) -> Result<()> {
    let norm = gamma.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > SEPARATION_NORM || !norm.is_finite() {
        Err(Error::FirstStage(format!(
            "coefficients diverge (norm {norm:.3e}); z is perfectly separated by the instruments"
        )))
    } else {
        Ok(())
    }
}
