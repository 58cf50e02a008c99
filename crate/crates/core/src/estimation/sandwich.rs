//! Sandwich covariance of the second-stage estimator, optionally corrected
//! for estimation of the first-stage `gamma`.

use nalgebra::DMatrix;

use super::first_stage::FirstStageFit;
use crate::error::{Error, MatrixRole, Result};
use crate::model::{LikelihoodData, ObservationSet};
use crate::numerics::{invert, richardson_jacobian, symmetrize, DiffConfig};

/// Pieces of `H^{-1} E[(h + H_gamma Psi)(h + H_gamma Psi)^T] H^{-T}`; all per-observation scale
/// (divide by `n` for the covariance of the estimate).
#[derive(Debug, Clone, PartialEq)]
pub struct Sandwich {
    /// With the first-stage correction when one was supplied.
    pub covariance: DMatrix<f64>,
    /// `H^{-1} S H^{-T}` with `S` the outer product of the scores alone.
    pub uncorrected: DMatrix<f64>,
    /// Mean Hessian of the log-likelihood in the free parameters.
    pub hessian: DMatrix<f64>,
    /// Mean outer product of the per-observation scores.
    pub outer_product: DMatrix<f64>,
    /// Cross derivative of the mean score with respect to `gamma` (empty without a first stage).
    pub cross: DMatrix<f64>,
}

fn restrict(v: &[f64], free: &[usize]) -> Vec<f64> {
    free.iter().map(|&j| v[j]).collect()
}

fn embed(base: &[f64], free: &[usize], values: &[f64]) -> Vec<f64> {
    let mut full = base.to_vec();
    for (&j, &v) in free.iter().zip(values) {
        full[j] = v;
    }
    full
}

fn mean_score(design: &LikelihoodData, theta: &[f64], free: &[usize]) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    let v = design.log_likelihood_grad(theta, &mut g);
    if v.is_finite() {
        restrict(&g, free)
    } else {
        vec![f64::NAN; free.len()]
    }
}

/// Richardson Jacobian, retried with smaller first steps when a probe leaves
/// the parameter space (e.g. `rho` within `1e-4` of a bound).
fn jacobian_with_retry<F>(f: F, x: &[f64], cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut cfg = *cfg;
    let mut last = None;
    for _ in 0..3 {
        match richardson_jacobian(&f, x, &cfg) {
            Ok(j) => return Ok(j),
            Err(e @ Error::NonFinite { .. }) => {
                last = Some(e);
                cfg.initial_step_fraction /= 10.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Sandwich covariance at the natural-scale estimate `theta` (full layout), for
/// the parameters listed in `free`.
///
/// `design` holds the control-function column used in the fit. When `first`
/// is given, the score's dependence on `gamma` is propagated through the
/// first-stage influence functions.
pub fn sandwich_covariance(
    design: &LikelihoodData,
    theta: &[f64],
    free: &[usize],
    first: Option<(&FirstStageFit, &ObservationSet)>,
    diff: &DiffConfig,
) -> Result<Sandwich> {
    diff.validate()?;
    let n = design.len() as f64;
    let scores_full = design.scores(theta);
    let scores = scores_full.select_columns(free);

    let hessian = symmetrize(&jacobian_with_retry(
        |t| mean_score(design, &embed(theta, free, t), free),
        &restrict(theta, free),
        diff,
    )?);
    let h_inv = invert(&hessian, MatrixRole::Hessian)?;

    let outer_product = scores.transpose() * &scores / n;
    let uncorrected = symmetrize(&(&h_inv * &outer_product * h_inv.transpose()));

    let (covariance, cross) = match first {
        None => (uncorrected.clone(), DMatrix::zeros(0, 0)),
        Some((fs, data)) => {
            if fs.moment_gradients.nrows() != design.len() {
                return Err(Error::Dimension("first-stage fit and sample differ in size".into()));
            }
            let cross = jacobian_with_retry(
                |g| match LikelihoodData::with_control(data, fs.family, g) {
                    Ok(d) => mean_score(&d, theta, free),
                    Err(_) => vec![f64::NAN; free.len()],
                },
                &fs.gamma_hat,
                diff,
            )?;
            let psi = fs.influence()?;
            let corrected = scores + &psi * cross.transpose();
            let meat = corrected.transpose() * &corrected / n;
            (symmetrize(&(&h_inv * meat * h_inv.transpose())), cross)
        }
    };

    Ok(Sandwich {
        covariance,
        uncorrected,
        hessian,
        outer_product,
        cross,
    })
}
