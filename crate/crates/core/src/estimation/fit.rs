//! Second-stage maximum likelihood for the four estimators.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::first_stage::{fit_first_stage, FirstStageFit};
use super::inference::{interval, wald_p_value, ParamKind};
use super::sandwich::{sandwich_covariance, Sandwich};
use super::variant::EstimatorVariant;
use crate::error::{Error, MatrixRole, Result};
use crate::model::{FirstStageFamily, LikelihoodData, ObservationSet, ThetaLayout, ThetaParams};
use crate::numerics::optim::STATIONARITY_TOLERANCE;
use crate::numerics::{least_squares, minimize_with_gradient, richardson_gradient, DiffConfig, OptimConfig};

/// Beyond this `|atanh rho|` the objective is treated as outside the domain.
pub const MAX_ATANH_RHO: f64 = 18.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub optim: OptimConfig,
    pub diff: DiffConfig,
    /// Confidence level of the reported intervals.
    pub level: f64,
    /// Starting point; least-squares values when absent.
    pub start: Option<ThetaParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optim: OptimConfig::default(),
            diff: DiffConfig::default(),
            level: 0.95,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub variant: EstimatorVariant,
    /// Natural-scale estimate; parameters the variant does not fit are zero.
    pub theta_hat: ThetaParams,
    #[serde(skip)]
    pub first_stage: Option<FirstStageFit>,
    /// Positions (in the full parameter layout) of the estimated parameters.
    pub free: Vec<usize>,
    /// Covariance of `sqrt(n) (theta_hat - theta)` over `free`; absent without convergence.
    #[serde(skip)]
    pub covariance: Option<DMatrix<f64>>,
    /// The same without the first-stage correction.
    #[serde(skip)]
    pub uncorrected_covariance: Option<DMatrix<f64>>,
    pub std_errors: Vec<f64>,
    pub uncorrected_std_errors: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub p_values: Vec<f64>,
    pub level: f64,
    /// Mean log-likelihood at the estimate.
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the natural-scale mean score at the estimate.
    pub score_norm: f64,
    pub n: usize,
}

impl FitResult {
    pub fn layout(&self) -> ThetaLayout {
        self.theta_hat.layout()
    }

    /// Estimates of the fitted parameters, in `free` order.
    pub fn estimates(&self) -> Vec<f64> {
        let full = self.theta_hat.to_vec();
        self.free.iter().map(|&j| full[j]).collect()
    }

    pub fn names(&self) -> Vec<String> {
        let names = self.layout().names();
        self.free.iter().map(|&j| names[j].clone()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        let labels = self.layout().labels();
        self.free.iter().map(|&j| labels[j].clone()).collect()
    }

    /// Position in `free` of a full-layout index.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.free.iter().position(|&j| j == index)
    }

    pub fn has_inference(&self) -> bool {
        self.covariance.is_some()
    }
}

/// Recomputes intervals and p-values at `level` from the stored standard errors.
pub fn confidence_intervals(mut fit: FitResult, level: f64) -> Result<FitResult> {
    if fit.covariance.is_none() {
        return Err(Error::Config("fit has no covariance; intervals unavailable".into()));
    }
    super::inference::critical_value(level)?;
    let layout = fit.layout();
    let est = fit.estimates();
    let mut lo = Vec::with_capacity(est.len());
    let mut hi = Vec::with_capacity(est.len());
    let mut p = Vec::with_capacity(est.len());
    for (k, &j) in fit.free.iter().enumerate() {
        let (l, h) = interval(ParamKind::of(&layout, j), est[k], fit.std_errors[k], level)?;
        lo.push(l);
        hi.push(h);
        p.push(wald_p_value(est[k], fit.std_errors[k]));
    }
    fit.ci_lower = lo;
    fit.ci_upper = hi;
    fit.p_values = p;
    fit.level = level;
    Ok(fit)
}

/// Maps the free natural-scale parameters to the optimizer's unconstrained scale.
struct Reparam {
    layout: ThetaLayout,
    free: Vec<usize>,
    base: Vec<f64>,
}

impl Reparam {
    fn natural(&self, phi: &[f64]) -> Vec<f64> {
        let mut theta = self.base.clone();
        for (&j, &p) in self.free.iter().zip(phi) {
            theta[j] = if j == self.layout.sigma_t() || j == self.layout.sigma_c() {
                p.exp()
            } else if j == self.layout.rho() {
                p.tanh()
            } else {
                p
            };
        }
        theta
    }

    fn unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&j| {
                if j == self.layout.sigma_t() || j == self.layout.sigma_c() {
                    theta[j].ln()
                } else if j == self.layout.rho() {
                    theta[j].atanh()
                } else {
                    theta[j]
                }
            })
            .collect()
    }

    fn out_of_range(&self, phi: &[f64]) -> bool {
        self.free
            .iter()
            .zip(phi)
            .any(|(&j, p)| j == self.layout.rho() && p.abs() > MAX_ATANH_RHO)
    }

    /// Chain rule from a natural-scale gradient to the unconstrained scale.
    fn pullback(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&j| {
                if j == self.layout.sigma_t() || j == self.layout.sigma_c() {
                    grad[j] * theta[j]
                } else if j == self.layout.rho() {
                    grad[j] * (1.0 - theta[j] * theta[j])
                } else {
                    grad[j]
                }
            })
            .collect()
    }
}

/// Least-squares start: `y` on `(1, x~, z, V)` (without `V` when the control
/// coefficients are fixed), residual SD for both scales, `rho = 0`.
fn default_start(design: &LikelihoodData, data: &ObservationSet, with_control: bool) -> Result<Vec<f64>> {
    let m = data.m();
    let k = m + 2 + usize::from(with_control);
    let v = design.control();
    let x = DMatrix::from_fn(data.len(), k, |i, j| {
        let o = &data.observations()[i];
        match j {
            0 => 1.0,
            j if j <= m => o.x_tilde[j - 1],
            j if j == m + 1 => o.z,
            _ => v[i],
        }
    });
    let y = DVector::from_iterator(data.len(), data.iter().map(|o| o.y));
    let b = least_squares(&x, &y, MatrixRole::General)?;
    let resid = &y - &x * &b;
    let dof = (data.len() as f64 - k as f64).max(1.0);
    let sd = (resid.norm_squared() / dof).sqrt().max(1e-3);

    let layout = ThetaLayout::new(m);
    let mut theta = vec![0.0; layout.len()];
    for (r, start) in [(layout.beta_t(), layout.alpha_t()), (layout.beta_c(), layout.alpha_c())] {
        for (t, bj) in theta[r].iter_mut().zip(b.iter()) {
            *t = *bj;
        }
        theta[start] = b[m + 1];
    }
    if with_control {
        theta[layout.lambda_t()] = b[m + 2];
        theta[layout.lambda_c()] = b[m + 2];
    }
    theta[layout.sigma_t()] = sd;
    theta[layout.sigma_c()] = sd;
    Ok(theta)
}

struct SecondStage {
    theta: Vec<f64>,
    loglik: f64,
    converged: bool,
    iterations: usize,
    score_norm: f64,
}

fn maximize(design: &LikelihoodData, free: &[usize], start: Vec<f64>, optim: &OptimConfig) -> Result<SecondStage> {
    let layout = design.layout();
    let mut base = start;
    for j in 0..layout.len() {
        if !free.contains(&j) {
            base[j] = 0.0;
        }
    }
    let rp = Reparam {
        layout,
        free: free.to_vec(),
        base,
    };
    let phi0 = rp.unconstrained(&rp.base);
    if phi0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("starting value outside the parameter space".into()));
    }
    let objective = |phi: &[f64]| {
        if rp.out_of_range(phi) {
            return f64::INFINITY;
        }
        -design.log_likelihood(&rp.natural(phi))
    };
    let gradient = |phi: &[f64]| {
        let theta = rp.natural(phi);
        let mut g = vec![0.0; theta.len()];
        design.log_likelihood_grad(&theta, &mut g);
        rp.pullback(&theta, &g).into_iter().map(|v| -v).collect::<Vec<_>>()
    };
    let min = minimize_with_gradient(objective, gradient, &phi0, optim)?;
    let mut theta = rp.natural(&min.argmin);
    let mut loglik = -min.value;
    if min.value.is_finite() {
        (theta, loglik) = newton_polish(design, free, theta, loglik);
    }

    let natural_free: Vec<f64> = free.iter().map(|&j| theta[j]).collect();
    let score_norm = richardson_gradient(
        |t| {
            let mut full = theta.clone();
            for (&j, &v) in free.iter().zip(t) {
                full[j] = v;
            }
            design.log_likelihood(&full)
        },
        &natural_free,
        &DiffConfig::default(),
    )
    .map(|g| g.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
    .unwrap_or(f64::NAN);

    Ok(SecondStage {
        loglik,
        converged: (min.converged || score_norm <= POLISHED_SCORE) && score_norm <= STATIONARITY_TOLERANCE,
        iterations: min.iterations,
        score_norm,
        theta,
    })
}

/// Score sup-norm below which a polished estimate counts as converged even if
/// the quasi-Newton run itself stopped early.
const POLISHED_SCORE: f64 = 1e-8;

/// A few damped Newton steps on the natural scale.
///
/// The optimizer works on `(log sigma, atanh rho)`, whose gradient is damped by
/// `1 - rho^2` near the correlation bounds; polishing brings the natural-scale
/// score down to rounding level.
fn newton_polish(design: &LikelihoodData, free: &[usize], mut theta: Vec<f64>, mut loglik: f64) -> (Vec<f64>, f64) {
    let score = |t: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; t.len()];
        design.log_likelihood_grad(t, &mut g);
        free.iter().map(|&j| g[j]).collect()
    };
    let embed = |base: &[f64], x: &[f64]| {
        let mut full = base.to_vec();
        for (&j, &v) in free.iter().zip(x) {
            full[j] = v;
        }
        full
    };
    for _ in 0..3 {
        let g = score(&theta);
        if g.iter().all(|v| v.abs() <= 1e-10) || g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let x: Vec<f64> = free.iter().map(|&j| theta[j]).collect();
        let Ok(h) = crate::numerics::richardson_jacobian(|p| score(&embed(&theta, p)), &x, &DiffConfig::default())
        else {
            break;
        };
        let Ok(step) = crate::numerics::solve(
            &crate::numerics::symmetrize(&h),
            &DVector::from_vec(g),
            MatrixRole::Hessian,
        ) else {
            break;
        };
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..8 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - scale * s).collect();
            let full = embed(&theta, &cand);
            let l = design.log_likelihood(&full);
            if l.is_finite() && l >= loglik - 1e-14 * loglik.abs().max(1.0) {
                theta = full;
                loglik = l;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (theta, loglik)
}

fn fit_on_design(
    variant: EstimatorVariant,
    design: &LikelihoodData,
    data: &ObservationSet,
    first: Option<FirstStageFit>,
    opts: &FitOptions,
) -> Result<FitResult> {
    opts.optim.validate()?;
    opts.diff.validate()?;
    super::inference::critical_value(opts.level)?;
    data.check_both_outcomes()?;
    let layout = design.layout();
    let free = variant.free_indices(&layout);

    let start = match &opts.start {
        Some(t) => {
            t.validate()?;
            if t.m() != data.m() {
                return Err(Error::Dimension(format!(
                    "start has m = {}, data has m = {}",
                    t.m(),
                    data.m()
                )));
            }
            t.to_vec()
        }
        None => default_start(design, data, variant != EstimatorVariant::Naive)?,
    };
    let stage = maximize(design, &free, start, &opts.optim)?;
    let theta_hat = ThetaParams::from_slice(data.m(), &stage.theta)?;

    let mut fit = FitResult {
        variant,
        theta_hat,
        first_stage: None,
        free: free.clone(),
        covariance: None,
        uncorrected_covariance: None,
        std_errors: Vec::new(),
        uncorrected_std_errors: Vec::new(),
        ci_lower: Vec::new(),
        ci_upper: Vec::new(),
        p_values: Vec::new(),
        level: opts.level,
        loglik: stage.loglik,
        converged: stage.converged,
        iterations: stage.iterations,
        score_norm: stage.score_norm,
        n: data.len(),
    };
    if fit.converged {
        let correction = first.as_ref().map(|f| (f, data));
        let s: Sandwich = sandwich_covariance(design, &stage.theta, &free, correction, &opts.diff)?;
        let n = data.len() as f64;
        let se = |c: &DMatrix<f64>| c.diagonal().iter().map(|v| (v.max(0.0) / n).sqrt()).collect::<Vec<_>>();
        fit.std_errors = se(&s.covariance);
        fit.uncorrected_std_errors = se(&s.uncorrected);
        fit.covariance = Some(s.covariance);
        fit.uncorrected_covariance = Some(s.uncorrected);
        fit = confidence_intervals(fit, opts.level)?;
    }
    fit.first_stage = first;
    Ok(fit)
}

/// Two-step estimator with the supplied first-stage fit.
pub fn fit_with_first_stage(
    variant: EstimatorVariant,
    first: &FirstStageFit,
    data: &ObservationSet,
    opts: &FitOptions,
) -> Result<FitResult> {
    if !variant.uses_first_stage() {
        return Err(Error::Config(format!("{variant} does not use a first stage")));
    }
    let design = LikelihoodData::with_control(data, first.family, &first.gamma_hat)?;
    fit_on_design(variant, &design, data, Some(first.clone()), opts)
}

/// First stage for `gamma`, then maximum likelihood for `theta` with `V` estimated.
pub fn fit_two_step(family: FirstStageFamily, data: &ObservationSet, opts: &FitOptions) -> Result<FitResult> {
    let first = fit_first_stage(family, data)?;
    fit_with_first_stage(EstimatorVariant::TwoStep, &first, data, opts)
}

/// As [`fit_two_step`] with `rho` held at zero.
pub fn fit_independent(family: FirstStageFamily, data: &ObservationSet, opts: &FitOptions) -> Result<FitResult> {
    let first = fit_first_stage(family, data)?;
    fit_with_first_stage(EstimatorVariant::Independent, &first, data, opts)
}

/// Ignores confounding: no control function, `lambda_T = lambda_C = 0`.
pub fn fit_naive(data: &ObservationSet, opts: &FitOptions) -> Result<FitResult> {
    let design = LikelihoodData::new(data, vec![0.0; data.len()])?;
    fit_on_design(EstimatorVariant::Naive, &design, data, None, opts)
}

/// Treats the supplied control-function column as observed; no first-stage correction.
pub fn fit_oracle(data: &ObservationSet, control: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let design = LikelihoodData::new(data, control.to_vec())?;
    fit_on_design(EstimatorVariant::Oracle, &design, data, None, opts)
}
