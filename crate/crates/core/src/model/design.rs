//! Column-major copy of a sample with a fixed control-function column, used by
//! the optimizer and the sandwich where the likelihood is evaluated many times.

use nalgebra::DMatrix;

use super::control::{check_gamma, control_function};
use super::data::ObservationSet;
use super::likelihood::{log_subdensity_kernel, log_subdensity_kernel_grad};
use super::params::{FirstStageFamily, ThetaLayout};
use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;

#[derive(Debug, Clone)]
pub struct LikelihoodData {
    m: usize,
    y: Vec<f64>,
    delta: Vec<bool>,
    /// rows `(1, x~)`, stored contiguously
    x: Vec<f64>,
    z: Vec<f64>,
    v: Vec<f64>,
}

impl LikelihoodData {
    /// Uses the supplied control-function column (e.g. the true `V` of a simulation).
    pub fn new(data: &ObservationSet, v: Vec<f64>) -> Result<Self> {
        if v.len() != data.len() {
            return Err(Error::Dimension(format!(
                "control column has {} entries for {} observations",
                v.len(),
                data.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite control-function value".into()));
        }
        let m = data.m();
        let mut x = Vec::with_capacity(data.len() * (m + 1));
        for o in data {
            x.push(1.0);
            x.extend_from_slice(&o.x_tilde);
        }
        Ok(Self {
            m,
            y: data.iter().map(|o| o.y).collect(),
            delta: data.iter().map(|o| o.delta).collect(),
            x,
            z: data.iter().map(|o| o.z).collect(),
            v,
        })
    }

    pub fn with_control(data: &ObservationSet, family: FirstStageFamily, gamma: &[f64]) -> Result<Self> {
        check_gamma(gamma, data.m())?;
        let v = data
            .iter()
            .map(|o| control_function(family, gamma, o))
            .collect::<Result<Vec<_>>>()?;
        Self::new(data, v)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn layout(&self) -> ThetaLayout {
        ThetaLayout::new(self.m)
    }

    pub fn control(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let k = self.m + 1;
        &self.x[i * k..(i + 1) * k]
    }

    #[inline]
    fn residuals(&self, i: usize, theta: &[f64], l: &ThetaLayout) -> (f64, f64) {
        let row = self.row(i);
        let bt: f64 = row.iter().zip(&theta[l.beta_t()]).map(|(a, b)| a * b).sum();
        let bc: f64 = row.iter().zip(&theta[l.beta_c()]).map(|(a, b)| a * b).sum();
        (
            self.y[i] - bt - self.z[i] * theta[l.alpha_t()] - self.v[i] * theta[l.lambda_t()],
            self.y[i] - bc - self.z[i] * theta[l.alpha_c()] - self.v[i] * theta[l.lambda_c()],
        )
    }

    fn check_len(&self, theta: &[f64]) {
        assert_eq!(theta.len(), self.layout().len(), "theta length does not match the design");
    }

    /// Per-observation log sub-densities at the flat natural-scale `theta`.
    pub fn terms(&self, theta: &[f64]) -> Vec<f64> {
        self.check_len(theta);
        let l = self.layout();
        let (st, sc, rho) = (theta[l.sigma_t()], theta[l.sigma_c()], theta[l.rho()]);
        (0..self.len())
            .map(|i| {
                let (bt, bc) = self.residuals(i, theta, &l);
                log_subdensity_kernel(bt, bc, st, sc, rho, self.delta[i])
            })
            .collect()
    }

    /// Mean log-likelihood; NaN outside the parameter space.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let l = self.layout();
        if !in_domain(theta, &l) {
            return f64::NAN;
        }
        pairwise_sum(&self.terms(theta)) / self.len() as f64
    }

    /// Mean log-likelihood and its gradient with respect to the flat `theta`.
    pub fn log_likelihood_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.check_len(theta);
        let l = self.layout();
        grad.iter_mut().for_each(|g| *g = 0.0);
        if !in_domain(theta, &l) {
            return f64::NAN;
        }
        let mut terms = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let k = self.kernel(i, theta, &l);
            terms.push(k.value);
            self.accumulate_score(i, &k, &l, grad, 1.0);
        }
        let n = self.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        pairwise_sum(&terms) / n
    }

    /// Matrix of per-observation scores, one row per observation.
    pub fn scores(&self, theta: &[f64]) -> DMatrix<f64> {
        self.check_len(theta);
        let l = self.layout();
        let mut out = DMatrix::zeros(self.len(), l.len());
        let mut g = vec![0.0; l.len()];
        for i in 0..self.len() {
            g.iter_mut().for_each(|v| *v = 0.0);
            let k = self.kernel(i, theta, &l);
            self.accumulate_score(i, &k, &l, &mut g, 1.0);
            for (j, v) in g.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }

    #[inline]
    fn kernel(&self, i: usize, theta: &[f64], l: &ThetaLayout) -> super::likelihood::KernelValue {
        let (bt, bc) = self.residuals(i, theta, l);
        log_subdensity_kernel_grad(
            bt,
            bc,
            theta[l.sigma_t()],
            theta[l.sigma_c()],
            theta[l.rho()],
            self.delta[i],
        )
    }

    #[inline]
    fn accumulate_score(&self, i: usize, k: &super::likelihood::KernelValue, l: &ThetaLayout, g: &mut [f64], w: f64) {
        let row = self.row(i);
        // db/dbeta = -x, db/dalpha = -z, db/dlambda = -V
        let (dt, dc) = (-k.d_b_t * w, -k.d_b_c * w);
        for (gj, xj) in g[l.beta_t()].iter_mut().zip(row) {
            *gj += dt * xj;
        }
        for (gj, xj) in g[l.beta_c()].iter_mut().zip(row) {
            *gj += dc * xj;
        }
        g[l.alpha_t()] += dt * self.z[i];
        g[l.lambda_t()] += dt * self.v[i];
        g[l.alpha_c()] += dc * self.z[i];
        g[l.lambda_c()] += dc * self.v[i];
        g[l.sigma_t()] += k.d_sigma_t * w;
        g[l.sigma_c()] += k.d_sigma_c * w;
        g[l.rho()] += k.d_rho * w;
    }
}

fn in_domain(theta: &[f64], l: &ThetaLayout) -> bool {
    theta[l.sigma_t()] > 0.0
        && theta[l.sigma_c()] > 0.0
        && theta[l.rho()].abs() < 1.0
        && theta.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_likelihood, Observation, ThetaParams};
    use crate::numerics::{richardson_gradient, DiffConfig};

    fn sample() -> ObservationSet {
        let rows = [
            (3.1, true, 0.2, 1.0, 1.0),
            (4.0, false, -0.7, 0.0, 0.0),
            (1.2, true, 1.5, 1.0, 0.0),
            (6.3, false, -1.1, 0.0, 1.0),
            (2.2, true, 0.05, 1.0, 1.0),
        ];
        ObservationSet::new(
            rows.iter()
                .map(|&(y, d, x, w, z)| Observation::new(y, d, vec![x], w, z).unwrap())
                .collect(),
        )
        .unwrap()
    }

    const GAMMA: [f64; 3] = [-1.0, 0.6, 2.3];

    #[test]
    fn agrees_with_observation_path() {
        let data = sample();
        let d = LikelihoodData::with_control(&data, FirstStageFamily::Logit, &GAMMA).unwrap();
        let t = ThetaParams::design_truth();
        let a = d.log_likelihood(&t.to_vec());
        let b = log_likelihood(&t, &GAMMA, FirstStageFamily::Logit, &data).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn gradient_and_scores_match_richardson() {
        let data = sample();
        let d = LikelihoodData::with_control(&data, FirstStageFamily::Logit, &GAMMA).unwrap();
        let theta = ThetaParams::design_truth().to_vec();
        let mut g = vec![0.0; theta.len()];
        let v = d.log_likelihood_grad(&theta, &mut g);
        assert_eq!(v, d.log_likelihood(&theta));
        let num = richardson_gradient(|t| d.log_likelihood(t), &theta, &DiffConfig::default()).unwrap();
        for j in 0..theta.len() {
            assert!((g[j] - num[j]).abs() < 1e-7, "{j}: {} vs {}", g[j], num[j]);
        }
        let s = d.scores(&theta);
        for j in 0..theta.len() {
            let mean = s.column(j).sum() / 5.0;
            assert!((mean - g[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_domain_is_nan() {
        let data = sample();
        let d = LikelihoodData::with_control(&data, FirstStageFamily::Logit, &GAMMA).unwrap();
        let mut t = ThetaParams::design_truth().to_vec();
        t[10] = 1.0;
        assert!(d.log_likelihood(&t).is_nan());
    }
}
