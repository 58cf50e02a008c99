//! Sub-densities of `(Y, Delta)` given `(W, Z)` and the sample log-likelihood.

use super::control::control_function;
use super::data::{dot, Observation, ObservationSet};
use super::params::{FirstStageFamily, ThetaParams};
use crate::error::{Error, Result};
use crate::numerics::normal::{log_norm_cdf, log_norm_pdf, norm_cdf};
use crate::numerics::{binorm_cdf, pairwise_sum};

/// Log sub-density and its partial derivatives with respect to
/// `(b_T, b_C, sigma_T, sigma_C, rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub d_b_t: f64,
    pub d_b_c: f64,
    pub d_sigma_t: f64,
    pub d_sigma_c: f64,
    pub d_rho: f64,
}

/// `log f(y, delta)` written in terms of the residuals.
///
/// With `u = b_own / sigma_own`, `v = b_other / sigma_other` and
/// `a = (v - rho u) / sqrt(1 - rho^2)` the value is
/// `-ln sigma_own + ln phi(u) + ln Phi(-a)`; "own" is T when `delta` holds.
#[inline]
pub fn log_subdensity_kernel(b_t: f64, b_c: f64, sigma_t: f64, sigma_c: f64, rho: f64, delta: bool) -> f64 {
    let (b_own, s_own, b_oth, s_oth) = if delta {
        (b_t, sigma_t, b_c, sigma_c)
    } else {
        (b_c, sigma_c, b_t, sigma_t)
    };
    let u = b_own / s_own;
    let v = b_oth / s_oth;
    let a = (v - rho * u) / (1.0 - rho * rho).sqrt();
    -s_own.ln() + log_norm_pdf(u) + log_norm_cdf(-a)
}

/// As [`log_subdensity_kernel`], with the analytic gradient.
#[inline]
pub fn log_subdensity_kernel_grad(
    b_t: f64,
    b_c: f64,
    sigma_t: f64,
    sigma_c: f64,
    rho: f64,
    delta: bool,
) -> KernelValue {
    let (b_own, s_own, b_oth, s_oth) = if delta {
        (b_t, sigma_t, b_c, sigma_c)
    } else {
        (b_c, sigma_c, b_t, sigma_t)
    };
    let u = b_own / s_own;
    let v = b_oth / s_oth;
    let s = (1.0 - rho * rho).sqrt();
    let a = (v - rho * u) / s;
    let log_tail = log_norm_cdf(-a);
    let value = -s_own.ln() + log_norm_pdf(u) + log_tail;
    // inverse Mills ratio phi(a) / Phi(-a)
    let mills = (log_norm_pdf(a) - log_tail).exp();

    let d_u = -u + mills * rho / s;
    let d_v = -mills / s;
    let d_rho = -mills * (rho * v - u) / (s * s * s);
    let d_b_own = d_u / s_own;
    let d_b_oth = d_v / s_oth;
    let d_s_own = -1.0 / s_own - d_u * u / s_own;
    let d_s_oth = -d_v * v / s_oth;

    if delta {
        KernelValue {
            value,
            d_b_t: d_b_own,
            d_b_c: d_b_oth,
            d_sigma_t: d_s_own,
            d_sigma_c: d_s_oth,
            d_rho,
        }
    } else {
        KernelValue {
            value,
            d_b_t: d_b_oth,
            d_b_c: d_b_own,
            d_sigma_t: d_s_oth,
            d_sigma_c: d_s_own,
            d_rho,
        }
    }
}

fn check_theta(theta: &ThetaParams, obs: &Observation) -> Result<()> {
    if theta.m() != obs.m() || theta.beta_t.len() != theta.beta_c.len() || theta.beta_t.is_empty() {
        return Err(Error::Dimension(format!(
            "theta is sized for m = {}, observation has m = {}",
            theta.m(),
            obs.m()
        )));
    }
    Ok(())
}

/// Residuals with a given control-function value `v`.
pub fn residuals_with_control(theta: &ThetaParams, obs: &Observation, v: f64) -> Result<(f64, f64)> {
    check_theta(theta, obs)?;
    let m = obs.m();
    let xb_t = theta.beta_t[0] + dot(&obs.x_tilde, &theta.beta_t[1..=m]);
    let xb_c = theta.beta_c[0] + dot(&obs.x_tilde, &theta.beta_c[1..=m]);
    Ok((
        obs.y - xb_t - obs.z * theta.alpha_t - v * theta.lambda_t,
        obs.y - xb_c - obs.z * theta.alpha_c - v * theta.lambda_c,
    ))
}

/// `(b_T, b_C)` with `b_T = y - x^T beta_T - z alpha_T - V lambda_T`.
pub fn residuals(
    theta: &ThetaParams,
    gamma: &[f64],
    family: FirstStageFamily,
    obs: &Observation,
) -> Result<(f64, f64)> {
    let v = control_function(family, gamma, obs)?;
    residuals_with_control(theta, obs, v)
}

pub fn log_subdensity_with_control(theta: &ThetaParams, obs: &Observation, v: f64) -> Result<f64> {
    let (b_t, b_c) = residuals_with_control(theta, obs, v)?;
    Ok(log_subdensity_kernel(
        b_t,
        b_c,
        theta.sigma_t,
        theta.sigma_c,
        theta.rho,
        obs.delta,
    ))
}

/// Log of the sub-density `f_{Y,Delta|W,Z}(y, delta)` for one observation.
pub fn log_subdensity(
    theta: &ThetaParams,
    gamma: &[f64],
    family: FirstStageFamily,
    obs: &Observation,
) -> Result<f64> {
    let v = control_function(family, gamma, obs)?;
    log_subdensity_with_control(theta, obs, v)
}

/// Mean of the per-observation log sub-densities.
pub fn log_likelihood(
    theta: &ThetaParams,
    gamma: &[f64],
    family: FirstStageFamily,
    data: &ObservationSet,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(data.len());
    for (index, obs) in data.iter().enumerate() {
        let l = log_subdensity(theta, gamma, family, obs)?;
        if !l.is_finite() {
            return Err(Error::NonFiniteLikelihood { index });
        }
        terms.push(l);
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// `F_{Y|W,Z}(y) = Phi(b_T/sigma_T) + Phi(b_C/sigma_C) - Phi_2(b_T/sigma_T, b_C/sigma_C; rho)`,
/// with the residuals evaluated at `y` instead of the observed follow-up time.
pub fn conditional_cdf_y(
    theta: &ThetaParams,
    gamma: &[f64],
    family: FirstStageFamily,
    obs: &Observation,
    y: f64,
) -> Result<f64> {
    let shifted = Observation { y, ..obs.clone() };
    let (b_t, b_c) = residuals(theta, gamma, family, &shifted)?;
    let u = b_t / theta.sigma_t;
    let v = b_c / theta.sigma_c;
    let joint = binorm_cdf(u, v, theta.rho)?;
    Ok((norm_cdf(u) + norm_cdf(v) - joint).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{richardson_derivative, richardson_gradient, DiffConfig};
    use proptest::prelude::*;

    fn unit_theta(rho: f64) -> ThetaParams {
        ThetaParams {
            beta_t: vec![0.0, 0.0],
            alpha_t: 0.0,
            lambda_t: 0.0,
            beta_c: vec![0.0, 0.0],
            alpha_c: 0.0,
            lambda_c: 0.0,
            sigma_t: 1.0,
            sigma_c: 1.0,
            rho,
        }
    }

    fn record(y: f64, delta: bool) -> Observation {
        Observation::new(y, delta, vec![0.4], 1.0, 1.0).unwrap()
    }

    const GAMMA: [f64; 3] = [-1.0, 0.6, 2.3];

    #[test]
    fn zero_coefficients_give_y_as_residual() {
        let (bt, bc) = residuals(&unit_theta(0.0), &GAMMA, FirstStageFamily::Logit, &record(1.0, true)).unwrap();
        assert_eq!((bt, bc), (1.0, 1.0));
    }

    #[test]
    fn residuals_ignore_gamma_without_control_terms() {
        let mut t = ThetaParams::design_truth();
        t.lambda_t = 0.0;
        t.lambda_c = 0.0;
        let o = record(3.0, true);
        let a = residuals(&t, &GAMMA, FirstStageFamily::Logit, &o).unwrap();
        let b = residuals(&t, &[4.0, -2.0, 0.1], FirstStageFamily::Logit, &o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residuals_at_design_truth() {
        // x~ = 0.4, w~ = 1, z = 1: a = -1 + 0.24 + 2.3 = 1.54, V = -E[nu | nu < 1.54]
        let t = ThetaParams::design_truth();
        let o = record(3.0, true);
        let a: f64 = 1.54;
        let em = (-a).exp();
        let v = -((1.0 + em) * (1.0 + em).ln() + a * em);
        let bt = 3.0 - 2.5 - 2.6 * 0.4 - 1.8 - 2.0 * v;
        let bc = 3.0 - 2.8 - 1.9 * 0.4 - 1.5 - 1.2 * v;
        let (rt, rc) = residuals(&t, &GAMMA, FirstStageFamily::Logit, &o).unwrap();
        assert!((rt - bt).abs() < 1e-12 && (rc - bc).abs() < 1e-12);
    }

    #[test]
    fn origin_value() {
        let l = log_subdensity(&unit_theta(0.0), &GAMMA, FirstStageFamily::Logit, &record(0.0, true)).unwrap();
        let expected = (0.5 * crate::numerics::norm_pdf(0.0)).ln();
        assert!((l - expected).abs() < 1e-14);
        assert!((l + 1.612_085_713_764_618).abs() < 1e-9);
    }

    #[test]
    fn independence_factorizes() {
        let mut t = ThetaParams::design_truth();
        t.rho = 0.0;
        let o = record(4.2, true);
        let (bt, bc) = residuals(&t, &GAMMA, FirstStageFamily::Logit, &o).unwrap();
        let expected = log_norm_pdf(bt / t.sigma_t) - t.sigma_t.ln() + log_norm_cdf(-bc / t.sigma_c);
        let l = log_subdensity(&t, &GAMMA, FirstStageFamily::Logit, &o).unwrap();
        assert!((l - expected).abs() < 1e-13);
    }

    #[test]
    fn analytic_gradient_matches_richardson() {
        let cfg = DiffConfig::default();
        for &delta in &[true, false] {
            for &(bt, bc, st, sc, r) in &[
                (0.3, -0.8, 1.1, 1.4, 0.75),
                (-2.0, 1.5, 0.7, 2.0, -0.4),
                (4.0, -3.0, 1.0, 1.0, 0.95),
            ] {
                let k = log_subdensity_kernel_grad(bt, bc, st, sc, r, delta);
                let f = |p: &[f64]| log_subdensity_kernel(p[0], p[1], p[2], p[3], p[4], delta);
                let g = richardson_gradient(f, &[bt, bc, st, sc, r], &cfg).unwrap();
                let a = [k.d_b_t, k.d_b_c, k.d_sigma_t, k.d_sigma_c, k.d_rho];
                for j in 0..5 {
                    assert!((a[j] - g[j]).abs() < 1e-7, "delta={delta} j={j}: {} vs {}", a[j], g[j]);
                }
                assert_eq!(k.value, log_subdensity_kernel(bt, bc, st, sc, r, delta));
            }
        }
    }

    #[test]
    fn far_tails_finite() {
        for &b in &[-60.0, 60.0] {
            for delta in [true, false] {
                let k = log_subdensity_kernel_grad(b, -b, 1.0, 1.0, 0.9, delta);
                assert!(k.value.is_finite() && k.d_rho.is_finite() && k.d_b_t.is_finite());
            }
        }
    }

    #[test]
    fn mean_over_duplicates() {
        let t = ThetaParams::design_truth();
        let a = record(3.1, true);
        let b = Observation::new(5.0, false, vec![-1.2], 0.0, 0.0).unwrap();
        let one = ObservationSet::new(vec![a.clone()]).unwrap();
        let l1 = log_likelihood(&t, &GAMMA, FirstStageFamily::Logit, &one).unwrap();
        assert_eq!(l1, log_subdensity(&t, &GAMMA, FirstStageFamily::Logit, &a).unwrap());
        let two = ObservationSet::new(vec![a.clone(), b.clone()]).unwrap();
        let four = ObservationSet::new(vec![a.clone(), b.clone(), a, b]).unwrap();
        let l2 = log_likelihood(&t, &GAMMA, FirstStageFamily::Logit, &two).unwrap();
        let l4 = log_likelihood(&t, &GAMMA, FirstStageFamily::Logit, &four).unwrap();
        assert!((l2 - l4).abs() < 1e-15);
    }

    #[test]
    fn cdf_limits_and_independence() {
        let t = ThetaParams::design_truth();
        let o = record(0.0, true);
        let f = |y| conditional_cdf_y(&t, &GAMMA, FirstStageFamily::Logit, &o, y).unwrap();
        assert!(f(-80.0) < 1e-15);
        assert!(f(80.0) > 1.0 - 1e-15);

        let mut t0 = t.clone();
        t0.rho = 0.0;
        let y = 4.0;
        let (bt, bc) = residuals(&t0, &GAMMA, FirstStageFamily::Logit, &Observation { y, ..o.clone() }).unwrap();
        let (pt, pc) = (norm_cdf(bt / t0.sigma_t), norm_cdf(bc / t0.sigma_c));
        let got = conditional_cdf_y(&t0, &GAMMA, FirstStageFamily::Logit, &o, y).unwrap();
        assert!((got - (pt + pc - pt * pc)).abs() < 1e-12);
    }

    #[test]
    fn cdf_derivative_is_total_subdensity() {
        let t = ThetaParams::design_truth();
        let o = record(0.0, true);
        let cfg = DiffConfig::default();
        for i in 0..25 {
            let y = -2.0 + 0.4 * i as f64;
            let d = richardson_derivative(
                |yy| conditional_cdf_y(&t, &GAMMA, FirstStageFamily::Logit, &o, yy).unwrap(),
                y,
                &cfg,
            )
            .unwrap();
            let dens: f64 = [true, false]
                .iter()
                .map(|&delta| {
                    let r = Observation { y, delta, ..o.clone() };
                    log_subdensity(&t, &GAMMA, FirstStageFamily::Logit, &r).unwrap().exp()
                })
                .sum();
            assert!((d - dens).abs() < 1e-6, "y={y}: {d} vs {dens}");
        }
    }

    /// Total mass of the two sub-densities, Gauss-Legendre on a wide window.
    fn total_mass(t: &ThetaParams, o: &Observation) -> f64 {
        let (nodes, weights) = gauss_legendre_20();
        let (lo, hi, panels) = (-60.0, 60.0, 600);
        let h = (hi - lo) / panels as f64;
        let mut sum = 0.0;
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let y = mid + 0.5 * h * x;
                for delta in [true, false] {
                    let r = Observation { y, delta, ..o.clone() };
                    sum += 0.5 * h * w * log_subdensity(t, &GAMMA, FirstStageFamily::Logit, &r).unwrap().exp();
                }
            }
        }
        sum
    }

    fn gauss_legendre_20() -> (Vec<f64>, Vec<f64>) {
        // Newton iteration on P_20
        let n = 20;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in 1..=n {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        (nodes, weights)
    }

    #[test]
    fn subdensities_integrate_to_one() {
        let t = ThetaParams::design_truth();
        let o = record(0.0, true);
        assert!((total_mass(&t, &o) - 1.0).abs() < 1e-8);
    }

    fn swap(t: &ThetaParams) -> ThetaParams {
        ThetaParams {
            beta_t: t.beta_c.clone(),
            alpha_t: t.alpha_c,
            lambda_t: t.lambda_c,
            beta_c: t.beta_t.clone(),
            alpha_c: t.alpha_t,
            lambda_c: t.lambda_t,
            sigma_t: t.sigma_c,
            sigma_c: t.sigma_t,
            rho: t.rho,
        }
    }

    fn arb_theta() -> impl Strategy<Value = ThetaParams> {
        (
            prop::collection::vec(-3.0..3.0f64, 8),
            0.3..3.0f64,
            0.3..3.0f64,
            -0.95..0.95f64,
        )
            .prop_map(|(c, st, sc, rho)| ThetaParams {
                beta_t: vec![c[0], c[1]],
                alpha_t: c[2],
                lambda_t: c[3],
                beta_c: vec![c[4], c[5]],
                alpha_c: c[6],
                lambda_c: c[7],
                sigma_t: st,
                sigma_c: sc,
                rho,
            })
    }

    fn arb_obs() -> impl Strategy<Value = Observation> {
        (-6.0..10.0f64, any::<bool>(), -2.0..2.0f64, 0.0..2.0f64, any::<bool>())
            .prop_map(|(y, d, x, w, z)| Observation::new(y, d, vec![x], w, if z { 1.0 } else { 0.0 }).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exchange_symmetry(t in arb_theta(), o in arb_obs()) {
            let a = log_subdensity(&t, &GAMMA, FirstStageFamily::Logit, &o).unwrap();
            let flipped = Observation { delta: !o.delta, ..o.clone() };
            let b = log_subdensity(&swap(&t), &GAMMA, FirstStageFamily::Logit, &flipped).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn location_equivariance(t in arb_theta(), o in arb_obs(), c in -5.0..5.0f64) {
            let a = log_subdensity(&t, &GAMMA, FirstStageFamily::Logit, &o).unwrap();
            let mut s = t.clone();
            s.beta_t[0] += c;
            s.beta_c[0] += c;
            let shifted = Observation { y: o.y + c, ..o.clone() };
            let b = log_subdensity(&s, &GAMMA, FirstStageFamily::Logit, &shifted).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn cdf_monotone_and_bounded(t in arb_theta(), o in arb_obs()) {
            let mut prev = 0.0;
            for i in 0..40 {
                let y = -15.0 + i as f64;
                let f = conditional_cdf_y(&t, &GAMMA, FirstStageFamily::Logit, &o, y).unwrap();
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(f >= prev - 1e-12);
                prev = f;
            }
        }

        #[test]
        fn linear_control_slope_one(g0 in -2.0..2.0f64, g1 in -2.0..2.0f64, g2 in -2.0..2.0f64, z in -5.0..5.0f64) {
            let o = Observation::new(0.0, true, vec![0.7], 1.3, z).unwrap();
            let o1 = Observation { z: z + 1.0, ..o.clone() };
            let gamma = [g0, g1, g2];
            let v0 = control_function(FirstStageFamily::Linear, &gamma, &o).unwrap();
            let v1 = control_function(FirstStageFamily::Linear, &gamma, &o1).unwrap();
            prop_assert!((v1 - v0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_over_random_parameters() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let t = ThetaParams {
                beta_t: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                alpha_t: rng.random_range(-2.0..2.0),
                lambda_t: rng.random_range(-2.0..2.0),
                beta_c: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                alpha_c: rng.random_range(-2.0..2.0),
                lambda_c: rng.random_range(-2.0..2.0),
                sigma_t: rng.random_range(0.3..2.5),
                sigma_c: rng.random_range(0.3..2.5),
                rho: rng.random_range(-0.95..0.95),
            };
            let o = Observation::new(0.0, true, vec![rng.random_range(-2.0..2.0)], rng.random_range(0.0..2.0), 1.0)
                .unwrap();
            let mass = total_mass(&t, &o);
            assert!((mass - 1.0).abs() < 1e-8, "mass {mass} for {t:?}");
        }
    }
}
