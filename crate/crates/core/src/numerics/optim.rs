//! Unconstrained minimization: Nelder–Mead and BFGS with a strong-Wolfe line search.
//!
//! `+inf` objective values at trial points are treated as "outside the
//! domain" and make the line search (or simplex move) back off. NaN, or a
//! non-finite value at the starting point, is an error.

use crate::error::{Error, Result};
use crate::numerics::diff::{richardson_gradient, DiffConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimMethod {
    DerivativeFree,
    QuasiNewton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    /// Relative decrease in the objective below which progress counts as stalled.
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    pub method: OptimMethod,
    /// Sup-norm of the gradient at which BFGS stops.
    pub gradient_tolerance: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-8,
            max_iterations: 10_000,
            method: OptimMethod::QuasiNewton,
            gradient_tolerance: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::Config(format!(
                "rel_tolerance must be positive, got {}",
                self.rel_tolerance
            )));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config(format!(
                "gradient_tolerance must be positive, got {}",
                self.gradient_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the Richardson gradient at `argmin` (NaN if it could not be evaluated).
    pub gradient_norm: f64,
}

/// Times BFGS restarts from a steepest-descent step after stalling short of stationarity.
const MAX_RESTARTS: usize = 5;

/// Gradient sup-norm accepted at a reported optimum, relative to `max(1, |f|)`.
pub const STATIONARITY_TOLERANCE: f64 = 1e-5;

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_nan() || v == f64::NEG_INFINITY {
        Err(Error::NonFinite {
            point: x.to_vec(),
            value: v,
        })
    } else {
        Ok(v)
    }
}

/// Minimizes `f` from `x0` using the method in `cfg`; gradients, when needed,
/// come from Richardson-extrapolated differences.
pub fn minimize<F>(f: F, x0: &[f64], cfg: &OptimConfig) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    match cfg.method {
        OptimMethod::DerivativeFree => nelder_mead(&f, x0, cfg),
        OptimMethod::QuasiNewton => {
            let dcfg = DiffConfig {
                richardson_iterations: 2,
                ..DiffConfig::default()
            };
            let grad = |x: &[f64]| {
                richardson_gradient(&f, x, &dcfg).unwrap_or_else(|_| vec![f64::NAN; x.len()])
            };
            bfgs(&f, &grad, x0, cfg)
        }
    }
}

/// BFGS with a caller-supplied gradient.
pub fn minimize_with_gradient<F, G>(f: F, grad: G, x0: &[f64], cfg: &OptimConfig) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    bfgs(&f, &grad, x0, cfg)
}

fn finish<F: Fn(&[f64]) -> f64>(
    f: &F,
    argmin: Vec<f64>,
    value: f64,
    stopped_cleanly: bool,
    iterations: usize,
) -> Minimum {
    let gradient_norm = richardson_gradient(f, &argmin, &DiffConfig::default())
        .map(|g| sup_norm(&g))
        .unwrap_or(f64::NAN);
    let stationary = gradient_norm <= STATIONARITY_TOLERANCE * value.abs().max(1.0);
    Minimum {
        argmin,
        value,
        converged: stopped_cleanly && stationary,
        iterations,
        gradient_norm,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bfgs<F, G>(f: &F, grad: &G, x0: &[f64], cfg: &OptimConfig) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite {
            point: x,
            value: fx,
        });
    }
    let mut g = grad(&x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            point: x,
            value: fx,
        });
    }
    // inverse Hessian approximation, row-major
    let mut h_inv = identity(n);
    let mut fresh = true;
    let mut stall = 0usize;
    let mut restarts = 0usize;
    let mut iterations = 0usize;
    let mut clean = false;

    while iterations < cfg.max_iterations {
        if sup_norm(&g) <= cfg.gradient_tolerance {
            clean = true;
            break;
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h_inv[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            h_inv = identity(n);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        if fresh {
            // keep the first probe on the scale of the variables
            let scale = 1.0 / sup_norm(&dir).max(1.0);
            dir.iter_mut().for_each(|d| *d *= scale);
            slope *= scale;
        }

        let step = line_search(f, grad, &x, fx, &g, &dir, slope)?;
        let Some((alpha, f_new, g_new)) = step else {
            if fresh {
                // steepest descent failed too: nothing more to gain
                clean = sup_norm(&g) <= STATIONARITY_TOLERANCE * fx.abs().max(1.0);
                break;
            }
            h_inv = identity(n);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
        let x_new: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ys = dot(&y, &s);

        let decrease = fx - f_new;
        if decrease <= cfg.rel_tolerance * fx.abs().max(cfg.rel_tolerance) {
            stall += 1;
        } else {
            stall = 0;
        }
        x = x_new;
        fx = f_new;
        g = g_new;

        if ys > 1e-300 {
            if fresh {
                let yy = dot(&y, &y);
                let scale = ys / yy;
                h_inv.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut h_inv, &s, &y, ys);
        }

        if stall >= 3 {
            clean = sup_norm(&g) <= STATIONARITY_TOLERANCE * fx.abs().max(1.0);
            if clean || restarts >= MAX_RESTARTS {
                break;
            }
            // slow progress away from a stationary point: drop the curvature
            // model and try again
            restarts += 1;
            stall = 0;
            h_inv = identity(n);
            fresh = true;
        }
    }
    if iterations >= cfg.max_iterations && sup_norm(&g) <= cfg.gradient_tolerance {
        clean = true;
    }
    Ok(finish(f, x, fx, clean, iterations))
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], ys: f64) {
    let n = s.len();
    let rho = 1.0 / ys;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

type Trial = (f64, f64, Vec<f64>);

/// Strong-Wolfe line search (Nocedal & Wright, algorithms 3.5 and 3.6).
/// `Ok(None)` means no acceptable step was found.
fn line_search<F, G>(
    f: &F,
    grad: &G,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    slope0: f64,
) -> Result<Option<Trial>>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    const MAX_STEPS: usize = 60;
    let _ = g0;

    let phi = |alpha: f64| -> Result<(f64, Vec<f64>)> {
        let p: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let v = eval(f, &p)?;
        Ok((v, p))
    };
    let dphi = |p: &[f64]| -> Vec<f64> { grad(p) };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut slope_prev = slope0;
    let mut alpha = 1.0;

    for iter in 0..MAX_STEPS {
        let (fa, p) = phi(alpha)?;
        if !fa.is_finite() {
            // outside the domain: retreat toward the last good point
            alpha = alpha_prev + 0.5 * (alpha - alpha_prev);
            if alpha - alpha_prev < 1e-16 {
                return Ok(None);
            }
            continue;
        }
        if fa > f0 + C1 * alpha * slope0 || (iter > 0 && fa >= f_prev) {
            return zoom(f, grad, x, dir, f0, slope0, (alpha_prev, f_prev, slope_prev), (alpha, fa));
        }
        let ga = dphi(&p);
        if ga.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { point: p, value: fa });
        }
        let slope = dot(&ga, dir);
        if slope.abs() <= -C2 * slope0 {
            return Ok(Some((alpha, fa, ga)));
        }
        if slope >= 0.0 {
            return zoom(f, grad, x, dir, f0, slope0, (alpha, fa, slope), (alpha_prev, f_prev));
        }
        alpha_prev = alpha;
        f_prev = fa;
        slope_prev = slope;
        alpha *= 2.0;
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn zoom<F, G>(
    f: &F,
    grad: &G,
    x: &[f64],
    dir: &[f64],
    f0: f64,
    slope0: f64,
    lo: (f64, f64, f64),
    hi: (f64, f64),
) -> Result<Option<Trial>>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let (mut a_lo, mut f_lo, mut s_lo) = lo;
    let (mut a_hi, mut f_hi) = hi;
    for _ in 0..60 {
        // quadratic interpolation from (a_lo, f_lo, s_lo) and (a_hi, f_hi)
        let d = a_hi - a_lo;
        let denom = 2.0 * (f_hi - f_lo - s_lo * d);
        let mut a = if denom > 0.0 && f_hi.is_finite() {
            a_lo - s_lo * d * d / denom
        } else {
            a_lo + 0.5 * d
        };
        let (lo_b, hi_b) = if a_lo < a_hi { (a_lo, a_hi) } else { (a_hi, a_lo) };
        let margin = 0.1 * (hi_b - lo_b);
        if !(a > lo_b + margin && a < hi_b - margin) {
            a = 0.5 * (a_lo + a_hi);
        }
        if (hi_b - lo_b).abs() < 1e-16 * hi_b.abs().max(1.0) {
            break;
        }
        let p: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + a * di).collect();
        let fa = eval(f, &p)?;
        if !fa.is_finite() || fa > f0 + C1 * a * slope0 || fa >= f_lo {
            a_hi = a;
            f_hi = fa;
            continue;
        }
        let ga = grad(&p);
        if ga.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { point: p, value: fa });
        }
        let slope = dot(&ga, dir);
        if slope.abs() <= -C2 * slope0 {
            return Ok(Some((a, fa, ga)));
        }
        if slope * (a_hi - a_lo) >= 0.0 {
            a_hi = a_lo;
            f_hi = f_lo;
        }
        a_lo = a;
        f_lo = fa;
        s_lo = slope;
    }
    // accept the best sufficient-decrease point even without the curvature condition
    if a_lo > 0.0 && f_lo < f0 {
        let p: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + a_lo * di).collect();
        let ga = grad(&p);
        if ga.iter().all(|v| v.is_finite()) {
            return Ok(Some((a_lo, f_lo, ga)));
        }
    }
    Ok(None)
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], cfg: &OptimConfig) -> Result<Minimum> {
    let n = x0.len();
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::NonFinite {
            point: x0.to_vec(),
            value: f0,
        });
    }
    if n == 0 {
        return Ok(finish(f, Vec::new(), f0, true, 0));
    }
    let mut iterations = 0usize;
    let mut best = (x0.to_vec(), f0);
    let mut clean = false;
    // a restart from the reported optimum guards against premature collapse
    for _restart in 0..3 {
        let (x, fx, its, ok) = nelder_mead_run(f, &best.0, best.1, cfg, cfg.max_iterations - iterations)?;
        iterations += its;
        let improved = fx < best.1 - cfg.rel_tolerance * best.1.abs();
        best = (x, fx);
        clean = ok;
        if !ok || !improved || iterations >= cfg.max_iterations {
            break;
        }
    }
    Ok(finish(f, best.0, best.1, clean, iterations))
}

type SimplexRun = (Vec<f64>, f64, usize, bool);

fn nelder_mead_run<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    f0: f64,
    cfg: &OptimConfig,
    budget: usize,
) -> Result<SimplexRun> {
    let n = x0.len();
    let nf = n as f64;
    // adaptive coefficients (Gao & Han) behave better as n grows
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for j in 0..n {
        let mut p = x0.to_vec();
        p[j] += if p[j] != 0.0 { 0.05 * p[j] } else { 2.5e-4 };
        let v = eval(f, &p)?;
        simplex.push((p, v));
    }

    let mut iterations = 0usize;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let spread = f_worst - f_best;
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| p.iter().zip(&simplex[0].0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        let scale = sup_norm(&simplex[0].0).max(1.0);
        if (spread.is_finite() && spread <= cfg.rel_tolerance * f_best.abs() + 1e-300)
            || diameter <= 1e-13 * scale
        {
            let (x, v) = simplex.swap_remove(0);
            return Ok((x, v, iterations, true));
        }
        if iterations >= budget {
            let (x, v) = simplex.swap_remove(0);
            return Ok((x, v, iterations, false));
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(f, &xr)?;
        if fr < simplex[0].1 {
            let xe = along(alpha * gamma);
            let fe = eval(f, &xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(alpha * rho);
            let fc = eval(f, &xc)?;
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(f, &xc)?;
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let p: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            let v = eval(f, &p)?;
            *vertex = (p, v);
        }
    }
}
