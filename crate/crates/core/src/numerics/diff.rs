//! Central differences refined by Richardson extrapolation.
//!
//! Each derivative is evaluated at steps `h, h/v, h/v^2, ...` and the
//! resulting table is extrapolated to zero step, cancelling the `h^2`,
//! `h^4`, ... error terms of the central formula in turn.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffConfig {
    /// First step for coordinate `j` is `initial_step_fraction * max(1, |x_j|)`.
    pub initial_step_fraction: f64,
    /// Ratio between successive steps.
    pub reduction_factor: f64,
    /// Depth of the Richardson table.
    pub richardson_iterations: usize,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            initial_step_fraction: 1e-4,
            reduction_factor: 2.0,
            richardson_iterations: 4,
        }
    }
}

impl DiffConfig {
    /// Settings for second derivatives: a first step of `1e-2 * max(1, |x|)`.
    ///
    /// Second differences lose about `eps * |f| / h^2` to rounding, so the
    /// `1e-4` gradient step would cap Hessian accuracy near `1e-5 * |f|`.
    pub fn hessian_default() -> Self {
        Self {
            initial_step_fraction: 1e-2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step_fraction > 0.0 && self.initial_step_fraction.is_finite()) {
            return Err(Error::Config(format!(
                "initial_step_fraction must be positive, got {}",
                self.initial_step_fraction
            )));
        }
        if !(self.reduction_factor > 1.0 && self.reduction_factor.is_finite()) {
            return Err(Error::Config(format!(
                "reduction_factor must exceed 1, got {}",
                self.reduction_factor
            )));
        }
        if self.richardson_iterations == 0 {
            return Err(Error::Config("richardson_iterations must be at least 1".into()));
        }
        Ok(())
    }

    fn initial_step(&self, x: f64) -> f64 {
        self.initial_step_fraction * x.abs().max(1.0)
    }
}

fn probe<F>(f: &F, point: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let value = f(point);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            point: point.to_vec(),
            value,
        })
    }
}

/// Extrapolates estimates taken at geometrically shrinking steps.
fn extrapolate(mut table: Vec<f64>, factor: f64) -> f64 {
    let ratio = factor * factor;
    let mut weight = ratio;
    for level in 1..table.len() {
        for k in (level..table.len()).rev() {
            table[k] = (weight * table[k] - table[k - 1]) / (weight - 1.0);
        }
        weight *= ratio;
    }
    *table.last().expect("non-empty table")
}

/// Derivative of a scalar function of one variable.
pub fn richardson_derivative<F>(f: F, x: f64, cfg: &DiffConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    richardson_gradient(|v: &[f64]| f(v[0]), &[x], cfg).map(|g| g[0])
}

/// Gradient of `f` at `x`.
pub fn richardson_gradient<F>(f: F, x: &[f64], cfg: &DiffConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let mut h = cfg.initial_step(x[j]);
        let mut table = Vec::with_capacity(cfg.richardson_iterations);
        for _ in 0..cfg.richardson_iterations {
            point[j] = x[j] + h;
            let up = probe(&f, &point)?;
            point[j] = x[j] - h;
            let down = probe(&f, &point)?;
            table.push((up - down) / (2.0 * h));
            h /= cfg.reduction_factor;
        }
        point[j] = x[j];
        grad.push(extrapolate(table, cfg.reduction_factor));
    }
    Ok(grad)
}

/// Jacobian (rows = outputs, columns = inputs) of a vector-valued `f`.
pub fn richardson_jacobian<F>(f: F, x: &[f64], cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    let levels = cfg.richardson_iterations;
    let mut point = x.to_vec();
    let mut jac: Option<DMatrix<f64>> = None;
    for j in 0..x.len() {
        let mut h = cfg.initial_step(x[j]);
        let mut tables: Vec<Vec<f64>> = Vec::new();
        for _ in 0..levels {
            point[j] = x[j] + h;
            let up = f(&point);
            check_vector(&up, &point)?;
            point[j] = x[j] - h;
            let down = f(&point);
            check_vector(&down, &point)?;
            if up.len() != down.len() {
                return Err(Error::Dimension("jacobian output length changed".into()));
            }
            if tables.is_empty() {
                tables = vec![Vec::with_capacity(levels); up.len()];
            }
            for (t, (u, d)) in tables.iter_mut().zip(up.iter().zip(&down)) {
                t.push((u - d) / (2.0 * h));
            }
            h /= cfg.reduction_factor;
        }
        point[j] = x[j];
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(tables.len(), x.len()));
        if jac.nrows() != tables.len() {
            return Err(Error::Dimension("jacobian output length changed".into()));
        }
        for (i, t) in tables.into_iter().enumerate() {
            jac[(i, j)] = extrapolate(t, cfg.reduction_factor);
        }
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

fn check_vector(values: &[f64], point: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&value) => Err(Error::NonFinite {
            point: point.to_vec(),
            value,
        }),
        None => Ok(()),
    }
}

/// Hessian of a scalar `f`, symmetrized as `(H + H^T) / 2`.
pub fn richardson_hessian<F>(f: F, x: &[f64], cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let p = x.len();
    let levels = cfg.richardson_iterations;
    let centre = probe(&f, x)?;
    let mut point = x.to_vec();
    let mut hess = DMatrix::zeros(p, p);

    for i in 0..p {
        let mut h = cfg.initial_step(x[i]);
        let mut table = Vec::with_capacity(levels);
        for _ in 0..levels {
            point[i] = x[i] + h;
            let up = probe(&f, &point)?;
            point[i] = x[i] - h;
            let down = probe(&f, &point)?;
            table.push((up - 2.0 * centre + down) / (h * h));
            h /= cfg.reduction_factor;
        }
        point[i] = x[i];
        hess[(i, i)] = extrapolate(table, cfg.reduction_factor);
    }

    for i in 0..p {
        for j in 0..i {
            let mut hi = cfg.initial_step(x[i]);
            let mut hj = cfg.initial_step(x[j]);
            let mut table = Vec::with_capacity(levels);
            for _ in 0..levels {
                let mut corner = |si: f64, sj: f64| {
                    point[i] = x[i] + si * hi;
                    point[j] = x[j] + sj * hj;
                    probe(&f, &point)
                };
                let pp = corner(1.0, 1.0)?;
                let pm = corner(1.0, -1.0)?;
                let mp = corner(-1.0, 1.0)?;
                let mm = corner(-1.0, -1.0)?;
                table.push((pp - pm - mp + mm) / (4.0 * hi * hj));
                hi /= cfg.reduction_factor;
                hj /= cfg.reduction_factor;
            }
            point[i] = x[i];
            point[j] = x[j];
            let v = extrapolate(table, cfg.reduction_factor);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DiffConfig {
        DiffConfig::default()
    }

    #[test]
    fn gradient_examples() {
        let g = richardson_gradient(|x: &[f64]| x[0] * x[0], &[3.0], &cfg()).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-9);
        let g = richardson_gradient(|x: &[f64]| x[0].exp(), &[0.0], &cfg()).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9);
        let g = richardson_gradient(|x: &[f64]| x[0] * x[1], &[2.0, 5.0], &cfg()).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-9 && (g[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn jacobian_of_identity() {
        let x = [0.3, -2.0, 7.5];
        let j = richardson_jacobian(|v: &[f64]| v.to_vec(), &x, &cfg()).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((j[(r, c)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hessian_of_quadratic_form() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, -1.0, 3.0, 0.0, 4.0, 0.2, 1.0]);
        let f = |x: &[f64]| {
            let v = nalgebra::DVector::from_column_slice(x);
            (v.transpose() * &a * &v)[(0, 0)]
        };
        let want = &a + a.transpose();
        let h = richardson_hessian(f, &[0.4, -1.3, 2.2], &DiffConfig::hessian_default()).unwrap();
        assert!((h - &want).abs().max() < 1e-6);
        // the gradient step is too small for second differences
        let coarse = richardson_hessian(f, &[0.4, -1.3, 2.2], &cfg()).unwrap();
        assert!((coarse - want).abs().max() < 1e-4);
    }

    #[test]
    fn hessian_of_trig_product() {
        let (x, y) = (0.3f64, 0.7f64);
        let f = |v: &[f64]| v[0].sin() * v[1].cos();
        let h = richardson_hessian(f, &[x, y], &DiffConfig::hessian_default()).unwrap();
        let fxx = -x.sin() * y.cos();
        let fxy = -x.cos() * y.sin();
        let fyy = -x.sin() * y.cos();
        assert!((h[(0, 0)] - fxx).abs() < 1e-6);
        assert!((h[(0, 1)] - fxy).abs() < 1e-6);
        assert!((h[(1, 0)] - fxy).abs() < 1e-6);
        assert!((h[(1, 1)] - fyy).abs() < 1e-6);
    }

    #[test]
    fn non_finite_probe_is_an_error() {
        let err = richardson_gradient(|x: &[f64]| x[0].ln(), &[0.0], &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let bad = DiffConfig {
            reduction_factor: 1.0,
            ..DiffConfig::default()
        };
        assert!(richardson_gradient(|x: &[f64]| x[0], &[1.0], &bad).is_err());
    }
}
