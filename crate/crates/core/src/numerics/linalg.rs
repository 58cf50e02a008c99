//! Small dense linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, MatrixRole, Result};

/// Matrices with a 2-norm condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// 2-norm condition number from the singular values; `inf` when singular.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

fn check_condition(a: &DMatrix<f64>, role: MatrixRole) -> Result<()> {
    let condition = condition_number(a);
    if condition.is_finite() && condition <= MAX_CONDITION {
        Ok(())
    } else {
        Err(Error::Singular { role, condition })
    }
}

/// Inverse of a well-conditioned square matrix. `role` names the matrix in errors.
pub fn invert(a: &DMatrix<f64>, role: MatrixRole) -> Result<DMatrix<f64>> {
    check_square(a)?;
    check_condition(a, role)?;
    a.clone().lu().try_inverse().ok_or(Error::Singular {
        role,
        condition: f64::INFINITY,
    })
}

/// Solves `a x = b`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, role: MatrixRole) -> Result<DVector<f64>> {
    check_square(a)?;
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    check_condition(a, role)?;
    a.clone().lu().solve(b).ok_or(Error::Singular {
        role,
        condition: f64::INFINITY,
    })
}

/// Least-squares coefficients of `y` on the columns of `x`, via QR.
///
/// Rejects designs whose cross-product `x^T x` is ill-conditioned.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, role: MatrixRole) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::Singular {
            role,
            condition: f64::INFINITY,
        });
    }
    let xtx = x.transpose() * x;
    check_condition(&xtx, role)?;
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).ok_or(Error::Singular {
        role,
        condition: f64::INFINITY,
    })
}

/// `(a + a^T) / 2`
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Pairwise (cascade) summation; result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

pub fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}
