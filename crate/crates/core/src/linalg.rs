//! Small dense least-squares helpers shared by the forecasting and
//! diagnostics modules. Normal equations plus Gaussian elimination with
//! partial pivoting are entirely adequate at the design sizes that occur
//! here (at most a few dozen columns); nalgebra is kept for the synthesis
//! module's polynomial companion matrices rather than being threaded
//! through every regression.

use crate::error::{Error, Result};

/// Ordinary least squares for a row-major design matrix with `cols`
/// columns. Returns the coefficient vector; the caller owns residuals.
pub(crate) fn least_squares(x: &[f64], cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    assert!(cols > 0 && x.len() % cols == 0, "ragged design matrix");
    let rows = x.len() / cols;
    assert_eq!(rows, y.len(), "design/response row mismatch");
    if rows < cols {
        return Err(Error::SingularDesign {
            context: format!("{rows} rows for {cols} unknowns"),
        });
    }
    // Normal equations: X'X beta = X'y.
    let mut xtx = vec![0.0_f64; cols * cols];
    let mut xty = vec![0.0_f64; cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        for i in 0..cols {
            xty[i] += row[i] * y[r];
            for j in i..cols {
                xtx[i * cols + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            xtx[i * cols + j] = xtx[j * cols + i];
        }
    }
    solve_in_place(xtx, xty, "least squares normal equations")
}

/// Solves `A b = rhs` by Gaussian elimination with partial pivoting,
/// consuming both. Pivots are judged singular relative to the largest
/// entry of the original matrix, so the test is scale-free.
pub(crate) fn solve_in_place(mut a: Vec<f64>, mut rhs: Vec<f64>, context: &str) -> Result<Vec<f64>> {
    let n = rhs.len();
    assert_eq!(a.len(), n * n, "matrix/rhs size mismatch");
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(1e-300);

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1 * n + col].abs().total_cmp(&a[r2 * n + col].abs()))
            .unwrap();
        if a[pivot_row * n + col].abs() <= tol {
            return Err(Error::SingularDesign {
                context: context.to_string(),
            });
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = rhs[col];
        for k in col + 1..n {
            v -= a[col * n + k] * rhs[k];
        }
        rhs[col] = v / a[col * n + col];
    }
    Ok(rhs)
}

/// Coefficient of determination of `fitted` against `y` (1 - SSR/SST).
/// A constant response yields 0 by convention rather than a 0/0.
pub(crate) fn r_squared(y: &[f64], fitted: &[f64]) -> f64 {
    assert_eq!(y.len(), fitted.len());
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst <= 0.0 {
        return 0.0;
    }
    let ssr: f64 = y
        .iter()
        .zip(fitted)
        .map(|(v, f)| (v - f).powi(2))
        .sum();
    1.0 - ssr / sst
}
