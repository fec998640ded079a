//! Dense Gaussian elimination for the tiny linear systems the bid-function
//! mechanisms produce (never larger than the number of buyers). Partial
//! pivoting keeps the solve stable; a pivot below tolerance is reported as a
//! singular system rather than silently amplified.

use crate::error::{EngineError, Result};

pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solves `a * x = b` in place, returning `x`.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, context: &str) -> Result<Vec<f64>> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n) && b.len() == n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("nonempty column");
        if a[pivot_row][col].abs() < PIVOT_TOLERANCE {
            return Err(EngineError::SingularSystem(format!(
                "{context}: pivot {:.3e} in column {col}",
                a[pivot_row][col]
            )));
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            // Index form kept: `a[row]` and `a[col]` alias the same matrix,
            // so the iterator rewrite needs split_at_mut and reads worse.
            #[allow(clippy::needless_range_loop)]
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for col in row + 1..n {
            acc -= a[row][col] * x[col];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Solves the same system after reversing the variable and equation order,
/// which forces a different pivot sequence. Used to cross-check solves whose
/// answers feed payments.
pub fn solve_reversed(a: &[Vec<f64>], b: &[f64], context: &str) -> Result<Vec<f64>> {
    let n = a.len();
    let flipped: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| a[n - 1 - r][n - 1 - c]).collect())
        .collect();
    let rhs: Vec<f64> = (0..n).map(|r| b[n - 1 - r]).collect();
    let mut x = solve(flipped, rhs, context)?;
    x.reverse();
    Ok(x)
}
