//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Solves `(XᵀX + ridge·I) w = Xᵀy` where `gram = XᵀX` and `rhs = Xᵀy`.
pub fn solve_ridge(gram: &DMatrix<f64>, rhs: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let n = gram.nrows();
    // Scale the ridge to the diagonal so it does something on badly scaled systems.
    let scale = (0..n).map(|i| gram[(i, i)].abs()).fold(0.0_f64, f64::max).max(1.0);
    let mut a = gram.clone();
    for i in 0..n {
        a[(i, i)] += ridge * scale;
    }
    let chol = a.cholesky().ok_or(Error::Singular)?;
    let w = chol.solve(rhs);
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(Error::Singular)
    }
}

/// Least squares with ridge on rows of features.
pub fn ridge_least_squares(rows: &[Vec<f64>], targets: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for (row, &y) in rows.iter().zip(targets) {
        for i in 0..p {
            rhs[i] += row[i] * y;
            for j in 0..p {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    Ok(solve_ridge(&gram, &rhs, ridge)?.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_recovers_exact_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| 3.0 - 2.0 * i as f64).collect();
        let w = ridge_least_squares(&rows, &ys, 1e-12).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-8 && (w[1] + 2.0).abs() < 1e-8);
    }
}
