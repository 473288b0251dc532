//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration with a fixed, deterministic start vector.
pub fn power_iteration_max_eig(m: &DMatrix<f64>, iters: usize) -> f64 {
    let p = m.nrows();
    if p == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(p, |i, _| 1.0 + 0.1 * ((i + 1) as f64).sin());
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // Rayleigh quotient of the final iterate.
    let w = m * &v;
    lambda.max(v.dot(&w))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Mirror the upper triangle onto the lower one.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Cholesky factor of `m + ridge * I`.
pub fn cholesky_with_ridge(m: &DMatrix<f64>, ridge: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut a = m.clone();
    if ridge != 0.0 {
        for i in 0..a.nrows() {
            a[(i, i)] += ridge;
        }
    }
    Cholesky::new(a).ok_or_else(|| {
        Error::Singular(format!(
            "matrix of size {} is not positive definite with ridge {ridge:e}",
            m.nrows()
        ))
    })
}

/// Inverse of a symmetric positive definite matrix, retrying once with the
/// given fallback ridge. Returns the inverse and the ridge actually used.
pub fn spd_inverse_with_fallback(m: &DMatrix<f64>, fallback_ridge: f64) -> Result<(DMatrix<f64>, f64)> {
    match cholesky_with_ridge(m, 0.0) {
        Ok(chol) => Ok((chol.inverse(), 0.0)),
        Err(_) => {
            let chol = cholesky_with_ridge(m, fallback_ridge)?;
            Ok((chol.inverse(), fallback_ridge))
        }
    }
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Weighted Gram matrix `Xᵀ diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    debug_assert_eq!(x.nrows(), w.len());
    let mut scaled = x.clone();
    for (i, &wi) in w.iter().enumerate() {
        scaled.row_mut(i).scale_mut(wi);
    }
    let mut gram = x.transpose() * scaled;
    symmetrize(&mut gram);
    gram
}

/// Two-sided standard normal quantile `z_{1 - delta/2}`.
pub fn normal_two_sided_quantile(delta: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - delta / 2.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}
