use nalgebra::{DMatrix, DVector};

use super::basis::TimeBasis;
use crate::error::{Error, Result};

/// Differential parameter `∂tθ(t) = αᵀ ∂tφ(t)` with `α` of shape `b × k`.
///
/// Flattened coefficient vectors use the feature-major layout
/// `[α_{1,1}, ..., α_{b,1}, α_{1,2}, ..., α_{b,k}]`, i.e. index `j * b + r`.
#[derive(Clone, Debug)]
pub struct DiffParam {
    pub alpha: DMatrix<f64>,
    pub basis: TimeBasis,
}

impl DiffParam {
    pub fn new(alpha: DMatrix<f64>, basis: TimeBasis) -> Result<Self> {
        if alpha.nrows() != basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "alpha has {} rows, basis dimension is {}",
                alpha.nrows(),
                basis.dim()
            )));
        }
        Ok(Self { alpha, basis })
    }

    pub fn from_flat(flat: &[f64], basis: TimeBasis, k: usize) -> Result<Self> {
        let b = basis.dim();
        if flat.len() != b * k {
            return Err(Error::DimensionMismatch(format!("{} coefficients for b={b}, k={k}", flat.len())));
        }
        let alpha = DMatrix::from_fn(b, k, |r, j| flat[j * b + r]);
        Self::new(alpha, basis)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let (b, k) = self.alpha.shape();
        let mut v = vec![0.0; b * k];
        for j in 0..k {
            for r in 0..b {
                v[j * b + r] = self.alpha[(r, j)];
            }
        }
        v
    }

    pub fn feature_dim(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        let dphi = DVector::from_vec(self.basis.dphi(t));
        self.alpha.transpose() * dphi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_constant() {
        let dp = DiffParam::new(DMatrix::from_row_slice(1, 2, &[0.3, -0.1]), TimeBasis::Linear).unwrap();
        for t in [0.0, 0.4, 1.0] {
            assert_eq!(dp.evaluate(t).as_slice(), &[0.3, -0.1]);
        }
    }

    #[test]
    fn zero_alpha() {
        let basis = TimeBasis::fourier(4).unwrap();
        let dp = DiffParam::new(DMatrix::zeros(4, 3), basis).unwrap();
        assert!(dp.evaluate(0.7).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fourier_sin_loading() {
        // single loading on sin(t): derivative at 0 is cos(0) = 1
        let basis = TimeBasis::fourier(2).unwrap();
        let dp = DiffParam::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), basis).unwrap();
        let v = dp.evaluate(0.0);
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
        // finite-difference check of d/dt sin(t) at 0
        let h = 1e-6;
        let fd = ((h as f64).sin() - (-h as f64).sin()) / (2.0 * h);
        assert!((v[0] - fd).abs() < 1e-9);
    }

    #[test]
    fn flat_roundtrip() {
        let basis = TimeBasis::fourier(2).unwrap();
        let flat = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let dp = DiffParam::from_flat(&flat, basis, 3).unwrap();
        assert_eq!(dp.alpha[(1, 0)], 2.0);
        assert_eq!(dp.alpha[(0, 2)], 5.0);
        assert_eq!(dp.to_flat(), flat.to_vec());
    }
}
