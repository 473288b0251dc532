use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

type Evaluator = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// Products `x_i x_j` for `i <= j`.
    GaussianPairwise,
    /// Products `x_i x_j` for `i < j` over binary observations.
    IsingPairwise,
    Custom(String),
}

/// Sufficient statistic `f: R^d -> R^k`.
///
/// Pairwise maps use upper-triangular row-major ordering of `(i, j)`:
/// `(0,0), (0,1), ..., (0,d-1), (1,1), ...` for the Gaussian map and the same
/// without the diagonal for the Ising map.
#[derive(Clone)]
pub struct FeatureMap {
    kind: FeatureKind,
    d: usize,
    k: usize,
    evaluator: Evaluator,
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureMap")
            .field("kind", &self.kind)
            .field("d", &self.d)
            .field("k", &self.k)
            .finish()
    }
}

impl FeatureMap {
    pub fn gaussian_pairwise(d: usize) -> Self {
        let k = d * (d + 1) / 2;
        let evaluator: Evaluator = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let mut idx = 0;
            for i in 0..x.len() {
                for j in i..x.len() {
                    out[idx] = x[i] * x[j];
                    idx += 1;
                }
            }
        });
        Self { kind: FeatureKind::GaussianPairwise, d, k, evaluator }
    }

    pub fn ising_pairwise(d: usize) -> Self {
        let k = d * d.saturating_sub(1) / 2;
        let evaluator: Evaluator = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let mut idx = 0;
            for i in 0..x.len() {
                for j in (i + 1)..x.len() {
                    out[idx] = x[i] * x[j];
                    idx += 1;
                }
            }
        });
        Self { kind: FeatureKind::IsingPairwise, d, k, evaluator }
    }

    /// A user-supplied map. The evaluator receives an observation of length
    /// `d` and must fill an output slice of length `k`.
    pub fn custom<F>(name: impl Into<String>, d: usize, k: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { kind: FeatureKind::Custom(name.into()), d, k, evaluator: Arc::new(f) }
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "observation has length {}, feature map expects {}",
                x.len(),
                self.d
            )));
        }
        if out.len() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "output has length {}, feature map produces {}",
                out.len(),
                self.k
            )));
        }
        (self.evaluator)(x, out);
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.k];
        self.evaluate_into(x, &mut out)?;
        Ok(out)
    }

    /// Feature matrix with one row per observation; `rows` is row-major `n × d`.
    pub fn feature_matrix(&self, rows: &[f64]) -> Result<DMatrix<f64>> {
        if self.d == 0 || rows.len() % self.d != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form rows of length {}",
                rows.len(),
                self.d
            )));
        }
        let n = rows.len() / self.d;
        let mut m = DMatrix::zeros(n, self.k);
        let mut buf = vec![0.0; self.k];
        for (i, x) in rows.chunks_exact(self.d).enumerate() {
            self.evaluate_into(x, &mut buf)?;
            for (j, v) in buf.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    /// Node pair for a pairwise feature index; `None` for custom maps.
    pub fn edge(&self, index: usize) -> Option<(usize, usize)> {
        if index >= self.k {
            return None;
        }
        match self.kind {
            FeatureKind::GaussianPairwise => Some(pair_from_index(self.d, index, true)),
            FeatureKind::IsingPairwise => Some(pair_from_index(self.d, index, false)),
            FeatureKind::Custom(_) => None,
        }
    }

    /// Feature index of the pair `(i, j)` (order-insensitive).
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if j >= self.d {
            return None;
        }
        match self.kind {
            FeatureKind::GaussianPairwise => Some(upper_index(self.d, i, j)),
            FeatureKind::IsingPairwise if i < j => Some(strict_upper_index(self.d, i, j)),
            _ => None,
        }
    }

    /// Whether the feature is an off-diagonal pair, i.e. a graph edge.
    pub fn is_edge(&self, index: usize) -> bool {
        matches!(self.edge(index), Some((i, j)) if i != j)
    }
}

fn upper_index(d: usize, i: usize, j: usize) -> usize {
    // rows 0..i hold d, d-1, ..., d-i+1 entries
    i * d - i * i.saturating_sub(1) / 2 + (j - i)
}

fn strict_upper_index(d: usize, i: usize, j: usize) -> usize {
    i * (d - 1) - i * i.saturating_sub(1) / 2 + (j - i - 1)
}

fn pair_from_index(d: usize, mut index: usize, with_diagonal: bool) -> (usize, usize) {
    for i in 0..d {
        let start = if with_diagonal { i } else { i + 1 };
        let len = d - start;
        if index < len {
            return (i, start + index);
        }
        index -= len;
    }
    unreachable!("index checked against k")
}
