//! Time-conditional expectation `E_{q_t}[f(x)]` for paired and grouped data.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Block, FeatureMap, TimedDataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CondExpMethod {
    /// Gaussian-kernel Nadaraya–Watson smoother. `bandwidth = None` uses
    /// [`silverman_bandwidth`].
    NadarayaWatson {
        bandwidth: Option<f64>,
        #[serde(default)]
        leave_one_out: bool,
    },
    /// Exact block means; grouped data only.
    GroupMean,
    /// Equal-width time bins over the unit domain, then block means.
    Binned { n_bins: usize },
}

impl Default for CondExpMethod {
    fn default() -> Self {
        CondExpMethod::NadarayaWatson { bandwidth: None, leave_one_out: false }
    }
}

/// Estimated conditional means aligned to the rows (paired) or blocks
/// (grouped / binned) they were computed over.
#[derive(Clone, Debug)]
pub struct CondExpEstimate {
    pub method: CondExpMethod,
    /// Bandwidth actually used by the kernel smoother.
    pub bandwidth: Option<f64>,
    pub means: DMatrix<f64>,
    row_to_mean: Vec<usize>,
}

impl CondExpEstimate {
    pub fn n_rows(&self) -> usize {
        self.row_to_mean.len()
    }

    /// Index into `means` for dataset row `i`.
    pub fn mean_index(&self, i: usize) -> usize {
        self.row_to_mean[i]
    }

    /// Conditional mean matrix expanded to one row per dataset row.
    pub fn row_means(&self) -> DMatrix<f64> {
        let k = self.means.ncols();
        DMatrix::from_fn(self.row_to_mean.len(), k, |i, j| self.means[(self.row_to_mean[i], j)])
    }
}

/// Rule-of-thumb bandwidth `1.06 · sd(t) · n^{-1/5}`.
pub fn silverman_bandwidth(times: &[f64]) -> f64 {
    let n = times.len() as f64;
    if times.len() < 2 {
        return 1.0;
    }
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd > 0.0 {
        1.06 * sd * n.powf(-0.2)
    } else {
        1.0
    }
}

/// Nadaraya–Watson estimate of the feature means at every row time.
///
/// Row `i` is `Σ_j K(t_j, t_i) f_j / Σ_j K(t_j, t_i)` with
/// `K(u, v) = exp(-(u - v)² / (2h²))`. Weights are computed relative to the
/// largest kernel value in the row so that tiny bandwidths do not underflow.
pub fn nw_cond_exp(features: &DMatrix<f64>, times: &[f64], bandwidth: f64, leave_one_out: bool) -> Result<DMatrix<f64>> {
    let n = features.nrows();
    let k = features.ncols();
    if n == 0 || times.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} feature rows for {} times", times.len())));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if leave_one_out && n < 2 {
        return Err(Error::InvalidInput("leave-one-out smoothing needs at least two rows".into()));
    }
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ti = times[i];
            let mut log_w: Vec<f64> = times.iter().map(|&tj| -(tj - ti).powi(2) * inv).collect();
            if leave_one_out {
                log_w[i] = f64::NEG_INFINITY;
            }
            let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut acc = vec![0.0; k];
            let mut total = 0.0;
            for (j, lw) in log_w.iter().enumerate() {
                let w = (lw - max).exp();
                if w == 0.0 {
                    continue;
                }
                total += w;
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += w * features[(j, c)];
                }
            }
            acc.iter_mut().for_each(|a| *a /= total);
            acc
        })
        .collect();
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

fn block_means(features: &DMatrix<f64>, blocks: &[Block]) -> DMatrix<f64> {
    let k = features.ncols();
    let mut means = DMatrix::zeros(blocks.len(), k);
    for (b, blk) in blocks.iter().enumerate() {
        let inv = 1.0 / blk.len() as f64;
        for i in blk.start..blk.end {
            for j in 0..k {
                means[(b, j)] += features[(i, j)];
            }
        }
        for j in 0..k {
            means[(b, j)] *= inv;
        }
    }
    means
}

/// Block means `(1/n_j) Σ_i f(x_ij)` of a grouped dataset, one row per block.
pub fn group_cond_exp(dataset: &TimedDataset, fmap: &FeatureMap) -> Result<DMatrix<f64>> {
    let blocks = dataset
        .blocks()
        .ok_or_else(|| Error::InvalidInput("group means need a grouped dataset".into()))?;
    let features = fmap.feature_matrix(dataset.observations())?;
    Ok(block_means(&features, blocks))
}

fn bin_index(t: f64, n_bins: usize) -> usize {
    ((t * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// Group a paired dataset into equal-width time bins on `[0, 1]`. Each
/// block is stamped with its bin midpoint; empty bins are dropped.
pub fn bin_paired(dataset: &TimedDataset, n_bins: usize) -> Result<TimedDataset> {
    if dataset.blocks().is_some() {
        return Err(Error::InvalidInput("binning expects a paired dataset".into()));
    }
    let n = dataset.n_rows();
    if n_bins == 0 || n_bins > n {
        return Err(Error::InvalidInput(format!("need 1 <= n_bins <= n, got n_bins={n_bins}, n={n}")));
    }
    // Paired rows are time-sorted, so bins occupy contiguous row ranges.
    let mut blocks: Vec<Block> = Vec::new();
    let mut times = Vec::with_capacity(n);
    for i in 0..n {
        let bin = bin_index(dataset.time(i), n_bins);
        let mid = (bin as f64 + 0.5) / n_bins as f64;
        match blocks.last_mut() {
            Some(last) if last.time == mid => last.end = i + 1,
            _ => blocks.push(Block { time: mid, start: i, end: i + 1 }),
        }
        times.push(mid);
    }
    Ok(TimedDataset::from_unit_parts(
        dataset.dim(),
        times,
        dataset.observations().to_vec(),
        Some(blocks),
        dataset.raw_domain(),
    ))
}

/// Dispatch on `method` given a precomputed feature matrix (one row per
/// dataset row).
pub fn estimate_cond_exp(dataset: &TimedDataset, features: &DMatrix<f64>, method: CondExpMethod) -> Result<CondExpEstimate> {
    let n = dataset.n_rows();
    if features.nrows() != n {
        return Err(Error::DimensionMismatch(format!("{} feature rows for {n} dataset rows", features.nrows())));
    }
    match method {
        CondExpMethod::NadarayaWatson { bandwidth, leave_one_out } => {
            let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(dataset.times()));
            let means = nw_cond_exp(features, dataset.times(), h, leave_one_out)?;
            Ok(CondExpEstimate { method, bandwidth: Some(h), means, row_to_mean: (0..n).collect() })
        }
        CondExpMethod::GroupMean => {
            let blocks = dataset
                .blocks()
                .ok_or_else(|| Error::InvalidInput("group means need a grouped dataset".into()))?;
            Ok(CondExpEstimate {
                method,
                bandwidth: None,
                means: block_means(features, blocks),
                row_to_mean: row_map(blocks, n),
            })
        }
        CondExpMethod::Binned { n_bins } => {
            let binned = bin_paired(dataset, n_bins)?;
            let blocks = binned.blocks().expect("binned data is grouped");
            Ok(CondExpEstimate {
                method,
                bandwidth: None,
                means: block_means(features, blocks),
                row_to_mean: row_map(blocks, n),
            })
        }
    }
}

fn row_map(blocks: &[Block], n: usize) -> Vec<usize> {
    let mut map = vec![0; n];
    for (b, blk) in blocks.iter().enumerate() {
        for m in &mut map[blk.start..blk.end] {
            *m = b;
        }
    }
    map
}

/// Default method for a dataset: block means for grouped data, kernel
/// smoothing with the rule-of-thumb bandwidth otherwise.
pub fn default_method(dataset: &TimedDataset) -> CondExpMethod {
    match dataset.layout() {
        crate::model::Layout::Grouped => CondExpMethod::GroupMean,
        crate::model::Layout::Paired => CondExpMethod::default(),
    }
}
