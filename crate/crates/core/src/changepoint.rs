//! Pointwise null distribution of `∂tθ̂(t)` and threshold-based detection
//! of change periods.
//!
//! Under `∂tθ* ≡ 0` the per-row gradient of the loss at the truth is
//! `2(g'ψ + gψ') ⊗ f` and its Hessian is `2g (ψψᵀ) ⊗ (f − f̄)(f − f̄)ᵀ`.
//! Summing block moments gives
//!
//! ```text
//! Σ_A = Σ_j (n_j / n̄) Ê_j[∇²m],   Σ_B = Σ_j (n_j / n̄) V̂ar_j[∇m],
//! (block variances use the unbiased `1/(n_j − 1)` normalization)
//! Cov(α̂) ≈ Σ_A⁻¹ Σ_B Σ_A⁻¹ / n̄,
//! ```
//!
//! with `n̄` the mean block size, and `Cov(∂tθ̂(t)) = Dᵀ Cov(α̂) D` where `D`
//! places `ψ(t)` in the block of each feature.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condexp::{bin_paired, CondExpMethod};
use crate::error::{Error, Result};
use crate::estimate::{fit_prepared, prepare, DiffParamFit, LambdaChoice, Prepared};
use crate::linalg;
use crate::model::{FeatureMap, Layout, TimeBasis, TimedDataset, WeightFunction};
use crate::objective::build_from_features;
use crate::solver::LassoConfig;

pub const DEFAULT_GRID_POINTS: usize = 200;
pub const DEFAULT_EPS_SP: f64 = 0.01;
pub const DEFAULT_EPS_PP: f64 = 0.02;
pub const DEFAULT_BINS: usize = 20;

#[derive(Clone, Debug)]
pub struct NullCovariance {
    pub sigma_a: DMatrix<f64>,
    pub sigma_b: DMatrix<f64>,
    /// `Σ_A⁻¹ Σ_B Σ_A⁻¹ / n̄`.
    pub cov_alpha: DMatrix<f64>,
    pub n_bar: f64,
    /// Ridge added to `Σ_A` (zero unless it was singular).
    pub ridge: f64,
    basis: TimeBasis,
    k: usize,
}

impl NullCovariance {
    pub fn feature_dim(&self) -> usize {
        self.k
    }

    /// `p × k` matrix with `ψ(t)` in rows `j·b .. (j+1)·b` of column `j`.
    pub fn projector(&self, t: f64) -> DMatrix<f64> {
        let b = self.basis.dim();
        let psi = self.basis.dphi(t);
        let mut d = DMatrix::zeros(b * self.k, self.k);
        for j in 0..self.k {
            for r in 0..b {
                d[(j * b + r, j)] = psi[r];
            }
        }
        d
    }

    /// `k × k` covariance of `∂tθ̂(t)` under the null.
    pub fn theta_dot_covariance(&self, t: f64) -> DMatrix<f64> {
        let d = self.projector(t);
        let mut s = d.transpose() * &self.cov_alpha * d;
        linalg::symmetrize(&mut s);
        s
    }

    pub fn standard_errors(&self, t: f64) -> Vec<f64> {
        self.theta_dot_covariance(t).diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Plug-in null covariance from a grouped dataset (every block needs at
/// least two rows).
pub fn null_covariance(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    basis: &TimeBasis,
    weight: &WeightFunction,
    condexp: &crate::condexp::CondExpEstimate,
) -> Result<NullCovariance> {
    let blocks = dataset
        .blocks()
        .ok_or_else(|| Error::InvalidInput("null covariance needs grouped (or binned) data".into()))?;
    if let Some(b) = blocks.iter().find(|b| b.len() < 2) {
        return Err(Error::InvalidInput(format!("block at t = {} has fewer than 2 samples", b.time)));
    }
    let features = fmap.feature_matrix(dataset.observations())?;
    let rows = build_from_features(dataset, &features, &condexp.row_means(), basis, weight)?;
    let z = rows.design();
    let l = rows.linear_terms();
    let g = rows.g();
    let p = rows.dim();
    let n_bar = dataset.n_rows() as f64 / blocks.len() as f64;

    let parts: Vec<(DMatrix<f64>, DMatrix<f64>)> = blocks
        .par_iter()
        .map(|blk| {
            let nj = blk.len() as f64;
            let mut a = DMatrix::zeros(p, p);
            let mut mean = DVector::zeros(p);
            for i in blk.start..blk.end {
                let zi = z.row(i).transpose();
                a.ger(2.0 * g[i], &zi, &zi, 1.0);
                mean += 2.0 * l.row(i).transpose();
            }
            mean /= nj;
            let mut var = DMatrix::zeros(p, p);
            for i in blk.start..blk.end {
                let c = 2.0 * l.row(i).transpose() - &mean;
                var.ger(1.0, &c, &c, 1.0);
            }
            // (n_j / n̄) times the block mean of the Hessian and the unbiased
            // block variance of the gradient.
            (a / n_bar, var * (nj / (nj - 1.0)) / n_bar)
        })
        .collect();
    let mut sigma_a = DMatrix::zeros(p, p);
    let mut sigma_b = DMatrix::zeros(p, p);
    for (a, b) in parts {
        sigma_a += a;
        sigma_b += b;
    }
    linalg::symmetrize(&mut sigma_a);
    linalg::symmetrize(&mut sigma_b);

    let fallback = 1e-8 * linalg::trace(&sigma_a).max(f64::MIN_POSITIVE) / p as f64;
    let (inv, ridge) = linalg::spd_inverse_with_fallback(&sigma_a, fallback)?;
    if ridge > 0.0 {
        log::warn!("Σ_A is singular; added ridge {ridge:e}");
    }
    let mut cov_alpha = &inv * &sigma_b * &inv / n_bar;
    linalg::symmetrize(&mut cov_alpha);
    Ok(NullCovariance { sigma_a, sigma_b, cov_alpha, n_bar, ridge, basis: basis.clone(), k: fmap.dim() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    /// Coordinate with the largest statistic inside the interval.
    pub peak_coordinate: usize,
    pub peak_time: f64,
    pub peak_stat: f64,
    /// Sign of `∂tθ̂` for the peak coordinate at the peak time.
    pub sign: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub times: Vec<f64>,
    /// `∂tθ̂(t)` per grid point.
    pub estimates: Vec<Vec<f64>>,
    /// `|∂tθ̂_j(t)| / se_j(t)` per grid point.
    pub stats: Vec<Vec<f64>>,
    pub delta: f64,
    pub threshold: f64,
    pub eps_sp: f64,
    pub eps_pp: f64,
    pub raw_intervals: Vec<Interval>,
    pub filtered_intervals: Vec<Interval>,
}

impl ChangeReport {
    /// CSV with header `t,stat_1,...,stat_k`.
    pub fn write_stat_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let k = self.stats.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|j| format!("stat_{j}")));
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.stats) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    }
}

/// Maximal runs of consecutive grid points where `flags` is set.
fn runs(times: &[f64], stats: &[Vec<f64>], estimates: &[Vec<f64>], threshold: f64) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut current: Option<Interval> = None;
    for (g, (&t, row)) in times.iter().zip(stats).enumerate() {
        let (peak_j, peak) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if peak > threshold {
            let candidate = Interval {
                start: t,
                end: t,
                peak_coordinate: peak_j,
                peak_time: t,
                peak_stat: peak,
                sign: estimates[g][peak_j].signum(),
            };
            current = Some(match current {
                None => candidate,
                Some(mut iv) => {
                    iv.end = t;
                    if peak > iv.peak_stat {
                        iv.peak_coordinate = peak_j;
                        iv.peak_time = t;
                        iv.peak_stat = peak;
                        iv.sign = candidate.sign;
                    }
                    iv
                }
            });
        } else if let Some(iv) = current.take() {
            out.push(iv);
        }
    }
    out.extend(current);
    out
}

/// Drop intervals with `end − start < eps_sp`, then merge neighbours whose
/// gap is below `eps_pp`. Applying this twice changes nothing.
pub fn filter_intervals(raw: &[Interval], eps_sp: f64, eps_pp: f64) -> Vec<Interval> {
    let mut kept: Vec<Interval> = raw.iter().copied().filter(|iv| iv.width() >= eps_sp).collect();
    kept.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut merged: Vec<Interval> = Vec::with_capacity(kept.len());
    for iv in kept {
        match merged.last_mut() {
            Some(last) if iv.start - last.end < eps_pp => {
                last.end = last.end.max(iv.end);
                if iv.peak_stat > last.peak_stat {
                    last.peak_coordinate = iv.peak_coordinate;
                    last.peak_time = iv.peak_time;
                    last.peak_stat = iv.peak_stat;
                    last.sign = iv.sign;
                }
            }
            _ => merged.push(iv),
        }
    }
    merged
}

/// Threshold `|∂tθ̂_j(t)| / se_j(t)` at `z_{1−δ/2}` on `grid`.
pub fn detect_changes(
    fit: &DiffParamFit,
    nullcov: &NullCovariance,
    grid: &[f64],
    delta: f64,
    eps_sp: f64,
    eps_pp: f64,
) -> Result<ChangeReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if eps_sp < 0.0 || eps_pp < 0.0 {
        return Err(Error::InvalidInput("interval tolerances must be non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidInput("grid must be sorted inside [0, 1]".into()));
    }
    if fit.diff_param.feature_dim() != nullcov.feature_dim() {
        return Err(Error::DimensionMismatch("fit and null covariance differ in feature dimension".into()));
    }
    let threshold = linalg::normal_two_sided_quantile(delta);
    let (estimates, stats): (Vec<Vec<f64>>, Vec<Vec<f64>>) = grid
        .par_iter()
        .map(|&t| {
            let est: Vec<f64> = fit.diff_param.evaluate(t).iter().copied().collect();
            let se = nullcov.standard_errors(t);
            let stat = est.iter().zip(&se).map(|(e, s)| if *s > 0.0 { e.abs() / s } else { 0.0 }).collect();
            (est, stat)
        })
        .unzip();
    let raw_intervals = runs(grid, &stats, &estimates, threshold);
    let filtered_intervals = filter_intervals(&raw_intervals, eps_sp, eps_pp);
    Ok(ChangeReport {
        times: grid.to_vec(),
        estimates,
        stats,
        delta,
        threshold,
        eps_sp,
        eps_pp,
        raw_intervals,
        filtered_intervals,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangepointConfig {
    pub basis: crate::model::BasisSpec,
    /// Bins used when the input is paired.
    pub bins: usize,
    pub lambda: LambdaChoice,
    pub grid_points: usize,
    pub delta: f64,
    pub eps_sp: f64,
    pub eps_pp: f64,
}

impl Default for ChangepointConfig {
    fn default() -> Self {
        Self {
            basis: crate::model::BasisSpec::Fourier { b: 4 },
            bins: DEFAULT_BINS,
            lambda: LambdaChoice::Fixed(0.0),
            grid_points: DEFAULT_GRID_POINTS,
            delta: 0.05,
            eps_sp: DEFAULT_EPS_SP,
            eps_pp: DEFAULT_EPS_PP,
        }
    }
}

/// Grouped view of the data: paired input is binned.
pub fn grouped_view(dataset: &TimedDataset, bins: usize) -> Result<TimedDataset> {
    match dataset.layout() {
        Layout::Grouped => Ok(dataset.clone()),
        Layout::Paired => bin_paired(dataset, bins),
    }
}

/// Fit with block means, estimate the null covariance and detect.
pub fn run_changepoint(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    weight: &WeightFunction,
    cfg: &ChangepointConfig,
) -> Result<(DiffParamFit, ChangeReport)> {
    let grouped = grouped_view(dataset, cfg.bins)?;
    let basis = cfg.basis.build()?;
    let prep: Prepared = prepare(&grouped, fmap, &basis, weight, CondExpMethod::GroupMean)?;
    let fit = fit_prepared(&prep, cfg.lambda, &LassoConfig::default())?;
    let nullcov = null_covariance(&grouped, fmap, &basis, weight, &prep.condexp)?;
    let report = detect_changes(&fit, &nullcov, &uniform_grid(cfg.grid_points), cfg.delta, cfg.eps_sp, cfg.eps_pp)?;
    Ok((fit, report))
}
