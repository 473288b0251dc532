//! K-fold grid search over smoothing bandwidth and penalty.
//!
//! Folds interleave rows in time order (paired data) or within each block
//! (grouped data), so every fold spans the whole time domain. A candidate
//! is scored by the unpenalized objective of its training-fold estimate,
//! evaluated on the held-out fold. The held-out objective always uses the
//! same conditional-mean estimate (block means for grouped data, the
//! rule-of-thumb smoother otherwise), so scores are comparable across
//! bandwidths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condexp::{default_method, CondExpMethod};
use crate::error::{Error, Result};
use crate::estimate::{fit_prepared, prepare, LambdaChoice, Prepared};
use crate::model::{FeatureMap, Layout, TimeBasis, TimedDataset, WeightFunction};
use crate::solver::LassoConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    /// Kernel bandwidths to try. Empty means the dataset's default method
    /// (and is the only option for grouped data).
    #[serde(default)]
    pub bandwidths: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub solver: LassoConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 5, bandwidths: Vec::new(), lambdas: vec![0.0], solver: LassoConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub bandwidth: Option<f64>,
    pub lambda: f64,
    pub mean_score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvResult {
    pub points: Vec<CvPoint>,
    pub best: usize,
}

impl CvResult {
    pub fn best_point(&self) -> &CvPoint {
        &self.points[self.best]
    }
}

/// Row indices of each fold.
pub fn fold_assignment(dataset: &TimedDataset, folds: usize) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    let mut out = vec![Vec::new(); folds];
    match dataset.blocks() {
        Some(blocks) => {
            if let Some(b) = blocks.iter().find(|b| b.len() < folds) {
                return Err(Error::InvalidInput(format!("a block with {} rows cannot be split into {folds} folds", b.len())));
            }
            for b in blocks {
                for (pos, i) in (b.start..b.end).enumerate() {
                    out[pos % folds].push(i);
                }
            }
        }
        None => {
            let n = dataset.n_rows();
            if n < 2 * folds {
                return Err(Error::InvalidInput(format!("{n} rows are too few for {folds} folds")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dataset.time(a).total_cmp(&dataset.time(b)));
            for (pos, i) in order.into_iter().enumerate() {
                out[pos % folds].push(i);
            }
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn method_for(dataset: &TimedDataset, bandwidth: Option<f64>) -> CondExpMethod {
    match (dataset.layout(), bandwidth) {
        (Layout::Paired, Some(h)) => CondExpMethod::NadarayaWatson { bandwidth: Some(h), leave_one_out: false },
        _ => default_method(dataset),
    }
}

pub fn cross_validate(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    basis: &TimeBasis,
    weight: &WeightFunction,
    cfg: &CvConfig,
) -> Result<CvResult> {
    if cfg.lambdas.is_empty() {
        return Err(Error::InvalidInput("empty penalty grid".into()));
    }
    if let Some(l) = cfg.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::InvalidInput(format!("invalid penalty {l}")));
    }
    if let Some(h) = cfg.bandwidths.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(Error::InvalidInput(format!("invalid bandwidth {h}")));
    }
    let folds = fold_assignment(dataset, cfg.folds)?;
    let n = dataset.n_rows();
    let bandwidths: Vec<Option<f64>> = match dataset.layout() {
        Layout::Paired if !cfg.bandwidths.is_empty() => cfg.bandwidths.iter().map(|h| Some(*h)).collect(),
        _ => vec![None],
    };

    let splits: Vec<(TimedDataset, Prepared)> = folds
        .par_iter()
        .map(|held| {
            let mut in_fold = vec![false; n];
            for &i in held {
                in_fold[i] = true;
            }
            let train_rows: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
            let train = dataset.select_rows(&train_rows)?;
            let valid = dataset.select_rows(held)?;
            let valid_prep = prepare(&valid, fmap, basis, weight, default_method(&valid))?;
            Ok((train, valid_prep))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> =
        (0..bandwidths.len()).flat_map(|b| (0..splits.len()).map(move |f| (b, f))).collect();
    // One training objective per (bandwidth, fold); every penalty reuses it.
    let scores: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(b, f)| {
            let (train, valid) = &splits[f];
            let prep = prepare(train, fmap, basis, weight, method_for(train, bandwidths[b]))?;
            cfg.lambdas
                .iter()
                .map(|&lambda| {
                    let fit = fit_prepared(&prep, LambdaChoice::Fixed(lambda), &cfg.solver)?;
                    Ok(valid.objective.value(&fit.alpha_flat()))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let k = splits.len();
    let mut points = Vec::with_capacity(bandwidths.len() * cfg.lambdas.len());
    for (b, h) in bandwidths.iter().enumerate() {
        for (l, &lambda) in cfg.lambdas.iter().enumerate() {
            let fold_scores: Vec<f64> = (0..k).map(|f| scores[b * k + f][l]).collect();
            let mean_score = fold_scores.iter().sum::<f64>() / k as f64;
            points.push(CvPoint { bandwidth: *h, lambda, mean_score, fold_scores });
        }
    }
    let best = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.mean_score.is_finite())
        .min_by(|a, b| a.1.mean_score.total_cmp(&b.1.mean_score))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("no finite validation score".into()))?;
    Ok(CvResult { points, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::simulate::{gaussian_oracle_family, sample_ggm_path, Curve, GaussianOracle, OracleKind, PrecisionPath, SampleLayout};

    #[test]
    fn folds_partition_rows_and_span_time() {
        let mut rng = rng_from_seed(3);
        let path = PrecisionPath::random_linear(4, &mut rng).unwrap();
        let ds = sample_ggm_path(&path, SampleLayout::Paired { n: 103 }, &mut rng).unwrap();
        let folds = fold_assignment(&ds, 5).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for f in &folds {
            let lo = f.iter().map(|&i| ds.time(i)).fold(f64::INFINITY, f64::min);
            let hi = f.iter().map(|&i| ds.time(i)).fold(f64::NEG_INFINITY, f64::max);
            assert!(lo < 0.1 && hi > 0.9);
        }
    }

    #[test]
    fn grouped_folds_stay_balanced_within_blocks() {
        let mut rng = rng_from_seed(4);
        let path = PrecisionPath::random_linear(3, &mut rng).unwrap();
        let ds = sample_ggm_path(&path, SampleLayout::Grouped { m: 6, n_per: 10 }, &mut rng).unwrap();
        let folds = fold_assignment(&ds, 5).unwrap();
        for f in &folds {
            assert_eq!(f.len(), 12);
            assert_eq!(ds.select_rows(f).unwrap().n_blocks(), 6);
        }
        assert!(fold_assignment(&ds, 11).is_err());
        assert!(fold_assignment(&ds, 1).is_err());
    }

    #[test]
    fn huge_penalty_loses_to_moderate_penalty() {
        let mut rng = rng_from_seed(5);
        let oracle = gaussian_oracle_family(OracleKind::TimeMeanFixedVar, Curve::Affine { a: 0.0, b: 3.0 }, Curve::constant(1.0))
            .unwrap();
        let ds = oracle.sample_paired(2000, &mut rng).unwrap();
        let cfg = CvConfig { folds: 4, bandwidths: vec![0.05, 0.2], lambdas: vec![0.01, 1e3], ..Default::default() };
        let res = cross_validate(&ds, &GaussianOracle::feature_map(), &TimeBasis::Linear, &WeightFunction::default(), &cfg)
            .unwrap();
        assert_eq!(res.points.len(), 4);
        let best = res.best_point();
        assert_eq!(best.lambda, 0.01);
        assert_eq!(best.bandwidth, Some(0.05));
        // A zero estimate scores exactly zero on any validation objective.
        for p in res.points.iter().filter(|p| p.lambda == 1e3) {
            assert!(p.fold_scores.iter().all(|s| *s == 0.0));
        }
        assert!(best.mean_score < 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut rng = rng_from_seed(6);
        let path = PrecisionPath::random_linear(3, &mut rng).unwrap();
        let ds = sample_ggm_path(&path, SampleLayout::Paired { n: 100 }, &mut rng).unwrap();
        let f = FeatureMap::gaussian_pairwise(3);
        let w = WeightFunction::default();
        let bad = |cfg: CvConfig| cross_validate(&ds, &f, &TimeBasis::Linear, &w, &cfg).is_err();
        assert!(bad(CvConfig { lambdas: vec![], ..Default::default() }));
        assert!(bad(CvConfig { lambdas: vec![-1.0], ..Default::default() }));
        assert!(bad(CvConfig { bandwidths: vec![0.0], ..Default::default() }));
    }
}
