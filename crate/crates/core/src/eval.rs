//! Experiment harnesses: ROC/AUC for support recovery, interval coverage,
//! power curves and normality diagnostics.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condexp::CondExpMethod;
use crate::error::{Error, Result};
use crate::estimate::prepare;
use crate::inference::{run_pipeline, InferenceConfig, Targets};
use crate::linalg;
use crate::model::{FeatureMap, TimeBasis, TimedDataset, WeightFunction};
use crate::objective::QuadraticObjective;
use crate::rng::{split_rng, SimRng};
use crate::simulate::{sample_ggm_path, sample_truncated_ggm, PrecisionPath, SampleLayout};
use crate::solver::{default_lambdas, lasso_minimize, LassoConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Score threshold at each point; the first point (nothing selected) is
    /// `+∞`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// Threshold sweep from the highest score down. Equal scores enter
/// together as one step, which the trapezoid rule turns into half credit.
pub fn roc_from_scores(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput("labels need at least one positive and one negative".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    }
    let auc = fpr.windows(2).zip(tpr.windows(2)).map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0).sum();
    Ok(RocCurve { thresholds, fpr, tpr, auc })
}

/// `n_points` log-spaced penalties from `2‖c‖_∞` down to `1e-3` of it.
pub fn lambda_grid(obj: &QuadraticObjective, n_points: usize) -> Vec<f64> {
    let top = 2.0 * obj.c.amax();
    if n_points <= 1 || top == 0.0 {
        return vec![top];
    }
    let ratio = 1e-3_f64.powf(1.0 / (n_points - 1) as f64);
    (0..n_points).map(|i| top * ratio.powi(i as i32)).collect()
}

/// Score each coordinate by the largest penalty on `grid` at which its
/// lasso coefficient is nonzero (0 if it never enters). Every fit starts
/// from zero.
pub fn entry_time_scores(obj: &QuadraticObjective, grid: &[f64], solver: &LassoConfig) -> Result<Vec<f64>> {
    let fits: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&lambda| lasso_minimize(obj, &LassoConfig { lambda, ..*solver }).map(|s| s.alpha_hat))
        .collect::<Result<_>>()?;
    let mut scores = vec![0.0; obj.dim()];
    for (lambda, alpha) in grid.iter().zip(&fits) {
        for (s, a) in scores.iter_mut().zip(alpha) {
            if *a != 0.0 && *lambda > *s {
                *s = *lambda;
            }
        }
    }
    Ok(scores)
}

/// Which synthetic family an ROC run draws from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RocModel {
    /// Linear ramps (slope 0.45, Bernoulli(0.023) mask).
    LinearGgm,
    /// Sine changes (Bernoulli(0.02) mask).
    SineGgm,
    /// Positive-orthant truncation of a linear-ramp model with a denser
    /// mask.
    TruncatedGgm { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocConfig {
    pub model: RocModel,
    pub d: usize,
    pub n: usize,
    pub replications: usize,
    pub grid_points: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocRun {
    pub seed_index: usize,
    pub curve: RocCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub config: RocConfig,
    pub runs: Vec<RocRun>,
    pub mean_auc: f64,
    pub sd_auc: f64,
}

fn roc_path(model: RocModel, d: usize, rng: &mut SimRng) -> Result<PrecisionPath> {
    use crate::simulate::{ChangeKind, Theta0Style};
    match model {
        RocModel::LinearGgm => PrecisionPath::random_linear(d, rng),
        RocModel::SineGgm => PrecisionPath::random_sine(d, rng),
        RocModel::TruncatedGgm { p } => {
            PrecisionPath::random(d, Theta0Style::Estimation, ChangeKind::LinearRamp { slope: 0.45 }, p, rng)
        }
    }
}

/// Paths whose positive orthant is too rare to sample by rejection are
/// redrawn, up to [`TRUNCATED_PATH_ATTEMPTS`] times.
pub const TRUNCATED_PATH_ATTEMPTS: usize = 50;

fn truncated_draw(cfg: &RocConfig, rng: &mut SimRng) -> Result<(PrecisionPath, TimedDataset)> {
    let mut last = None;
    for _ in 0..TRUNCATED_PATH_ATTEMPTS {
        let path = roc_path(cfg.model, cfg.d, rng)?;
        match sample_truncated_ggm(&path, cfg.n, rng) {
            Ok(data) => return Ok((path, data)),
            Err(e @ Error::AcceptanceTooLow { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Off-diagonal features only: diagonal entries never change in these
/// models and are not edges.
fn edge_scores_and_labels(fmap: &FeatureMap, scores: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<bool>) {
    (0..fmap.dim())
        .filter(|&ix| fmap.is_edge(ix))
        .map(|ix| (scores[ix], mask[ix]))
        .unzip()
}

/// One ROC replication: simulate, build the linear-basis objective, score
/// edges by entry time along the penalty grid.
pub fn roc_replication(cfg: &RocConfig, index: usize) -> Result<RocCurve> {
    let mut rng = split_rng(cfg.seed, index as u64);
    let (path, data) = match cfg.model {
        RocModel::TruncatedGgm { .. } => truncated_draw(cfg, &mut rng)?,
        _ => {
            let path = roc_path(cfg.model, cfg.d, &mut rng)?;
            let data = sample_ggm_path(&path, SampleLayout::Paired { n: cfg.n }, &mut rng)?;
            (path, data)
        }
    };
    let fmap = FeatureMap::gaussian_pairwise(cfg.d);
    let prep = prepare(&data, &fmap, &TimeBasis::Linear, &WeightFunction::default(), CondExpMethod::default())?;
    let grid = lambda_grid(&prep.objective, cfg.grid_points);
    let scores = entry_time_scores(&prep.objective, &grid, &LassoConfig::default())?;
    let (s, l) = edge_scores_and_labels(&fmap, &scores, &path.feature_mask(&fmap));
    roc_from_scores(&s, &l)
}

pub fn roc_experiment(cfg: &RocConfig) -> Result<RocSummary> {
    if cfg.replications == 0 {
        return Err(Error::InvalidInput("replications must be positive".into()));
    }
    let runs: Vec<RocRun> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| roc_replication(cfg, i).map(|curve| RocRun { seed_index: i, curve }))
        .collect::<Result<_>>()?;
    let aucs: Vec<f64> = runs.iter().map(|r| r.curve.auc).collect();
    let (mean_auc, sd_auc) = mean_sd(&aucs);
    Ok(RocSummary { config: cfg.clone(), runs, mean_auc, sd_auc })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Gaussian inference settings with ramping edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InferenceSetting {
    /// First off-diagonal plus edges (0,2), (0,3), (0,4).
    Deterministic,
    /// Bernoulli(`p`) mask; edge (0,1) always ramps.
    Random { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub setting: InferenceSetting,
    pub d: usize,
    pub n: usize,
    pub replications: usize,
    pub delta: f64,
    /// Tested edge; defaults to `(0, 1)`.
    pub edge: (usize, usize),
    /// Use `λ_j = λ_lasso` for the inverse-Hessian columns instead of
    /// `√(ln k / n)`.
    pub lambda_j_equals_lasso: bool,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            setting: InferenceSetting::Deterministic,
            d: 20,
            n: 400,
            replications: 500,
            delta: 0.05,
            edge: (0, 1),
            lambda_j_equals_lasso: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub alpha_tilde: f64,
    pub sigma_hat: f64,
    pub truth: f64,
    pub covered: bool,
    pub reject: bool,
    pub standardized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub config: CoverageConfig,
    pub miss_rate: f64,
    pub rejection_rate: f64,
    pub outcomes: Vec<ReplicationOutcome>,
}

impl CoverageResult {
    pub fn standardized_residuals(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.standardized).collect()
    }
}

fn inference_path(setting: InferenceSetting, d: usize, rng: &mut SimRng) -> Result<PrecisionPath> {
    match setting {
        InferenceSetting::Deterministic => PrecisionPath::deterministic_inference(d, rng),
        InferenceSetting::Random { p } => PrecisionPath::random_inference(d, p, rng),
    }
}

/// Pipeline settings used by the coverage, power and normality harnesses.
pub fn harness_inference_config(n: usize, k: usize, target: usize, delta: f64, lambda_j_equals_lasso: bool) -> InferenceConfig {
    let (lasso, lj) = default_lambdas(n, k, None);
    InferenceConfig {
        lambda_j: Some(if lambda_j_equals_lasso { lasso } else { lj }),
        targets: Targets::Indices(vec![target]),
        delta,
        ..InferenceConfig::default()
    }
}

/// Run the pipeline on `dataset` for `target` and compare with `truth`.
pub fn evaluate_replication(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    cfg: &InferenceConfig,
    target: usize,
    truth: f64,
) -> Result<ReplicationOutcome> {
    let report = run_pipeline(dataset, fmap, &WeightFunction::default(), cfg)?;
    let c = report.coordinate(target).ok_or_else(|| Error::InvalidInput(format!("target {target} missing from report")))?;
    Ok(ReplicationOutcome {
        alpha_tilde: c.alpha_tilde,
        sigma_hat: c.sigma_hat,
        truth,
        covered: c.ci[0] <= truth && truth <= c.ci[1],
        reject: c.reject,
        standardized: (report.metadata.n as f64).sqrt() * (c.alpha_tilde - truth) / c.sigma_hat,
    })
}

/// Generic coverage loop: `generator(rng)` returns a dataset and the true
/// value of coordinate `target`.
pub fn coverage_with<G>(
    generator: G,
    fmap: &FeatureMap,
    cfg: &InferenceConfig,
    target: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<ReplicationOutcome>>
where
    G: Fn(&mut SimRng) -> Result<(TimedDataset, f64)> + Sync,
{
    if replications == 0 {
        return Err(Error::InvalidInput("replications must be positive".into()));
    }
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = split_rng(seed, r as u64);
            let (ds, truth) = generator(&mut rng)?;
            evaluate_replication(&ds, fmap, cfg, target, truth)
        })
        .collect()
}

/// Fraction of intervals that miss the true coefficient of `cfg.edge`.
pub fn coverage_experiment(cfg: &CoverageConfig) -> Result<CoverageResult> {
    let fmap = FeatureMap::gaussian_pairwise(cfg.d);
    let target = fmap
        .index_of(cfg.edge.0, cfg.edge.1)
        .ok_or_else(|| Error::InvalidInput(format!("edge {:?} out of range", cfg.edge)))?;
    let icfg = harness_inference_config(cfg.n, fmap.dim(), target, cfg.delta, cfg.lambda_j_equals_lasso);
    let outcomes = coverage_with(
        |rng| {
            let path = inference_path(cfg.setting, cfg.d, rng)?;
            let truth = path.feature_derivative(&fmap, 0.5)[target];
            let ds = sample_ggm_path(&path, SampleLayout::Paired { n: cfg.n }, rng)?;
            Ok((ds, truth))
        },
        &fmap,
        &icfg,
        target,
        cfg.replications,
        cfg.seed,
    )?;
    let r = outcomes.len() as f64;
    Ok(CoverageResult {
        config: cfg.clone(),
        miss_rate: outcomes.iter().filter(|o| !o.covered).count() as f64 / r,
        rejection_rate: outcomes.iter().filter(|o| o.reject).count() as f64 / r,
        outcomes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub effects: Vec<f64>,
    pub d: usize,
    pub n: usize,
    pub replications: usize,
    pub delta: f64,
    pub lambda_j_equals_lasso: bool,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            effects: (0..=10).map(|e| e as f64).collect(),
            d: 20,
            n: 400,
            replications: 200,
            delta: 0.05,
            lambda_j_equals_lasso: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub effect: f64,
    pub rejection_rate: f64,
}

/// Rejection rate of `H₀: ∂tΘ_{0,1} = 0` on the deterministic inference
/// path with edge (0,1) ramping at slope `effect`.
pub fn power_curve(cfg: &PowerConfig) -> Result<Vec<PowerPoint>> {
    if cfg.effects.is_empty() {
        return Err(Error::InvalidInput("effect grid is empty".into()));
    }
    let fmap = FeatureMap::gaussian_pairwise(cfg.d);
    let target = fmap.index_of(0, 1).expect("d >= 2");
    let icfg = harness_inference_config(cfg.n, fmap.dim(), target, cfg.delta, cfg.lambda_j_equals_lasso);
    cfg.effects
        .iter()
        .enumerate()
        .map(|(e_ix, &effect)| {
            let seed = cfg.seed.wrapping_add(e_ix as u64 * 0x9E37_79B9);
            let outcomes = coverage_with(
                |rng| {
                    let path = PrecisionPath::deterministic_inference(cfg.d, rng)?.with_edge_scale(0, 1, effect)?;
                    let ds = sample_ggm_path(&path, SampleLayout::Paired { n: cfg.n }, rng)?;
                    Ok((ds, 0.0))
                },
                &fmap,
                &icfg,
                target,
                cfg.replications,
                seed,
            )?;
            let rate = outcomes.iter().filter(|o| o.reject).count() as f64 / outcomes.len() as f64;
            Ok(PowerPoint { effect, rejection_rate: rate })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub ks_stat: f64,
    pub critical_value: f64,
    pub ks_pass_at_1pct: bool,
    /// `(theoretical normal quantile, sorted residual)` pairs.
    pub qq_points: Vec<(f64, f64)>,
}

/// Asymptotic 1% Kolmogorov–Smirnov constant.
pub const KS_CRITICAL_1PCT: f64 = 1.628;

pub fn ks_statistic_normal(sorted: &[f64]) -> f64 {
    let r = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = linalg::normal_cdf(x);
            ((i + 1) as f64 / r - f).max(f - i as f64 / r)
        })
        .fold(0.0, f64::max)
}

pub fn normality_check(residuals: &[f64]) -> Result<NormalityResult> {
    if residuals.len() < 50 {
        return Err(Error::InvalidInput(format!("normality check needs at least 50 residuals, got {}", residuals.len())));
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("residuals contain non-finite values".into()));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    let ks_stat = ks_statistic_normal(&sorted);
    let critical_value = KS_CRITICAL_1PCT / r.sqrt();
    let qq_points = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (linalg::normal_quantile((i as f64 + 0.5) / r), x))
        .collect();
    Ok(NormalityResult { ks_stat, critical_value, ks_pass_at_1pct: ks_stat < critical_value, qq_points })
}

/// Mean of `v` as a column vector, convenient for checks on replicated
/// gradients.
pub fn column_mean(rows: &[DVector<f64>]) -> DVector<f64> {
    let n = rows.len().max(1) as f64;
    rows.iter().fold(DVector::zeros(rows.first().map_or(0, |r| r.len())), |acc, r| acc + r) / n
}
