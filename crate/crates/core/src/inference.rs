//! Debiased-lasso inference on the coordinates of `α` (linear basis).
//!
//! Each target coordinate is corrected by one Newton step along a sparse
//! estimate of the corresponding inverse-Hessian column, then standardized
//! with a sandwich-type variance built from per-sample gradients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condexp::CondExpMethod;
use crate::error::{Error, Result};
use crate::estimate::{prepare, resolve_lambda, LambdaChoice};
use crate::linalg;
use crate::model::{FeatureMap, TimeBasis, TimedDataset, WeightFunction};
use crate::objective::{closed_form_with_fallback, PerSampleGradientMatrix, QuadraticObjective};
use crate::solver::{default_lambdas, lasso_minimize, solve_inverse_hessian_columns, LassoConfig};

/// Largest observation dimension for which all coordinates are tested by
/// default.
pub const DEFAULT_ALL_TARGETS_MAX_D: usize = 30;

const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    #[default]
    All,
    Indices(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    pub condexp: CondExpMethod,
    pub lambda_lasso: LambdaChoice,
    /// Penalty for the inverse-Hessian columns; `None` uses `√(ln k / n)`.
    pub lambda_j: Option<f64>,
    pub targets: Targets,
    pub delta: f64,
    pub solver: LassoConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            condexp: CondExpMethod::default(),
            lambda_lasso: LambdaChoice::Auto,
            lambda_j: None,
            targets: Targets::All,
            delta: 0.05,
            solver: LassoConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateResult {
    pub feature_index: usize,
    pub edge: Option<(usize, usize)>,
    pub alpha_hat: f64,
    pub alpha_tilde: f64,
    pub sigma_hat: f64,
    pub z: f64,
    pub ci: [f64; 2],
    pub reject: bool,
    pub sigma_clamped: bool,
    pub omega_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub n: usize,
    pub k: usize,
    pub lambda_lasso: f64,
    pub lambda_j: f64,
    pub delta: f64,
    pub z_critical: f64,
    pub condexp: CondExpMethod,
    pub bandwidth: Option<f64>,
    pub lasso_iterations: usize,
    pub lasso_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub metadata: RunMetadata,
    pub coordinates: Vec<CoordinateResult>,
    pub warnings: Vec<String>,
}

impl InferenceReport {
    pub fn coordinate(&self, feature_index: usize) -> Option<&CoordinateResult> {
        self.coordinates.iter().find(|c| c.feature_index == feature_index)
    }
}

/// One Newton step on coordinate `j`: `α̂_j − ω̃ᵀ∇L̂(α̂)`.
pub fn debias(alpha_hat: &DVector<f64>, omega_j: &DVector<f64>, grad_at_hat: &DVector<f64>, j: usize) -> f64 {
    alpha_hat[j] - omega_j.dot(grad_at_hat)
}

/// Centered covariance of the per-sample gradient rows with `1/n`
/// normalization.
pub fn empirical_gradient_covariance(psg: &PerSampleGradientMatrix) -> Result<DMatrix<f64>> {
    let rows = &psg.rows;
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("gradient covariance needs at least 2 rows, got {n}")));
    }
    let mean = rows.row_mean();
    let mut centered = rows.clone();
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    let mut cov = centered.tr_mul(&centered) / n as f64;
    linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// `√(ωᵀΣ̂ω)` and whether it had to be clamped at the floor.
pub fn sigma_hat(omega_j: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<(f64, bool)> {
    let q = omega_j.dot(&(sigma * omega_j));
    if q < -1e-10 * (1.0 + sigma.amax()) || !q.is_finite() {
        return Err(Error::InvalidInput(format!("gradient covariance gives a negative variance {q:e}")));
    }
    let s = q.max(0.0).sqrt();
    if s < SIGMA_FLOOR {
        Ok((SIGMA_FLOOR, true))
    } else {
        Ok((s, false))
    }
}

fn resolve_targets(targets: &Targets, fmap: &FeatureMap) -> Result<Vec<usize>> {
    let k = fmap.dim();
    match targets {
        Targets::All if fmap.input_dim() > DEFAULT_ALL_TARGETS_MAX_D => Err(Error::InvalidInput(format!(
            "d = {} exceeds {DEFAULT_ALL_TARGETS_MAX_D}; select targets explicitly",
            fmap.input_dim()
        ))),
        Targets::All => Ok((0..k).collect()),
        Targets::Indices(ix) => {
            if let Some(bad) = ix.iter().find(|&&j| j >= k) {
                return Err(Error::InvalidInput(format!("target {bad} out of range for k = {k}")));
            }
            Ok(ix.clone())
        }
    }
}

/// Inverse-Hessian directions for `targets`. A zero penalty with an
/// invertible Hessian gives the exact columns of `(2H)⁻¹`.
fn inverse_hessian_directions(
    obj: &QuadraticObjective,
    targets: &[usize],
    lambda_j: f64,
    solver: &LassoConfig,
) -> Result<Vec<(DVector<f64>, bool)>> {
    if lambda_j == 0.0 {
        if let Ok(chol) = linalg::cholesky_with_ridge(&obj.h, 0.0) {
            return Ok(targets
                .iter()
                .map(|&j| {
                    let mut e = DVector::zeros(obj.dim());
                    e[j] = 0.5;
                    (chol.solve(&e), true)
                })
                .collect());
        }
    }
    Ok(solve_inverse_hessian_columns(obj, targets, lambda_j, solver)?
        .into_iter()
        .map(|s| {
            let conv = s.converged;
            (s.alpha(), conv)
        })
        .collect())
}

/// Debiased inference from an already assembled objective.
pub fn infer_from_objective(
    obj: &QuadraticObjective,
    fmap: &FeatureMap,
    cfg: &InferenceConfig,
    bandwidth: Option<f64>,
) -> Result<InferenceReport> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {}", cfg.delta)));
    }
    let targets = resolve_targets(&cfg.targets, fmap)?;
    let n = obj.n();
    let k = obj.dim();
    let mut warnings = Vec::new();

    let lambda_lasso = resolve_lambda(cfg.lambda_lasso, obj);
    let (alpha_hat, iterations, converged) = if lambda_lasso == 0.0 {
        let (a, ridge) = closed_form_with_fallback(obj)?;
        if ridge > 0.0 {
            warnings.push(format!("unpenalized fit needed ridge {ridge:e}"));
        }
        (a, 0, true)
    } else {
        let sol = lasso_minimize(obj, &LassoConfig { lambda: lambda_lasso, ..cfg.solver })?;
        if !sol.converged {
            warnings.push(format!("lasso did not converge in {} iterations", sol.iterations));
        }
        (sol.alpha(), sol.iterations, sol.converged)
    };
    let lambda_j = cfg.lambda_j.unwrap_or_else(|| default_lambdas(n, k, None).1);

    let grad = obj.gradient(&alpha_hat);
    let sigma = empirical_gradient_covariance(&obj.per_sample_gradients(&alpha_hat))?;
    let omegas = inverse_hessian_directions(obj, &targets, lambda_j, &cfg.solver)?;
    let zc = linalg::normal_two_sided_quantile(cfg.delta);
    let sqrt_n = (n as f64).sqrt();

    let coordinates: Vec<CoordinateResult> = targets
        .par_iter()
        .zip(omegas.par_iter())
        .map(|(&j, (omega, omega_converged))| {
            let alpha_tilde = debias(&alpha_hat, omega, &grad, j);
            let (s, clamped) = sigma_hat(omega, &sigma)?;
            let half = zc * s / sqrt_n;
            let ci = [alpha_tilde - half, alpha_tilde + half];
            Ok(CoordinateResult {
                feature_index: j,
                edge: fmap.edge(j),
                alpha_hat: alpha_hat[j],
                alpha_tilde,
                sigma_hat: s,
                z: sqrt_n * alpha_tilde / s,
                reject: !(ci[0] <= 0.0 && 0.0 <= ci[1]),
                ci,
                sigma_clamped: clamped,
                omega_converged: *omega_converged,
            })
        })
        .collect::<Result<_>>()?;

    for c in &coordinates {
        if c.sigma_clamped {
            warnings.push(format!("sigma_hat clamped for feature {}", c.feature_index));
        }
        if !c.omega_converged {
            warnings.push(format!("inverse-Hessian column {} did not converge", c.feature_index));
        }
    }

    Ok(InferenceReport {
        metadata: RunMetadata {
            n,
            k,
            lambda_lasso,
            lambda_j,
            delta: cfg.delta,
            z_critical: zc,
            condexp: cfg.condexp,
            bandwidth,
            lasso_iterations: iterations,
            lasso_converged: converged,
        },
        coordinates,
        warnings,
    })
}

/// Full pipeline: conditional expectation, objective, lasso, then per-target
/// debiasing, standard errors, intervals and tests.
pub fn run_pipeline(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    weight: &WeightFunction,
    cfg: &InferenceConfig,
) -> Result<InferenceReport> {
    let prep = prepare(dataset, fmap, &TimeBasis::Linear, weight, cfg.condexp)?;
    infer_from_objective(&prep.objective, fmap, cfg, prep.condexp.bandwidth)
}

/// `√n (α̃_j − α*_j) / σ̂_j` for each replication `(n, α̃_j, σ̂_j)`.
pub fn standardized_residuals(reps: &[(usize, f64, f64)], truth: f64) -> Vec<f64> {
    reps.iter().map(|&(n, a, s)| (n as f64).sqrt() * (a - truth) / s).collect()
}
