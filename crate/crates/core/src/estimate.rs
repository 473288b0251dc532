//! End-to-end estimation of the differential parameter `α`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::condexp::{estimate_cond_exp, CondExpEstimate, CondExpMethod};
use crate::error::{Error, Result};
use crate::model::{BasisSpec, DiffParam, FeatureMap, TimeBasis, TimedDataset, WeightFunction};
use crate::objective::{build_from_features, closed_form_with_fallback, QuadraticObjective};
use crate::solver::{default_lambdas, lasso_minimize, sigma_scaled_lambda, LassoConfig};

/// How the lasso penalty is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum LambdaChoice {
    /// `√(2 ln p / n)` with `p` the number of coefficients.
    #[default]
    Auto,
    /// `2σ√(2 ln p / n)` with `σ²` the largest diagonal entry of the
    /// per-sample gradient covariance at zero.
    SigmaScaled,
    Fixed(f64),
}

impl std::str::FromStr for LambdaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "sigma" => Ok(Self::SigmaScaled),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x >= 0.0)
                .map(Self::Fixed)
                .ok_or_else(|| Error::InvalidInput(format!("lambda must be 'auto', 'sigma' or a non-negative number, got '{v}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub ridge: f64,
}

/// Fitted coefficients with the settings that produced them.
#[derive(Clone, Debug)]
pub struct DiffParamFit {
    pub diff_param: DiffParam,
    pub lambda: f64,
    pub lambda_rule: LambdaChoice,
    pub condexp: CondExpMethod,
    pub bandwidth: Option<f64>,
    pub n: usize,
    pub diagnostics: SolverDiagnostics,
}

/// Serializable view of a [`DiffParamFit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub basis: Option<BasisSpec>,
    pub basis_dim: usize,
    pub feature_dim: usize,
    /// `basis_dim` rows of `feature_dim` coefficients.
    pub alpha: Vec<Vec<f64>>,
    /// Flat coefficient indices (`feature * basis_dim + r`) that are nonzero.
    pub support: Vec<usize>,
    /// Features with at least one nonzero coefficient.
    pub feature_support: Vec<usize>,
    pub lambda: f64,
    pub lambda_rule: LambdaChoice,
    pub condexp: CondExpMethod,
    pub bandwidth: Option<f64>,
    pub n: usize,
    pub diagnostics: SolverDiagnostics,
}

impl DiffParamFit {
    pub fn alpha_flat(&self) -> DVector<f64> {
        DVector::from_vec(self.diff_param.to_flat())
    }

    pub fn feature_support(&self) -> Vec<usize> {
        let a = &self.diff_param.alpha;
        (0..a.ncols()).filter(|&j| a.column(j).iter().any(|v| *v != 0.0)).collect()
    }

    pub fn summary(&self) -> FitSummary {
        let a = &self.diff_param.alpha;
        let flat = self.diff_param.to_flat();
        FitSummary {
            basis: self.diff_param.basis.spec(),
            basis_dim: a.nrows(),
            feature_dim: a.ncols(),
            alpha: (0..a.nrows()).map(|r| a.row(r).iter().copied().collect()).collect(),
            support: flat.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect(),
            feature_support: self.feature_support(),
            lambda: self.lambda,
            lambda_rule: self.lambda_rule,
            condexp: self.condexp,
            bandwidth: self.bandwidth,
            n: self.n,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// Objective and conditional-expectation estimate for a dataset.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub objective: QuadraticObjective,
    pub condexp: CondExpEstimate,
    pub basis: TimeBasis,
}

pub fn prepare(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    basis: &TimeBasis,
    weight: &WeightFunction,
    method: CondExpMethod,
) -> Result<Prepared> {
    let features = fmap.feature_matrix(dataset.observations())?;
    let condexp = estimate_cond_exp(dataset, &features, method)?;
    let rows = build_from_features(dataset, &features, &condexp.row_means(), basis, weight)?;
    Ok(Prepared { objective: rows.quadratic(), condexp, basis: basis.clone() })
}

/// Resolve a penalty rule to a number for an objective with `n` rows.
pub fn resolve_lambda(choice: LambdaChoice, obj: &QuadraticObjective) -> f64 {
    let n = obj.n().max(1);
    let p = obj.dim();
    match choice {
        LambdaChoice::Fixed(v) => v,
        LambdaChoice::Auto => default_lambdas(n, p, None).0,
        LambdaChoice::SigmaScaled => {
            let psg = obj.per_sample_gradients(&DVector::zeros(p));
            let sigma = if n >= 2 {
                let cov = crate::inference::empirical_gradient_covariance(&psg).unwrap_or_else(|_| DMatrix::zeros(p, p));
                cov.diagonal().iter().fold(0.0_f64, |m, v| m.max(*v)).sqrt()
            } else {
                0.0
            };
            sigma_scaled_lambda(n, p, sigma)
        }
    }
}

/// Fit on a prepared objective. `λ = 0` uses the closed form (with ridge
/// fallback); otherwise the lasso solver.
pub fn fit_prepared(prep: &Prepared, choice: LambdaChoice, solver: &LassoConfig) -> Result<DiffParamFit> {
    let obj = &prep.objective;
    let lambda = resolve_lambda(choice, obj);
    let (alpha, diagnostics) = if lambda == 0.0 {
        let (a, ridge) = closed_form_with_fallback(obj)?;
        let kkt = obj.gradient(&a).amax();
        (a, SolverDiagnostics { method: "closed_form".into(), iterations: 0, converged: true, kkt_residual: kkt, ridge })
    } else {
        let sol = lasso_minimize(obj, &LassoConfig { lambda, ..*solver })?;
        if !sol.converged {
            log::warn!("lasso stopped after {} iterations without converging", sol.iterations);
        }
        let diag = SolverDiagnostics {
            method: "lasso".into(),
            iterations: sol.iterations,
            converged: sol.converged,
            kkt_residual: sol.final_subgradient_gap,
            ridge: 0.0,
        };
        (sol.alpha(), diag)
    };
    let k = obj.dim() / prep.basis.dim();
    let diff_param = DiffParam::from_flat(alpha.as_slice(), prep.basis.clone(), k)?;
    Ok(DiffParamFit {
        diff_param,
        lambda,
        lambda_rule: choice,
        condexp: prep.condexp.method,
        bandwidth: prep.condexp.bandwidth,
        n: obj.n(),
        diagnostics,
    })
}

/// Estimate `α` for `dataset` in one call.
pub fn fit_diff_param(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    basis: &TimeBasis,
    weight: &WeightFunction,
    method: CondExpMethod,
    choice: LambdaChoice,
    solver: &LassoConfig,
) -> Result<DiffParamFit> {
    let prep = prepare(dataset, fmap, basis, weight, method)?;
    fit_prepared(&prep, choice, solver)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_parsing() {
        assert_eq!("auto".parse::<LambdaChoice>().unwrap(), LambdaChoice::Auto);
        assert_eq!("0.5".parse::<LambdaChoice>().unwrap(), LambdaChoice::Fixed(0.5));
        assert!("-1".parse::<LambdaChoice>().is_err());
        assert!("nan".parse::<LambdaChoice>().is_err());
    }

    #[test]
    fn huge_lambda_gives_zero_fit() {
        let ds = TimedDataset::paired(&[0.1, 0.3, 0.6, 0.9], vec![1.0, 0.5, -0.2, 0.3, 2.0, -1.0, 0.4, 0.4], 2, Some((0.0, 1.0))).unwrap();
        let fit = fit_diff_param(
            &ds,
            &FeatureMap::gaussian_pairwise(2),
            &TimeBasis::Linear,
            &WeightFunction::default(),
            CondExpMethod::default(),
            LambdaChoice::Fixed(1e6),
            &LassoConfig::default(),
        )
        .unwrap();
        assert!(fit.alpha_flat().iter().all(|v| *v == 0.0));
        assert!(fit.summary().support.is_empty());
    }
}
