//! Sample time-score-matching objective.
//!
//! For a basis `φ` with `ψ = ∂tφ`, every data row `i` contributes
//!
//! ```text
//! m_i(α) = g_i ⟨α, z_i⟩² + 2 ⟨α, l_i⟩,
//! z_i = ψ(t_i) ⊗ (f(x_i) − Ê_{t_i} f),   l_i = (g'_i ψ(t_i) + g_i ψ'(t_i)) ⊗ f(x_i),
//! ```
//!
//! with `α` flattened feature-major (index `j * b + r`). The objective is
//! `Σ_i w_i m_i(α) = αᵀHα + 2cᵀα` with `H = Σ w_i g_i z_i z_iᵀ` and
//! `c = Σ w_i l_i`. Paired rows get `w_i = 1/n`; grouped rows get
//! `w_i = 1/(m n_j)` so each block is averaged before the blocks are.
//! The additive constant that does not depend on `α` is never computed.

use nalgebra::{DMatrix, DVector};

use crate::condexp::CondExpEstimate;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{FeatureMap, TimeBasis, TimedDataset, WeightFunction};

/// Row-level representation of the objective for an arbitrary basis. Value,
/// gradient and Hessian-vector products are computed without forming `H`.
#[derive(Clone, Debug)]
pub struct GeneralObjective {
    design: DMatrix<f64>,
    linear: DMatrix<f64>,
    g: Vec<f64>,
    dg: Vec<f64>,
    weights: Vec<f64>,
    basis_dim: usize,
    feature_dim: usize,
}

/// Materialized quadratic form `αᵀHα + 2cᵀα`; the Hessian is `2H`.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    rows: GeneralObjective,
}

/// Per-row gradients `∇_α m_i(α)`, scaled so that their column means equal
/// the objective gradient.
#[derive(Clone, Debug)]
pub struct PerSampleGradientMatrix {
    pub rows: DMatrix<f64>,
}

fn row_weights(dataset: &TimedDataset) -> Vec<f64> {
    let n = dataset.n_rows();
    match dataset.blocks() {
        None => vec![1.0 / n as f64; n],
        Some(blocks) => {
            let m = blocks.len() as f64;
            let mut w = vec![0.0; n];
            for b in blocks {
                let wi = 1.0 / (m * b.len() as f64);
                w[b.start..b.end].iter_mut().for_each(|x| *x = wi);
            }
            w
        }
    }
}

/// Assemble the objective from a feature matrix and matching per-row
/// conditional means.
pub fn build_from_features(
    dataset: &TimedDataset,
    features: &DMatrix<f64>,
    row_means: &DMatrix<f64>,
    basis: &TimeBasis,
    weight: &WeightFunction,
) -> Result<GeneralObjective> {
    let n = dataset.n_rows();
    let k = features.ncols();
    if features.nrows() != n || row_means.shape() != features.shape() {
        return Err(Error::DimensionMismatch(format!(
            "features {:?} and conditional means {:?} for {n} rows",
            features.shape(),
            row_means.shape()
        )));
    }
    let b = basis.dim();
    let p = b * k;
    let mut design = DMatrix::zeros(n, p);
    let mut linear = DMatrix::zeros(n, p);
    let mut g = Vec::with_capacity(n);
    let mut dg = Vec::with_capacity(n);
    let mut psi = vec![0.0; b];
    let mut dpsi = vec![0.0; b];
    for i in 0..n {
        let t = dataset.time(i);
        let (gi, dgi) = weight.eval(t);
        basis.dphi_into(t, &mut psi);
        basis.d2phi_into(t, &mut dpsi);
        for j in 0..k {
            let centered = features[(i, j)] - row_means[(i, j)];
            let f = features[(i, j)];
            for r in 0..b {
                design[(i, j * b + r)] = psi[r] * centered;
                linear[(i, j * b + r)] = (dgi * psi[r] + gi * dpsi[r]) * f;
            }
        }
        g.push(gi);
        dg.push(dgi);
    }
    Ok(GeneralObjective { design, linear, g, dg, weights: row_weights(dataset), basis_dim: b, feature_dim: k })
}

fn check_condexp(dataset: &TimedDataset, condexp: &CondExpEstimate) -> Result<()> {
    if condexp.n_rows() != dataset.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "conditional expectation covers {} rows, dataset has {}",
            condexp.n_rows(),
            dataset.n_rows()
        )));
    }
    Ok(())
}

/// Quadratic objective for the linear basis `φ(t) = t`.
pub fn build_objective(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    weight: &WeightFunction,
    condexp: &CondExpEstimate,
) -> Result<QuadraticObjective> {
    check_condexp(dataset, condexp)?;
    let features = fmap.feature_matrix(dataset.observations())?;
    if condexp.means.ncols() != features.ncols() {
        return Err(Error::DimensionMismatch("conditional means and features differ in width".into()));
    }
    let rows = build_from_features(dataset, &features, &condexp.row_means(), &TimeBasis::Linear, weight)?;
    Ok(rows.quadratic())
}

/// Objective over `α ∈ R^{b×k}` for an arbitrary basis, including the
/// second-derivative term `2 g ⟨∂t²θ, f⟩`.
pub fn build_objective_general(
    dataset: &TimedDataset,
    fmap: &FeatureMap,
    basis: &TimeBasis,
    weight: &WeightFunction,
    condexp: &CondExpEstimate,
) -> Result<GeneralObjective> {
    check_condexp(dataset, condexp)?;
    let features = fmap.feature_matrix(dataset.observations())?;
    build_from_features(dataset, &features, &condexp.row_means(), basis, weight)
}

impl GeneralObjective {
    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn basis_dim(&self) -> usize {
        self.basis_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Rows `z_i`; for the linear basis these are the centered features.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Rows `l_i` of the linear term.
    pub fn linear_terms(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn dg(&self) -> &[f64] {
        &self.dg
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn linear_coefficient(&self) -> DVector<f64> {
        self.linear.tr_mul(&DVector::from_column_slice(&self.weights))
    }

    fn scores(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.design * alpha
    }

    pub fn value(&self, alpha: &DVector<f64>) -> f64 {
        let s = self.scores(alpha);
        let quad: f64 = (0..s.len()).map(|i| self.weights[i] * self.g[i] * s[i] * s[i]).sum();
        quad + 2.0 * self.linear_coefficient().dot(alpha)
    }

    pub fn gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let s = self.scores(alpha);
        let ws = DVector::from_fn(s.len(), |i, _| 2.0 * self.weights[i] * self.g[i] * s[i]);
        self.design.tr_mul(&ws) + 2.0 * self.linear_coefficient()
    }

    pub fn hessian_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        let s = &self.design * v;
        let ws = DVector::from_fn(s.len(), |i, _| 2.0 * self.weights[i] * self.g[i] * s[i]);
        self.design.tr_mul(&ws)
    }

    pub fn quadratic(self) -> QuadraticObjective {
        let wg: Vec<f64> = self.weights.iter().zip(&self.g).map(|(w, g)| w * g).collect();
        let h = linalg::weighted_gram(&self.design, &wg);
        let c = self.linear_coefficient();
        QuadraticObjective { h, c, rows: self }
    }

    /// Row `i` is `n w_i (2 g_i z_i z_iᵀα + 2 l_i)`.
    pub fn per_sample_gradients(&self, alpha: &DVector<f64>) -> PerSampleGradientMatrix {
        let n = self.n_rows() as f64;
        let s = self.scores(alpha);
        let mut rows = self.linear.clone() * 2.0;
        for i in 0..self.n_rows() {
            let coef = 2.0 * self.g[i] * s[i];
            let scale = n * self.weights[i];
            for j in 0..rows.ncols() {
                rows[(i, j)] = scale * (rows[(i, j)] + coef * self.design[(i, j)]);
            }
        }
        PerSampleGradientMatrix { rows }
    }
}

impl QuadraticObjective {
    /// Build directly from `H` and `c` without row data (used by tests and
    /// by callers that already hold the quadratic form).
    pub fn from_parts(h: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let p = c.len();
        if h.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!("H is {:?}, c has length {p}", h.shape())));
        }
        let rows = GeneralObjective {
            design: DMatrix::zeros(0, p),
            linear: DMatrix::zeros(0, p),
            g: Vec::new(),
            dg: Vec::new(),
            weights: Vec::new(),
            basis_dim: 1,
            feature_dim: p,
        };
        Ok(Self { h, c, rows })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn n(&self) -> usize {
        self.rows.n_rows()
    }

    pub fn rows(&self) -> &GeneralObjective {
        &self.rows
    }

    pub fn value(&self, alpha: &DVector<f64>) -> f64 {
        alpha.dot(&(&self.h * alpha)) + 2.0 * self.c.dot(alpha)
    }

    pub fn gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.h * alpha + &self.c)
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        2.0 * &self.h
    }

    pub fn per_sample_gradients(&self, alpha: &DVector<f64>) -> PerSampleGradientMatrix {
        self.rows.per_sample_gradients(alpha)
    }

    /// Ridge used when the unregularized system is singular:
    /// `1e-10 · trace(H) / p`.
    pub fn default_ridge(&self) -> f64 {
        let p = self.dim().max(1) as f64;
        let tr = linalg::trace(&self.h);
        if tr > 0.0 {
            1e-10 * tr / p
        } else {
            1e-10
        }
    }
}

/// Minimizer `-(H + ridge·I)⁻¹ c` of `αᵀHα + 2cᵀα`.
pub fn closed_form_minimizer(obj: &QuadraticObjective, ridge: f64) -> Result<DVector<f64>> {
    if ridge < 0.0 {
        return Err(Error::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    let chol = linalg::cholesky_with_ridge(&obj.h, ridge)?;
    Ok(-chol.solve(&obj.c))
}

/// Closed-form minimizer, retrying with [`QuadraticObjective::default_ridge`]
/// when `H` is singular. Returns the solution and the ridge used.
pub fn closed_form_with_fallback(obj: &QuadraticObjective) -> Result<(DVector<f64>, f64)> {
    match closed_form_minimizer(obj, 0.0) {
        Ok(a) => Ok((a, 0.0)),
        Err(_) => {
            let ridge = obj.default_ridge();
            closed_form_minimizer(obj, ridge).map(|a| (a, ridge))
        }
    }
}

pub fn per_sample_gradients(obj: &QuadraticObjective, alpha: &DVector<f64>) -> PerSampleGradientMatrix {
    obj.per_sample_gradients(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condexp::{estimate_cond_exp, CondExpMethod};

    fn tiny_dataset() -> TimedDataset {
        TimedDataset::paired(&[0.0, 1.0], vec![1.0, 2.0, -1.0, 0.5], 2, Some((0.0, 1.0))).unwrap()
    }

    #[test]
    fn boundary_times_give_zero_quadratic() {
        let ds = tiny_dataset();
        let fm = FeatureMap::gaussian_pairwise(2);
        let feats = fm.feature_matrix(ds.observations()).unwrap();
        let ce = estimate_cond_exp(&ds, &feats, CondExpMethod::NadarayaWatson { bandwidth: Some(0.5), leave_one_out: false }).unwrap();
        let obj = build_objective(&ds, &fm, &WeightFunction::default(), &ce).unwrap();
        assert!(obj.h.iter().all(|v| *v == 0.0));
        // c = (1/n) Σ dg(t_i) f(x_i) with dg(0) = 1, dg(1) = -1
        for j in 0..fm.dim() {
            let expected = 0.5 * (feats[(0, j)] - feats[(1, j)]);
            assert!((obj.c[j] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_features_give_zero_h() {
        let fm = FeatureMap::custom("const", 1, 2, |_, out| {
            out[0] = 3.0;
            out[1] = -1.0;
        });
        let ds = TimedDataset::paired(&[0.1, 0.4, 0.8], vec![0.0, 1.0, 2.0], 1, Some((0.0, 1.0))).unwrap();
        let feats = fm.feature_matrix(ds.observations()).unwrap();
        let ce = estimate_cond_exp(&ds, &feats, CondExpMethod::default()).unwrap();
        let obj = build_objective(&ds, &fm, &WeightFunction::default(), &ce).unwrap();
        assert!(obj.h.amax() < 1e-14);
    }

    #[test]
    fn closed_form_simple_cases() {
        let obj = QuadraticObjective::from_parts(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert_eq!(closed_form_minimizer(&obj, 0.0).unwrap(), DVector::zeros(3));
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let obj = QuadraticObjective::from_parts(DMatrix::identity(3, 3), v.clone()).unwrap();
        assert_eq!(closed_form_minimizer(&obj, 0.0).unwrap(), -v);
    }

    #[test]
    fn singular_reported_then_ridge_fallback() {
        let obj = QuadraticObjective::from_parts(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(closed_form_minimizer(&obj, 0.0), Err(Error::Singular(_))));
        let (_, ridge) = closed_form_with_fallback(&obj).unwrap();
        assert!(ridge > 0.0);
    }

    #[test]
    fn zero_alpha_per_sample_rows() {
        let ds = TimedDataset::paired(&[0.2, 0.5, 0.9], vec![1.0, 2.0, 3.0], 1, Some((0.0, 1.0))).unwrap();
        let fm = FeatureMap::gaussian_pairwise(1);
        let feats = fm.feature_matrix(ds.observations()).unwrap();
        let ce = estimate_cond_exp(&ds, &feats, CondExpMethod::default()).unwrap();
        let obj = build_objective(&ds, &fm, &WeightFunction::default(), &ce).unwrap();
        let psg = obj.per_sample_gradients(&DVector::zeros(1));
        let w = WeightFunction::default();
        for i in 0..3 {
            let expected = 2.0 * w.dg(ds.time(i)) * feats[(i, 0)];
            assert!((psg.rows[(i, 0)] - expected).abs() < 1e-14);
        }
    }
}
