//! Time-varying precision matrices and Gaussian samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureKind, FeatureMap, TimedDataset};
use crate::rng::SimRng;

/// Number of equispaced times on `[0, 1]` at which positive definiteness is
/// checked when a path is built.
pub const PD_CHECK_POINTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChangeKind {
    /// `amp · sin(freq · t)`.
    Sine { amp: f64, freq: f64 },
    /// `slope · t`.
    LinearRamp { slope: f64 },
}

impl ChangeKind {
    pub fn sine() -> Self {
        ChangeKind::Sine { amp: 0.5, freq: 10.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ChangeKind::Sine { amp, freq } => amp * (freq * t).sin(),
            ChangeKind::LinearRamp { slope } => slope * t,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            ChangeKind::Sine { amp, freq } => amp * freq * (freq * t).cos(),
            ChangeKind::LinearRamp { slope } => slope,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta0Style {
    /// `A_ij ~ N(0,1)`, `AᵀA / d / 2` with zero diagonal, then diagonal 2.
    Estimation,
    /// `A_ij ~ U(0,1)`, `0.01 AᵀA` with diagonal replaced by 12.
    Inference,
}

/// Edge `(i, j)`, `i < j`, whose entry moves as `scale · change(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangingEdge {
    pub i: usize,
    pub j: usize,
    pub scale: f64,
}

/// `Θ(t) = Θ₀ + Θ′(t)` where `Θ′` is nonzero only on the changing edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPath {
    pub d: usize,
    pub theta0: DMatrix<f64>,
    pub change_kind: ChangeKind,
    pub edges: Vec<ChangingEdge>,
}

pub fn build_theta0(d: usize, style: Theta0Style, rng: &mut SimRng) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("dimension must be at least 2, got {d}")));
    }
    let mut theta = match style {
        Theta0Style::Estimation => {
            let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut m = a.tr_mul(&a) / (2.0 * d as f64);
            m.fill_diagonal(2.0);
            m
        }
        Theta0Style::Inference => {
            let u = Uniform::new(0.0, 1.0).expect("valid range");
            let a = DMatrix::from_fn(d, d, |_, _| u.sample(rng));
            let mut m = a.tr_mul(&a) * 0.01;
            m.fill_diagonal(12.0);
            m
        }
    };
    crate::linalg::symmetrize(&mut theta);
    Ok(theta)
}

impl PrecisionPath {
    /// Validates shape, symmetry and positive definiteness on the check grid.
    pub fn new(theta0: DMatrix<f64>, change_kind: ChangeKind, edges: Vec<ChangingEdge>) -> Result<Self> {
        let path = Self::new_unchecked(theta0, change_kind, edges)?;
        path.check_positive_definite()?;
        Ok(path)
    }

    /// Same as [`PrecisionPath::new`] without the definiteness check; used
    /// for coupling paths of binary models.
    pub fn new_unchecked(theta0: DMatrix<f64>, change_kind: ChangeKind, mut edges: Vec<ChangingEdge>) -> Result<Self> {
        let d = theta0.nrows();
        if theta0.ncols() != d {
            return Err(Error::DimensionMismatch(format!("theta0 is {:?}", theta0.shape())));
        }
        if !crate::linalg::is_symmetric(&theta0, 1e-12) {
            return Err(Error::InvalidInput("theta0 must be symmetric".into()));
        }
        for e in &mut edges {
            if e.i == e.j || e.i.max(e.j) >= d {
                return Err(Error::InvalidInput(format!("invalid changing edge ({}, {}) for d = {d}", e.i, e.j)));
            }
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if edges.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::InvalidInput("duplicate changing edge".into()));
        }
        Ok(Self { d, theta0, change_kind, edges })
    }

    pub fn check_positive_definite(&self) -> Result<()> {
        for g in 0..PD_CHECK_POINTS {
            let t = g as f64 / (PD_CHECK_POINTS - 1) as f64;
            if Cholesky::new(self.evaluate(t)).is_none() {
                return Err(Error::NotPositiveDefinite { time: t });
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, t: f64) -> DMatrix<f64> {
        let mut m = self.theta0.clone();
        let v = self.change_kind.value(t);
        for e in &self.edges {
            m[(e.i, e.j)] += e.scale * v;
            m[(e.j, e.i)] += e.scale * v;
        }
        m
    }

    /// `∂tΘ(t)`.
    pub fn derivative(&self, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        let v = self.change_kind.derivative(t);
        for e in &self.edges {
            m[(e.i, e.j)] = e.scale * v;
            m[(e.j, e.i)] = e.scale * v;
        }
        m
    }

    pub fn change_mask(&self) -> Vec<(usize, usize)> {
        self.edges.iter().filter(|e| e.scale != 0.0).map(|e| (e.i, e.j)).collect()
    }

    /// Feature-space labels: `true` where the coefficient of that feature
    /// moves in time.
    pub fn feature_mask(&self, fmap: &FeatureMap) -> Vec<bool> {
        let mut mask = vec![false; fmap.dim()];
        for (i, j) in self.change_mask() {
            if let Some(ix) = fmap.index_of(i, j) {
                mask[ix] = true;
            }
        }
        mask
    }

    /// Feature coefficients of `∂tΘ(t)`. For Gaussian pairwise features the
    /// natural parameter is `−Θ_ij` off the diagonal and `−Θ_ii / 2` on it;
    /// for binary pairwise features it is `Θ_ij`.
    pub fn feature_derivative(&self, fmap: &FeatureMap, t: f64) -> Vec<f64> {
        let dtheta = self.derivative(t);
        let mut out = vec![0.0; fmap.dim()];
        for (ix, v) in out.iter_mut().enumerate() {
            let (i, j) = fmap.edge(ix).expect("pairwise feature map");
            *v = match fmap.kind() {
                FeatureKind::IsingPairwise => dtheta[(i, j)],
                _ if i == j => -0.5 * dtheta[(i, i)],
                _ => -dtheta[(i, j)],
            };
        }
        out
    }

    /// Draws the changing edges independently with probability `p` from
    /// all pairs `i < j`, redrawing until at least one edge changes and at
    /// least one does not.
    pub fn random(
        d: usize,
        style: Theta0Style,
        change_kind: ChangeKind,
        p: f64,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let theta0 = build_theta0(d, style, rng)?;
        let pairs = d * (d - 1) / 2;
        if !(p > 0.0 && p < 1.0) || pairs < 2 {
            return Err(Error::InvalidInput(format!("edge probability {p} with d = {d} cannot give a mixed mask")));
        }
        loop {
            let mut edges = Vec::new();
            for i in 0..d {
                for j in (i + 1)..d {
                    if rng.random::<f64>() < p {
                        edges.push(ChangingEdge { i, j, scale: 1.0 });
                    }
                }
            }
            if !edges.is_empty() && edges.len() < pairs {
                return Self::new(theta0, change_kind, edges);
            }
        }
    }

    /// Sine changes (amplitude 0.5, frequency 10) on a Bernoulli(0.02) mask.
    pub fn random_sine(d: usize, rng: &mut SimRng) -> Result<Self> {
        Self::random(d, Theta0Style::Estimation, ChangeKind::sine(), 0.02, rng)
    }

    /// Linear ramps with slope 0.45 on a Bernoulli(0.023) mask.
    pub fn random_linear(d: usize, rng: &mut SimRng) -> Result<Self> {
        Self::random(d, Theta0Style::Estimation, ChangeKind::LinearRamp { slope: 0.45 }, 0.023, rng)
    }

    /// Unit-slope ramps on the first off-diagonal and on the edges from
    /// node 0 to nodes 2, 3 and 4.
    pub fn deterministic_inference(d: usize, rng: &mut SimRng) -> Result<Self> {
        if d < 5 {
            return Err(Error::InvalidInput(format!("deterministic inference path needs d >= 5, got {d}")));
        }
        let theta0 = build_theta0(d, Theta0Style::Inference, rng)?;
        let mut edges: Vec<ChangingEdge> = (0..d - 1).map(|i| ChangingEdge { i, j: i + 1, scale: 1.0 }).collect();
        edges.extend((2..5).map(|j| ChangingEdge { i: 0, j, scale: 1.0 }));
        Self::new(theta0, ChangeKind::LinearRamp { slope: 1.0 }, edges)
    }

    /// Unit-slope ramps on a Bernoulli(`p`) mask over all pairs except the
    /// edge of interest `(0, 1)`, which always changes.
    pub fn random_inference(d: usize, p: f64, rng: &mut SimRng) -> Result<Self> {
        let theta0 = build_theta0(d, Theta0Style::Inference, rng)?;
        let mut edges = vec![ChangingEdge { i: 0, j: 1, scale: 1.0 }];
        for i in 0..d {
            for j in (i + 1)..d {
                if (i, j) != (0, 1) && rng.random::<f64>() < p {
                    edges.push(ChangingEdge { i, j, scale: 1.0 });
                }
            }
        }
        Self::new(theta0, ChangeKind::LinearRamp { slope: 1.0 }, edges)
    }

    /// Returns a copy with edge `(i, j)` moving at `scale` (added if absent).
    pub fn with_edge_scale(&self, i: usize, j: usize, scale: f64) -> Result<Self> {
        let (i, j) = (i.min(j), i.max(j));
        let mut edges = self.edges.clone();
        match edges.iter_mut().find(|e| (e.i, e.j) == (i, j)) {
            Some(e) => e.scale = scale,
            None => edges.push(ChangingEdge { i, j, scale }),
        }
        Self::new(self.theta0.clone(), self.change_kind, edges)
    }
}

/// How sample times are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum SampleLayout {
    /// `n` samples at independent uniform times.
    Paired { n: usize },
    /// `m` blocks of `n_per` samples at times `(j + 0.5) / m`.
    Grouped { m: usize, n_per: usize },
}

fn factor_at(path: &PrecisionPath, t: f64) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(path.evaluate(t)).ok_or(Error::NotPositiveDefinite { time: t })
}

/// `x = L⁻ᵀ z` with `Θ = LLᵀ`, so `Cov(x) = Θ⁻¹`.
fn draw_gaussian(chol: &Cholesky<f64, Dyn>, d: usize, rng: &mut SimRng) -> DVector<f64> {
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    chol.l().transpose().solve_upper_triangular(&z).expect("Cholesky factor has positive diagonal")
}

/// Zero-mean Gaussian samples with precision `Θ(t)`.
pub fn sample_ggm_path(path: &PrecisionPath, layout: SampleLayout, rng: &mut SimRng) -> Result<TimedDataset> {
    let d = path.d;
    match layout {
        SampleLayout::Paired { n } => {
            if n == 0 {
                return Err(Error::InvalidInput("sample size must be positive".into()));
            }
            let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut obs = Vec::with_capacity(n * d);
            for &t in &times {
                let chol = factor_at(path, t)?;
                obs.extend(draw_gaussian(&chol, d, rng).iter());
            }
            TimedDataset::paired(&times, obs, d, Some((0.0, 1.0)))
        }
        SampleLayout::Grouped { m, n_per } => {
            if m == 0 || n_per == 0 {
                return Err(Error::InvalidInput("block count and block size must be positive".into()));
            }
            let times: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) / m as f64).collect();
            let mut blocks = Vec::with_capacity(m);
            for &t in &times {
                let chol = factor_at(path, t)?;
                let mut block = Vec::with_capacity(n_per * d);
                for _ in 0..n_per {
                    block.extend(draw_gaussian(&chol, d, rng).iter());
                }
                blocks.push(block);
            }
            TimedDataset::grouped(&times, blocks, d, Some((0.0, 1.0)))
        }
    }
}

/// Pilot size and minimum acceptance rate for truncated sampling.
pub const TRUNCATION_PILOT: usize = 10_000;
pub const TRUNCATION_GUARD: f64 = 1e-4;

/// Gaussian samples restricted to the positive orthant, by rejection, at
/// `n` uniform times.
pub fn sample_truncated_ggm(path: &PrecisionPath, n: usize, rng: &mut SimRng) -> Result<TimedDataset> {
    let d = path.d;
    let mut accepted = 0usize;
    for _ in 0..TRUNCATION_PILOT {
        let chol = factor_at(path, rng.random::<f64>())?;
        if draw_gaussian(&chol, d, rng).iter().all(|v| *v > 0.0) {
            accepted += 1;
        }
    }
    let rate = accepted as f64 / TRUNCATION_PILOT as f64;
    if rate < TRUNCATION_GUARD {
        return Err(Error::AcceptanceTooLow { rate, guard: TRUNCATION_GUARD });
    }
    let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut obs = Vec::with_capacity(n * d);
    for &t in &times {
        let chol = factor_at(path, t)?;
        loop {
            let x = draw_gaussian(&chol, d, rng);
            if x.iter().all(|v| *v > 0.0) {
                obs.extend(x.iter());
                break;
            }
        }
    }
    TimedDataset::paired(&times, obs, d, Some((0.0, 1.0)))
}

/// Random permutation of `0..d`, used as a fixed site-update order.
pub(crate) fn site_order(d: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    order
}
