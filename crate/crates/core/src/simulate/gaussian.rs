//! One-dimensional Gaussian families `N(μ_t, σ_t²)` with closed-form time
//! scores, used as exact oracles for the score model.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureMap, TimedDataset};
use crate::rng::SimRng;

/// Smooth scalar curve on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    /// `a + b t`.
    Affine { a: f64, b: f64 },
    /// `offset + amp · sin(freq · t)`.
    Sine { offset: f64, amp: f64, freq: f64 },
}

impl Curve {
    pub fn constant(v: f64) -> Self {
        Curve::Affine { a: v, b: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Curve::Affine { a, b } => a + b * t,
            Curve::Sine { offset, amp, freq } => offset + amp * (freq * t).sin(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Curve::Affine { b, .. } => b,
            Curve::Sine { amp, freq, .. } => amp * freq * (freq * t).cos(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Curve::Affine { b, .. } => b == 0.0,
            Curve::Sine { amp, freq, .. } => amp == 0.0 || freq == 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    FixedMeanTimeVar,
    TimeMeanFixedVar,
    TimeMeanTimeVar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracle {
    pub kind: OracleKind,
    pub mean: Curve,
    pub sd: Curve,
}

/// Checks that the curves fit `kind` and that `σ_t > 0` on a fine grid.
pub fn gaussian_oracle_family(kind: OracleKind, mean: Curve, sd: Curve) -> Result<GaussianOracle> {
    let ok = match kind {
        OracleKind::FixedMeanTimeVar => mean.is_constant(),
        OracleKind::TimeMeanFixedVar => sd.is_constant(),
        OracleKind::TimeMeanTimeVar => true,
    };
    if !ok {
        return Err(Error::InvalidInput(format!("curves do not match family {kind:?}")));
    }
    for g in 0..=1000 {
        let t = g as f64 / 1000.0;
        if !(sd.value(t) > 0.0) {
            return Err(Error::InvalidInput(format!("standard deviation is not positive at t = {t}")));
        }
    }
    Ok(GaussianOracle { kind, mean, sd })
}

impl GaussianOracle {
    /// Sufficient statistics `f(x) = [x, x²]`.
    pub fn feature_map() -> FeatureMap {
        FeatureMap::custom("gaussian_1d", 1, 2, |x, out| {
            out[0] = x[0];
            out[1] = x[0] * x[0];
        })
    }

    pub fn sample(&self, t: f64, rng: &mut SimRng) -> f64 {
        self.mean.value(t) + self.sd.value(t) * rng.sample::<f64, _>(StandardNormal)
    }

    pub fn sample_paired(&self, n: usize, rng: &mut SimRng) -> Result<TimedDataset> {
        let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let obs: Vec<f64> = times.iter().map(|&t| self.sample(t, rng)).collect();
        TimedDataset::paired(&times, obs, 1, Some((0.0, 1.0)))
    }

    /// `∂t log q_t(x)`.
    pub fn exact_time_score(&self, x: f64, t: f64) -> f64 {
        let (mu, dmu) = (self.mean.value(t), self.mean.derivative(t));
        let (s, ds) = (self.sd.value(t), self.sd.derivative(t));
        let r = x - mu;
        r * dmu / (s * s) + r * r * ds / (s * s * s) - ds / s
    }

    /// `∂t[μ_t/σ_t², −1/(2σ_t²)]`.
    pub fn exact_dtheta(&self, t: f64) -> [f64; 2] {
        let (mu, dmu) = (self.mean.value(t), self.mean.derivative(t));
        let (s, ds) = (self.sd.value(t), self.sd.derivative(t));
        let s2 = s * s;
        [dmu / s2 - 2.0 * mu * ds / (s2 * s), ds / (s2 * s)]
    }

    /// `E_{q_t}[x, x²]`.
    pub fn moments(&self, t: f64) -> [f64; 2] {
        let (mu, s) = (self.mean.value(t), self.sd.value(t));
        [mu, mu * mu + s * s]
    }

    /// Score model `⟨∂tθ(t), f(x) − E_{q_t} f⟩` with exact moments.
    pub fn model_time_score(&self, x: f64, t: f64) -> f64 {
        let dtheta = DVector::from_row_slice(&self.exact_dtheta(t));
        let m = self.moments(t);
        let centered = DVector::from_vec(vec![x - m[0], x * x - m[1]]);
        dtheta.dot(&centered)
    }
}
