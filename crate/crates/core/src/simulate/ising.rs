//! Gibbs sampling for time-varying pairwise binary models
//! `q_t(x) ∝ exp(Σ_{i<j} Θ_ij(t) x_i x_j)` on `{0, 1}^d`.

use nalgebra::DMatrix;
use rand::Rng;

use super::ggm::{site_order, PrecisionPath};
use crate::error::{Error, Result};
use crate::model::TimedDataset;
use crate::rng::SimRng;

pub const MAX_ISING_DIM: usize = 64;
pub const DEFAULT_SWEEPS: usize = 200;

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One draw by `n_sweeps` systematic-scan Gibbs sweeps from a uniform random
/// start.
fn gibbs_draw(coupling: &DMatrix<f64>, order: &[usize], n_sweeps: usize, rng: &mut SimRng) -> Vec<f64> {
    let d = coupling.nrows();
    let mut x: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
    for _ in 0..n_sweeps {
        for &i in order {
            let field: f64 = (0..d).filter(|&j| j != i).map(|j| coupling[(i, j)] * x[j]).sum();
            x[i] = if rng.random::<f64>() < logistic(field) { 1.0 } else { 0.0 };
        }
    }
    x
}

/// `n` samples at uniform times with couplings `coupling(t)` (symmetric
/// `d × d`, diagonal ignored). The site order is drawn once per dataset.
pub fn sample_ising_path<F>(coupling: F, d: usize, n_sweeps: usize, n: usize, rng: &mut SimRng) -> Result<TimedDataset>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if d == 0 || d > MAX_ISING_DIM {
        return Err(Error::InvalidInput(format!("binary model dimension must be in 1..={MAX_ISING_DIM}, got {d}")));
    }
    if n == 0 || n_sweeps == 0 {
        return Err(Error::InvalidInput("sample size and sweep count must be positive".into()));
    }
    let order = site_order(d, rng);
    let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut obs = Vec::with_capacity(n * d);
    for &t in &times {
        let c = coupling(t);
        if c.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("coupling at t={t} is {:?}, expected {d}x{d}", c.shape())));
        }
        obs.extend(gibbs_draw(&c, &order, n_sweeps, rng));
    }
    TimedDataset::paired(&times, obs, d, Some((0.0, 1.0)))
}

/// Convenience wrapper for a [`PrecisionPath`] read as a coupling path.
pub fn sample_ising_from_path(path: &PrecisionPath, n_sweeps: usize, n: usize, rng: &mut SimRng) -> Result<TimedDataset> {
    sample_ising_path(|t| path.evaluate(t), path.d, n_sweeps, n, rng)
}
