//! Core domain types: feature maps, time bases, the weighting function,
//! datasets and the differential-parameter model.

mod basis;
mod dataset;
mod diffparam;
mod features;
mod weight;

pub use basis::{BasisSpec, CustomBasis, TimeBasis};
pub use dataset::{normalize_times, Block, Layout, TimedDataset};
pub use diffparam::DiffParam;
pub use features::{FeatureKind, FeatureMap};
pub use weight::WeightFunction;

/// `(g(t), ∂t g(t))` for the given weight function.
pub fn eval_weight(w: &WeightFunction, t: f64) -> (f64, f64) {
    w.eval(t)
}

/// `αᵀ ∂tφ(t)` as a plain vector.
pub fn eval_diff_param(dp: &DiffParam, t: f64) -> Vec<f64> {
    dp.evaluate(t).as_slice().to_vec()
}
