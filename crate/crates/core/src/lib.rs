//! Sparse time score matching.
//!
//! Estimation and inference for the time derivative of the natural
//! parameters of a time-varying exponential family
//! `q_t(x) ∝ exp⟨θ(t), f(x)⟩`, learned directly from time-stamped samples
//! without ever touching the normalizing constant.

pub mod changepoint;
pub mod condexp;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod tuning;

pub use condexp::{CondExpEstimate, CondExpMethod};
pub use error::{Error, Result};
pub use model::{BasisSpec, DiffParam, FeatureKind, FeatureMap, Layout, TimeBasis, TimedDataset, WeightFunction};
pub use objective::{GeneralObjective, PerSampleGradientMatrix, QuadraticObjective};
pub use solver::{LassoConfig, LassoSolution, StepRule};
pub use estimate::{fit_diff_param, DiffParamFit, FitSummary, LambdaChoice};
pub use inference::{run_pipeline, InferenceConfig, InferenceReport, Targets};
