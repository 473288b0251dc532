//! Ground-truth generators.

pub mod gaussian;
pub mod ggm;
pub mod ising;

pub use gaussian::{gaussian_oracle_family, Curve, GaussianOracle, OracleKind};
pub use ggm::{
    build_theta0, sample_ggm_path, sample_truncated_ggm, ChangeKind, ChangingEdge, PrecisionPath, SampleLayout,
    Theta0Style,
};
pub use ising::{sample_ising_from_path, sample_ising_path};
