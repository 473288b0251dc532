//! Seeded random number generation.
//!
//! Every sampler takes an explicit generator. Independent replications are
//! derived from a root seed by selecting a distinct ChaCha stream per
//! replication index: replication `r` of root seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s)` with `set_stream(r + 1)`. Stream 0 is left
//! for top-level use of the root seed itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for replication `index` under `root_seed`.
pub fn split_rng(root_seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}
