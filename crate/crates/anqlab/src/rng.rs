//! Seed-stream bookkeeping.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user-facing `u64` seed plus a stream id. Distinct roles (net init, batch
//! sampling, rollouts, Monte Carlo trials) get distinct streams so that adding
//! a consumer never perturbs the draws seen by another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the learner and data layers. Grouped here so collisions are
/// visible at a glance.
pub mod streams {
    pub const NET_INIT_Q: u64 = 0x10;
    pub const NET_INIT_V: u64 = 0x20;
    pub const NET_INIT_MU: u64 = 0x30;
    pub const NET_INIT_PI: u64 = 0x40;
    pub const BATCH: u64 = 0x50;
    pub const MU_NOISE: u64 = 0x60;
    pub const ROLLOUT: u64 = 0x70;
    pub const MIXTURE: u64 = 0x80;
    pub const EVAL: u64 = 0x90;
    pub const TRIAL_BASE: u64 = 0x1000;
}

/// Generator for `(seed, stream)`. Same pair, same draws.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
