//! Deterministic, platform-stable randomness.
//!
//! Experiments derive one seed per trial from a 64-bit master seed so that
//! any single trial can be rerun in isolation. The generator is ChaCha8,
//! which has a stable stream across platforms and crate versions, unlike
//! `StdRng`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; used as a seed mixer, not as the stream generator.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trial seed: `hash(master_seed, trial_index)`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master) ^ trial.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// Stream generator for a given seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
