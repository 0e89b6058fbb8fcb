//! Seed derivation for reproducible replicate streams.
//!
//! Replicate `r` of a run with master seed `s` draws from a ChaCha8 stream
//! seeded with [`derive_seed`]`(s, r)`. The mixing function is SplitMix64's
//! finalizer applied to `s + (r + 1) · γ` with `γ = 0x9E3779B97F4A7C15`, so
//! each replicate's stream depends only on `(s, r)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `replicate` under `master`.
pub fn derive_seed(master: u64, replicate: u64) -> u64 {
    splitmix64(master.wrapping_add(replicate.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Random generator for a path seed.
pub fn path_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
