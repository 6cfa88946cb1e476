//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream keyed by a user seed plus a purpose tag, so results do not depend
//! on thread scheduling or call order across unrelated components.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Combine a seed with any number of discriminating words.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

/// A generator for `(seed, stream)`; `stream` selects the ChaCha stream so
/// purposes sharing a seed never overlap.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for a sub-task identified by `parts` under `(seed, purpose)`.
pub fn sub(seed: u64, purpose: u64, parts: &[u64]) -> Rng {
    stream(derive(seed, parts), purpose)
}

// Purpose tags.
pub const TRUTH: u64 = 1;
pub const OBSERVE: u64 = 2;
pub const ANSWER: u64 = 3;
pub const SPLIT: u64 = 4;
pub const HOLDOUT: u64 = 5;
pub const INIT: u64 = 6;
pub const EPOCH: u64 = 7;
pub const VALIDATION: u64 = 8;
pub const IMPUTE: u64 = 9;
pub const QUALITY: u64 = 10;
pub const REWARD: u64 = 11;
pub const RANDOM: u64 = 12;
pub const EVAL: u64 = 13;
