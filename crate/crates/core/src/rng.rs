//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value. Child seeds are derived from a parent seed and a path of labels with
//! SplitMix64 finalisation:
//!
//! ```text
//! child = mix(parent ^ mix(label_0 + GOLDEN)) ; repeated for every label
//! ```
//!
//! The dataset pipeline uses `master -> split -> graph index -> attempt`, so any
//! single graph can be regenerated without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` along `path`.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |acc, &label| {
        mix64(acc ^ mix64(label.wrapping_add(GOLDEN)))
    })
}

/// Stable 64-bit label for a string (FNV-1a), for naming streams.
pub fn label(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
