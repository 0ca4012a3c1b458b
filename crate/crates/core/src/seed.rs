//! Seed derivation.
//!
//! Every random stage draws from its own ChaCha8 stream whose seed is
//! `derive_seed(root, stage)`: the stage label is hashed with 64-bit FNV-1a,
//! xored into the root seed and passed through the SplitMix64 finalizer.
//! The mapping is fixed, so a root seed reproduces the full run on any
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for a named pipeline stage from a root seed.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    splitmix64(root ^ fnv1a(stage.as_bytes()))
}

/// Derives the seed for the `index`-th repetition of a stage.
pub fn derive_indexed(root: u64, stage: &str, index: u64) -> u64 {
    splitmix64(derive_seed(root, stage) ^ splitmix64(index))
}

/// A deterministic RNG for `seed`.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
