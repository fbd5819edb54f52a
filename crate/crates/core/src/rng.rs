//! Seed plumbing.
//!
//! Every stochastic component receives an explicit `u64` seed. Seeds for
//! sub-tasks (per sample, per alternation, per paraphrase) are derived by
//! mixing a parent seed with a tag, so results do not depend on the order in
//! which work items are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 64-bit FNV-1a. Stable across platforms and compiler versions, which
/// `std::hash` does not promise.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_with(0xcbf2_9ce4_8422_2325, bytes)
}

pub fn fnv1a_with(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    mix64(parent ^ mix64(tag))
}

pub fn derive_seed_str(parent: u64, tag: &str) -> u64 {
    derive_seed(parent, fnv1a(tag.as_bytes()))
}

/// Order-sensitive checksum over the bit patterns of a float slice.
pub fn checksum_f64(values: &[f64]) -> u64 {
    values
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, v| fnv1a_with(h, &v.to_bits().to_le_bytes()))
}
