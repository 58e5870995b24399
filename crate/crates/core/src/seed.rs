//! Seed derivation.
//!
//! Every random stream in the harness is keyed by `derive(base, tag, indices)`.
//! There is no global generator, so any trial can be re-run in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed, a domain tag and a list of indices.
pub fn derive(base: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = mix64(base ^ GOLDEN);
    for &b in tag.as_bytes() {
        h = mix64(h.wrapping_add(GOLDEN) ^ u64::from(b));
    }
    // separator so ("ab", [..]) and ("a", [b, ..]) cannot collide
    h = mix64(h ^ 0xFF00_FF00_FF00_FF00);
    for &i in indices {
        h = mix64(h.wrapping_add(GOLDEN) ^ i);
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(base: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    rng(derive(base, tag, indices))
}
