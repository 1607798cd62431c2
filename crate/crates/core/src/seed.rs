//! Seed derivation.
//!
//! Every random stream in the crate is derived from one root seed. A stream is
//! identified by a purpose tag and a counter:
//!
//! ```text
//! seed(root, purpose, index) = mix(mix(root ^ fnv1a64(purpose)) ^ mix(index + 1))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Streams with different tags or
//! indices are statistically independent for all practical purposes, and
//! the mapping is stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives the seed of the stream `(purpose, index)` under `root`.
pub fn derive_seed(root: u64, purpose: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ fnv1a64(purpose)) ^ splitmix64(index.wrapping_add(1)))
}

/// Seeded generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the stream `(purpose, index)` under `root`.
pub fn stream(root: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    rng(derive_seed(root, purpose, index))
}
