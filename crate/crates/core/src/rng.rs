//! Seeded random streams.
//!
//! Every random draw in the crate goes through a [`Stream`], a ChaCha8
//! generator seeded from a `u64`. Independent per-item streams (one per
//! dataset record, one per convergence repetition) are derived from a base
//! seed and an index with [`derive_seed`], so results never depend on
//! iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer applied to `base ^ golden * (index + 1)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
