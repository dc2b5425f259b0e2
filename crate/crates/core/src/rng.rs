//! Seeded randomness.
//!
//! Every random decision in the crate goes through [`seeded`], a ChaCha8
//! stream keyed by a 64-bit seed. Independent sub-streams (one per tree, one
//! per generated split, ...) are keyed by [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent stream under `seed`: `seed ^ mix64(index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ mix64(index)
}
