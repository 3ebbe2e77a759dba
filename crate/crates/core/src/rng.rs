//! Seed derivation for reproducible parallel sampling.
//!
//! Every random stream in the planner is keyed by a master seed plus a path of
//! indices (cycle, iteration, sample, ...). Streams never depend on the order
//! in which work is scheduled, so results are identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PlanRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `index` into `seed`, producing a child seed.
#[inline]
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Derives a child seed from a path of indices.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| derive(s, i))
}

pub fn stream(seed: u64) -> PlanRng {
    PlanRng::seed_from_u64(seed)
}
