//! Seeding helpers. Every random draw in the crate goes through a ChaCha8
//! stream so results are identical across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of a base seed and a path of indices. Used to give every
/// (density, realization) cell of a sweep its own seed independent of the
/// order in which cells are listed or executed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019))))
}
