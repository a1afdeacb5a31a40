//! Seeded randomness.
//!
//! Every random decision draws from a `ChaCha8Rng` seeded through
//! [`derive_seed`], so output depends only on the master seed and the
//! position of the item, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for item `index` of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ stream) ^ index)
}
