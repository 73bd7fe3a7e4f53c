//! Seeded random streams.
//!
//! Every generator in this crate draws from ChaCha8 keyed by a 64-bit master
//! seed. Independent sub-streams (grid cells, Monte Carlo blocks, packet
//! indices) are selected with ChaCha's 64-bit stream id, so a single master
//! seed fans out into reproducible, non-overlapping streams regardless of how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for sub-stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes `(seed, index)` into a fresh 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `trials` into fixed-size blocks; block `b` covers
/// `ranges[b]`. The decomposition depends only on `trials`, so results merged
/// in block order are identical for any worker count.
pub(crate) fn blocks(trials: u64, block: u64) -> Vec<(u64, u64)> {
    (0..trials.div_ceil(block))
        .map(|b| (b, block.min(trials - b * block)))
        .collect()
}
