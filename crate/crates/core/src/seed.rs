//! Seed splitting.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by the
//! run seed plus a path of integer tags, e.g. `[TAG_SHUFFLE, epoch]` or
//! `[TAG_CROPS, epoch, image]`. Keys are folded with SplitMix64, so streams
//! are independent of each other and of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_SYNTH: u64 = 0x5359_4e54;
pub const TAG_SHUFFLE: u64 = 0x5348_5546;
pub const TAG_CROPS: u64 = 0x4352_4f50;
pub const TAG_STRONG: u64 = 0x5354_524f;
pub const TAG_ZEROSHOT: u64 = 0x5a45_524f;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a path of tags into a 64-bit key.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

/// RNG for the stream at `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
