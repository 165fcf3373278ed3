//! Counter-based seed derivation.
//!
//! Every random quantity in the crate is drawn from a generator seeded by
//! `derive_seed(base, stream, index)`. The derived value depends only on its
//! three arguments, so trials can be evaluated in any order or on any number
//! of threads and still see the same randomness.

/// Stream tag for per-trial hash families.
pub const STREAM_TRIAL: u64 = 0x7472_6961_6c00_0001;
/// Stream tag for dataset generation.
pub const STREAM_DATASET: u64 = 0x6461_7461_0000_0002;
/// Stream tag for the coefficients of the hash functions within a family.
pub const STREAM_HASH: u64 = 0x6861_7368_0000_0003;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for element `index` of `stream` under `base`.
#[inline]
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ stream).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}
