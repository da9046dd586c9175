//! Seed splitting.
//!
//! Every random draw in the crate comes from a ChaCha8 generator seeded with
//! the run seed and positioned on a stream whose id is derived from a path of
//! integers such as `[STREAM_RESET, episode]`. Two draws with different paths
//! never share a stream, so the order in which episodes or batches are
//! produced cannot change their contents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_RESET: u64 = 1;
pub const STREAM_EXPERT: u64 = 2;
pub const STREAM_ANNOTATE: u64 = 3;
pub const STREAM_LABEL_NOISE: u64 = 4;
pub const STREAM_PARAPHRASE: u64 = 5;
pub const STREAM_INIT: u64 = 6;
pub const STREAM_BATCH: u64 = 7;
pub const STREAM_SAMPLER: u64 = 8;
pub const STREAM_EVAL: u64 = 9;
pub const STREAM_PERTURB: u64 = 10;
pub const STREAM_DATASET: u64 = 11;
pub const STREAM_ACTION_NOISE: u64 = 12;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of integers into one stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter().fold(0x5EED_u64, |acc, &p| mix64(acc ^ mix64(p)))
}

/// Derives a child seed from `seed` and a path, for APIs that take a plain
/// integer seed.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    mix64(seed ^ stream_id(path))
}

/// Generator for `(seed, path)`.
pub fn rng_for(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(path));
    rng
}
