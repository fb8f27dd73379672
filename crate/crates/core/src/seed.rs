//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed, a stream tag and an index.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(base) ^ stream) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags. Distinct values keep derived seeds from colliding.
pub(crate) mod stream {
    pub const INIT_STUDENT: u64 = 1;
    pub const INIT_CRITIC: u64 = 2;
    pub const BATCHES: u64 = 3;
    pub const STUDENT_NOISE: u64 = 4;
    pub const TEACHER_NOISE: u64 = 5;
    pub const KMEANS: u64 = 7;
    pub const EVAL_TEACHER: u64 = 8;
    pub const DATA: u64 = 9;
}
