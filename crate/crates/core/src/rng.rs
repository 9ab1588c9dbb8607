//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by a
//! 64-bit seed plus a stream id, so independent consumers of the same seed
//! never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream ids used across the crate.
pub mod stream {
    pub const WEIGHT_INIT: u64 = 1;
    pub const JITTER: u64 = 2;
    pub const MATRIX: u64 = 3;
    pub const SIGNAL: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const PLANT: u64 = 6;
    pub const MASK: u64 = 7;
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| normal(rng)).collect()
}
