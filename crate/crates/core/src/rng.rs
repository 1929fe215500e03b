//! Deterministic random-stream derivation.
//!
//! Every stochastic step of an experiment draws from a generator derived
//! from the master seed plus a label path such as
//! `(repetition, phase, generation, member)`. Two runs with the same seed
//! produce identical streams no matter how work is scheduled across
//! threads, because no generator is ever shared between units of work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Label constants for the common stream paths used by the harness.
pub mod tag {
    pub const WARM_GENOMES: u64 = 0x01;
    pub const WARM_EVAL: u64 = 0x02;
    pub const OPERATORS: u64 = 0x03;
    pub const OFFSPRING_EVAL: u64 = 0x04;
    pub const ELITE_EVAL: u64 = 0x05;
    pub const FOREST_FIT: u64 = 0x06;
    pub const HOLDOUT: u64 = 0x07;
    pub const REPETITION: u64 = 0x08;
    pub const EXPORT: u64 = 0x09;
    pub const PROMOTION_EVAL: u64 = 0x0a;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a label path into a single child seed.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(seed ^ 0x5851_f42d_4c95_7f2d);
    for (i, &label) in path.iter().enumerate() {
        state = splitmix64(state ^ splitmix64(label).rotate_left((i % 63) as u32 + 1));
    }
    state
}

/// Derives an independent generator for the given label path.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, path))
}
