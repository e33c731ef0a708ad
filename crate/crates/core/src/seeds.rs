//! Seed derivation: every stage draws from its own stream of one top-level seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream offsets for the pipeline stages.
pub mod stream {
    pub const SYNTH: u64 = 0x5e_0001;
    pub const SPLIT: u64 = 0x5e_0002;
    pub const INIT: u64 = 0x5e_0003;
    pub const SHUFFLE: u64 = 0x5e_0004;
    pub const VALIDATION: u64 = 0x5e_0005;
    pub const BACKGROUND: u64 = 0x5e_0006;
    pub const EXPLAIN: u64 = 0x5e_0007;
}

/// SplitMix64 finalizer applied to `seed + stream`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream))
}

/// Nested derivation, e.g. `(seed, INIT, head index)`.
pub fn rng2(seed: u64, stream: u64, sub: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(derive(seed, stream), sub))
}
