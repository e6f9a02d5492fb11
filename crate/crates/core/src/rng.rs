//! Deterministic random substreams.
//!
//! Every stochastic component receives its own ChaCha stream derived from the
//! master seed and a path of integer tags (stream name, generation, particle
//! index, ...). Work items therefore draw the same numbers no matter which
//! thread runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Named top-level streams.
pub mod stream {
    pub const TRUTH: u64 = 1;
    pub const TRAINING: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SMC: u64 = 4;
    pub const ESTIMATION: u64 = 5;
    pub const SOLVER: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |h, &t| splitmix64(h ^ splitmix64(t.wrapping_add(0x632b_e59b_d9b4_e019))))
}

/// A generator for the substream identified by `tags` under `seed`.
pub fn substream(seed: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
