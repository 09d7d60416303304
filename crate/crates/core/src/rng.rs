//! Seeded random streams.
//!
//! Every consumer of randomness derives its generator from `(seed, domain,
//! index)`, so a sample or a training step draws the same numbers no matter
//! how much randomness anything else consumed before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod domain {
    pub const SKELETON: u64 = 1;
    pub const VIEWS: u64 = 2;
    pub const JITTER: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const STEP: u64 = 6;
    pub const INIT_GENERATOR: u64 = 7;
    pub const INIT_DISCRIMINATOR: u64 = 8;
}

pub fn stream(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// A seed for a sub-component, for APIs that take a plain `u64`.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain, u64::MAX).next_u64()
}
