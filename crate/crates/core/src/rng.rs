//! Seed plumbing. Every command takes one base seed; independent consumers
//! draw from their own ChaCha stream keyed by a fixed counter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers used across the crate.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const VERIFY: u64 = 5;
    pub const SYNTH: u64 = 6;
}

/// Deterministic generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
