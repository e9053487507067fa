//! Seeded random streams.
//!
//! Every consumer draws from ChaCha8 keyed by the run seed, on its own stream
//! number, so adding draws in one place never shifts the values seen elsewhere.
//! ChaCha output is specified bit-for-bit and is identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod streams {
    pub const NOISE_GAUSSIAN: u64 = 0;
    pub const NOISE_POSITIONS: u64 = 1;
    pub const NOISE_VALUES: u64 = 2;
    pub const HALS_INIT: u64 = 3;
    /// Factor `k` of a sequential run uses `SOLVER_BASE + 2k` for its
    /// initializer and `SOLVER_BASE + 2k + 1` for the power-method start.
    pub const SOLVER_BASE: u64 = 16;
}

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
