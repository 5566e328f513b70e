//! Independent, seedable random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! run seed, so rolling the environment back never shifts exploration draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DdrRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Goals = 1,
    Noise = 2,
    Exploration = 3,
    Init = 4,
    Replay = 5,
    Evaluation = 6,
    Dataset = 7,
}

pub fn stream(seed: u64, which: Stream) -> DdrRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream for the `index`-th sub-task of a run (e.g. one episode).
pub fn sub_stream(seed: u64, which: Stream, index: u64) -> DdrRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(which as u64);
    rng
}

/// A `u64` seed for the `index`-th sub-task, e.g. an episode's noise stream.
pub fn derive_seed(seed: u64, which: Stream, index: u64) -> u64 {
    use rand::RngCore;
    sub_stream(seed, which, index).next_u64()
}
