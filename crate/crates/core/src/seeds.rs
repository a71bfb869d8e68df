//! Named random streams derived from one master seed.
//!
//! Each stochastic block draws from its own ChaCha stream, so changing how many
//! numbers one block consumes never shifts another block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Network = 1,
    Preferences = 2,
    Params = 3,
    Perturbation = 4,
    Shocks = 5,
    Productivity = 6,
    Twin = 7,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub master: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Seeds { master }
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        self.rng_indexed(stream, 0)
    }

    /// Independent stream for repetition `index` of a block.
    pub fn rng_indexed(&self, stream: Stream, index: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(((stream as u64) << 32) | index as u64);
        rng
    }

    /// Plain integer sub-seed (used where an API takes a `u64`).
    pub fn sub_seed(&self, stream: Stream) -> u64 {
        use rand::RngCore;
        self.rng(stream).next_u64()
    }
}
