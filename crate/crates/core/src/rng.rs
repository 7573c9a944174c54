//! Seeded random streams.
//!
//! Every random quantity comes from a ChaCha8 generator keyed by a 64-bit seed
//! and a stream id, so the update samples `ξᵏ` and the reference samples `ξ'`
//! are drawn from disjoint keystreams and a run is reproducible from its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const UPDATE_STREAM: u64 = 0;
pub const REFERENCE_STREAM: u64 = 1;
pub const INIT_STREAM: u64 = 2;
pub const DATA_STREAM: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; mixes a seed with a salt into a fresh seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform sampling with replacement over `0..m` from one keystream.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
    stream: u64,
    draws: u64,
    m: usize,
}

/// Identity of one draw: the keystream it came from and its position in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DrawId {
    pub stream: u64,
    pub counter: u64,
}

impl SampleStream {
    pub fn new(seed: u64, stream: u64, m: usize) -> Self {
        assert!(m > 0, "cannot sample from an empty dataset");
        SampleStream { rng: stream_rng(seed, stream), stream, draws: 0, m }
    }

    pub fn next(&mut self) -> (usize, DrawId) {
        let id = DrawId { stream: self.stream, counter: self.draws };
        self.draws += 1;
        (self.rng.random_range(0..self.m), id)
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}
