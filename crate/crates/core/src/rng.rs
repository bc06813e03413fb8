//! Seeded, splittable random streams.
//!
//! Every stochastic consumer (a sampler chain, noise injection, an Ising
//! sweep, the initial design) draws from its own ChaCha8 stream addressed by
//! `(seed, stream)`. ChaCha is counter based, so a stream's sequence depends
//! only on its address and never on what other consumers did first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngState { seed, stream }
    }

    /// Stream for a named role, e.g. `("chain", 2)` or `("ising", grid_index)`.
    pub fn for_role(seed: u64, role: &str, index: u64) -> Self {
        RngState {
            seed,
            stream: splitmix64(fnv1a(role.as_bytes()) ^ splitmix64(index)),
        }
    }

    /// A child stream of this one, for consumers that fan out further.
    pub fn child(&self, role: &str, index: u64) -> Self {
        RngState {
            seed: self.seed,
            stream: splitmix64(self.stream ^ fnv1a(role.as_bytes()) ^ splitmix64(index)),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
