//! Counter-based random streams.
//!
//! Every Monte Carlo sample draws from its own ChaCha8 stream keyed by
//! `(seed, domain)` and selected by the sample index, so results do not
//! depend on how samples are distributed over workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Factory of per-index random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStreams {
    seed: u64,
    domain: u64,
}

impl SampleStreams {
    pub fn new(seed: u64) -> Self {
        SampleStreams { seed, domain: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent family of streams for a named purpose.
    pub fn domain(&self, tag: &str) -> Self {
        SampleStreams {
            seed: self.seed,
            domain: splitmix64(self.domain ^ fnv1a(tag)),
        }
    }

    /// Same as [`domain`](Self::domain) with a numeric sub-key.
    pub fn subdomain(&self, key: u64) -> Self {
        SampleStreams {
            seed: self.seed,
            domain: splitmix64(self.domain.wrapping_add(splitmix64(key))),
        }
    }

    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut z = self.seed ^ self.domain.rotate_left(17);
        for chunk in key.chunks_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}
