//! Seed derivation.
//!
//! Every stochastic routine takes a plain `u64` seed. Parallel callers derive
//! child seeds from a master seed and a label so that results depend only on
//! `(master, label, index)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic child-seed generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn child(&self, label: &str) -> u64 {
        splitmix64(self.master ^ splitmix64(fnv1a(label.as_bytes())))
    }

    pub fn child_index(&self, label: &str, index: u64) -> u64 {
        splitmix64(self.child(label) ^ splitmix64(index.wrapping_add(1)))
    }

    /// A sub-stream rooted at `child(label)`.
    pub fn substream(&self, label: &str) -> SeedStream {
        SeedStream::new(self.child(label))
    }
}
