//! Hierarchical seed streams.
//!
//! A [`SeedNode`] is a 64-bit key. Children are derived by folding a label
//! (suite name, stage name) or a counter (replicate index) into the key with
//! SplitMix64; a leaf is turned into a ChaCha20 generator. Two different paths
//! from the same master seed never share a generator, so a stage kernel can
//! never consume another stage's randomness, and replicate `r` gets the same
//! numbers whether it runs first, last, or on another worker.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedNode {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SeedNode {
    pub fn master(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn child(&self, label: &str) -> Self {
        Self {
            key: splitmix64(self.key ^ fnv1a(label)),
        }
    }

    pub fn index(&self, i: u64) -> Self {
        Self {
            key: splitmix64(splitmix64(self.key).wrapping_add(i)),
        }
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha20Rng::seed_from_u64(self.key)
    }
}
