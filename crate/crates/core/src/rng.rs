//! Seeded, splittable randomness.
//!
//! Every random draw in the crate comes from a [`SeededRng`], a
//! `(seed, stream_id)` pair that names a ChaCha20 keystream:
//!
//! - key: the 64-bit `seed` in little-endian order in bytes `0..8`, bytes
//!   `8..32` zero;
//! - stream (nonce): `stream_id`;
//! - block counter starting at zero.
//!
//! This is exactly `rand_chacha::ChaCha20Rng::from_seed(key)` followed by
//! `set_stream(stream_id)`, so a port only needs a ChaCha20 implementation
//! with a 64-bit nonce to reproduce the raw `u32`/`u64` sequence.
//!
//! Independent sub-streams for distinct consumers (generation of X, noise,
//! corruption, each estimator) are derived with [`SeededRng::substream`],
//! which keeps `stream_id` and replaces the seed by
//! `splitmix64(seed + (label + 1) * 0x9E3779B97F4A7C15)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededRng {
    pub seed: u64,
    pub stream_id: u64,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Deterministic child stream for an independent consumer.
    pub fn substream(&self, label: u64) -> Self {
        let mixed = self
            .seed
            .wrapping_add(label.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        Self {
            seed: splitmix64(mixed),
            stream_id: self.stream_id,
        }
    }
}
