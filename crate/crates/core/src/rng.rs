//! Keyed random streams.
//!
//! Every random draw in the crate comes from an [`RngStream`] addressed by a
//! `(seed, stream_id)` pair. Child streams are derived by tag, so a worker
//! computing one attribution cell gets the same numbers no matter which
//! thread runs it or in what order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parent: u64, tag: &str) -> u64 {
    let mut s = parent ^ fnv1a(tag.as_bytes()).rotate_left(17);
    splitmix64(&mut s)
}

/// A deterministic ChaCha8 stream identified by a 64-bit key.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    rng: ChaCha8Rng,
}

/// Opens the stream for `(seed, stream_id)`.
pub fn rng_stream(seed: u64, stream_id: &str) -> RngStream {
    let mut s = seed;
    let root = splitmix64(&mut s);
    RngStream::from_key(mix(root, stream_id))
}

impl RngStream {
    fn from_key(key: u64) -> Self {
        let mut state = key;
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            key,
            rng: ChaCha8Rng::from_seed(bytes),
        }
    }

    /// Key of this stream; equal keys produce equal draws.
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Derives an independent child stream. The parent's position is irrelevant.
    pub fn substream(&self, tag: &str) -> RngStream {
        RngStream::from_key(mix(self.key, tag))
    }

    /// Child stream tagged by an integer.
    pub fn substream_idx(&self, tag: &str, idx: u64) -> RngStream {
        let mut s = mix(self.key, tag) ^ idx.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        RngStream::from_key(splitmix64(&mut s))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn draws(mut s: RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn same_key_same_sequence() {
        assert_eq!(draws(rng_stream(42, "a"), 16), draws(rng_stream(42, "a"), 16));
    }

    #[test]
    fn different_ids_differ() {
        assert_ne!(draws(rng_stream(42, "a"), 16), draws(rng_stream(42, "b"), 16));
        assert_ne!(draws(rng_stream(42, "a"), 16), draws(rng_stream(43, "a"), 16));
    }

    #[test]
    fn substreams_ignore_parent_position() {
        let mut parent = rng_stream(7, "root");
        let before = parent.substream("x").key();
        parent.next_u64();
        assert_eq!(before, parent.substream("x").key());
        assert_ne!(parent.substream_idx("x", 0).key(), parent.substream_idx("x", 1).key());
    }

    #[test]
    fn uniform_mean_law_of_large_numbers() {
        let mut s = rng_stream(42, "lln");
        let n = 100_000;
        let mean = (0..n).map(|_| s.uniform()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }
}
