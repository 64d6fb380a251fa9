//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by four 64-bit words. Experiments
//! address streams by `(seed, replication, slot, lane)` so any replication and
//! any chain step can be regenerated on its own, in any order, on any thread.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Slot word reserved for the initial-state draw of a chain (step index -1).
const SLOT_INITIAL: u64 = u64::MAX;
/// Slot word reserved for per-path streams of the plain Monte Carlo scheme.
const SLOT_PATHS: u64 = u64::MAX - 1;

/// 2^-53, the spacing of the uniform grid produced by [`SeededStream::next_f64`].
const UNIT_53: f64 = 1.0 / (1u64 << 53) as f64;

/// A seeded, reproducible source of uniform variates.
#[derive(Clone, Debug)]
pub struct SeededStream {
    key: [u64; 4],
    rng: ChaCha8Rng,
}

impl SeededStream {
    /// Root stream for a bare seed.
    pub fn new(seed: u64) -> Self {
        Self::from_key([seed, 0, 0, 0])
    }

    pub fn from_key(key: [u64; 4]) -> Self {
        let mut bytes = [0u8; 32];
        for (chunk, word) in bytes.chunks_exact_mut(8).zip(key) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        Self {
            key,
            rng: ChaCha8Rng::from_seed(bytes),
        }
    }

    /// Substream for `(seed, replication, step)`. Step `-1` is the initial draw.
    pub fn substream(seed: u64, replication: u64, step: i64) -> Self {
        let slot = if step < 0 { SLOT_INITIAL } else { step as u64 };
        Self::from_key([seed, replication, slot, 0])
    }

    /// Independent stream for path `path` of the plain Monte Carlo scheme.
    pub fn path_stream(seed: u64, replication: u64, path: u64) -> Self {
        Self::from_key([seed, replication, SLOT_PATHS, path])
    }

    /// Derives a child stream keyed by words drawn from `self`.
    ///
    /// The parent advances by four draws, so repeated splits give distinct
    /// children.
    pub fn split(&mut self) -> Self {
        let key = [
            self.rng.next_u64(),
            self.rng.next_u64(),
            self.rng.next_u64(),
            self.rng.next_u64(),
        ];
        Self::from_key(key)
    }

    pub fn key(&self) -> [u64; 4] {
        self.key
    }

    /// Uniform draw on the 2^-53 grid of `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * UNIT_53
    }
}

impl RngCore for SeededStream {
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

/// Addresses the substreams of one replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Substreams {
    pub seed: u64,
    pub replication: u64,
}

impl Substreams {
    pub fn new(seed: u64, replication: u64) -> Self {
        Self { seed, replication }
    }

    pub fn initial(&self) -> SeededStream {
        SeededStream::substream(self.seed, self.replication, -1)
    }

    pub fn step(&self, step: usize) -> SeededStream {
        SeededStream::substream(self.seed, self.replication, step as i64)
    }

    pub fn path(&self, path: usize) -> SeededStream {
        SeededStream::path_stream(self.seed, self.replication, path as u64)
    }
}
