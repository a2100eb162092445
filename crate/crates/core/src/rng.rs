//! Deterministic random streams keyed by `(master_seed, run_index, user_index)`.
//!
//! The `(master_seed, run_index)` pair selects a ChaCha key and the user index
//! selects the ChaCha stream, so every user in every run draws from its own
//! non-overlapping keystream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed 64-bit key. Stable across
/// platforms and releases, unlike `std::hash`.
pub fn derive_key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, run_index: u64, user_index: u64) -> Self {
        let mut seed = [0u8; 32];
        let mut word = derive_key(&[master_seed, run_index]);
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&word.to_le_bytes());
            word = splitmix64(word);
        }
        let mut inner = ChaCha8Rng::from_seed(seed);
        inner.set_stream(user_index);
        Self { inner }
    }

    /// A single stream for code that does not need per-user separation.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0, 0)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
