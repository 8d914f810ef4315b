//! Reproducible random streams.
//!
//! Every replica owns a [`RandomStream`]: a ChaCha8 block cipher keyed from
//! the 64-bit master seed (expanded with the `rand_core` 0.9 `seed_from_u64`
//! PCG32 scheme) and using the replica index as the 64-bit stream id. The
//! block counter advances with every draw, so a stream is a pure function of
//! `(master seed, replica index, draw counter)` and independent of how
//! replicas are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator name recorded in output metadata.
pub const GENERATOR_NAME: &str =
    "ChaCha8 (rand_chacha 0.9); key = seed_from_u64(master), stream = replica index";

/// A per-replica random stream. Never shared between replicas.
#[derive(Clone, Debug)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn new(master: u64, replica: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        rng.set_stream(replica);
        RandomStream(rng)
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_position(&self) -> u128 {
        self.0.get_word_pos()
    }
}

/// Stream for `replica` under `master`.
pub fn seed_stream(master: u64, replica: u64) -> RandomStream {
    RandomStream::new(master, replica)
}

/// Derives an unrelated master seed for a sub-experiment, so that e.g. the
/// pile simulation and its oracle never draw from the same key.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Derives a sub-seed from a textual label.
pub fn derive_seed_str(master: u64, label: &str) -> u64 {
    // FNV-1a, stable across platforms and builds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    derive_seed(master, h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
