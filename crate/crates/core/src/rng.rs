//! Counter-based random streams.
//!
//! Every draw in the crate comes from a [`CounterRng`] whose state is a pure
//! function of a key tuple `(seed, replicate, stream, index)`. Two draws with
//! different keys never share state, and the value produced for a key does
//! not depend on which other keys were evaluated first or on which thread.
//! That is what makes prefix-extendable designs and thread-count-invariant
//! Monte Carlo reports possible.
//!
//! The output function is the SplitMix64 finalizer applied to a Weyl
//! sequence started at the hashed key.

use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stream identifiers. Each independent source of randomness gets its own.
pub mod stream {
    pub const DESIGN: u64 = 0x01;
    pub const EPS: u64 = 0x02;
    pub const DELTA: u64 = 0x03;
    pub const LINDEBERG: u64 = 0x04;
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a 64-bit starting state.
#[inline]
pub fn key(seed: u64, replicate: u64, stream: u64, index: u64) -> u64 {
    let mut h = mix64(seed ^ 0x6a09_e667_f3bc_c908);
    h = mix64(h ^ replicate.wrapping_mul(GOLDEN));
    h = mix64(h ^ stream.wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    mix64(h ^ index.wrapping_mul(0x1656_67b1_9e37_79f9))
}

/// Replicate key that also separates grid points, so replicate `r` at `n`
/// and replicate `r` at `m != n` draw unrelated errors.
#[inline]
pub fn replicate_key(n: usize, replicate: usize) -> u64 {
    mix64((n as u64).wrapping_mul(GOLDEN) ^ (replicate as u64).rotate_left(32))
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64, replicate: u64, stream: u64, index: u64) -> Self {
        Self {
            state: key(seed, replicate, stream, index),
        }
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Uniform on the open interval (0, 1); never returns 0 or 1.
#[inline]
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
