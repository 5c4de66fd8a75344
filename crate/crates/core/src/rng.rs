//! Named, splittable random streams.
//!
//! Every random draw in the library comes from an [`RngStream`] derived from
//! a single experiment seed. Derivation is a pure function of the parent key
//! and a child label, so results never depend on scheduling order:
//!
//! ```text
//! root(seed)           key = mix(seed ^ ROOT_SALT)
//! parent.child(name)   key = mix(parent.key ^ fnv1a64(name))
//! parent.indexed(i)    key = mix(parent.key.rotate_left(17) ^ mix(i + 1))
//! ```
//!
//! `mix` is the SplitMix64 finalizer. The 32-byte ChaCha8 seed is four
//! successive SplitMix64 outputs starting from the key.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const ROOT_SALT: u64 = 0x5245_544c_414e_4453;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn seed_bytes(key: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = key;
    for chunk in out.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix(state).to_le_bytes());
    }
    out
}

/// Serializable position of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSnapshot {
    pub key: u64,
    pub word_pos: u128,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    inner: ChaCha8Rng,
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot() == other.snapshot()
    }
}

impl RngStream {
    pub fn root(seed: u64) -> Self {
        Self::from_key(mix(seed ^ ROOT_SALT))
    }

    fn from_key(key: u64) -> Self {
        Self { key, inner: ChaCha8Rng::from_seed(seed_bytes(key)) }
    }

    /// Child stream named `name`. Independent of how much of `self` was consumed.
    pub fn child(&self, name: &str) -> Self {
        Self::from_key(mix(self.key ^ fnv1a64(name)))
    }

    /// Child stream number `index`, used for per-draw and per-cell streams.
    pub fn indexed(&self, index: u64) -> Self {
        Self::from_key(mix(self.key.rotate_left(17) ^ mix(index.wrapping_add(1))))
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn snapshot(&self) -> RngSnapshot {
        RngSnapshot { key: self.key, word_pos: self.inner.get_word_pos() }
    }

    pub fn restore(snap: RngSnapshot) -> Self {
        let mut s = Self::from_key(snap.key);
        s.inner.set_word_pos(snap.word_pos);
        s
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi].
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        let v = lo + (hi - lo) * self.uniform();
        v.clamp(lo, hi)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform index in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; bias is < 2^-32 for the sizes used here
        ((u128::from(self.inner.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
