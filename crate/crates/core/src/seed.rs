//! Keyed pseudo-random function over namespace paths.
//!
//! Every random decision in the crate is a pure function of a master seed and
//! a path of `(label, index)` pairs. Nothing carries mutable RNG state, so an
//! LCA can reveal the tape of any site in any order and always see the same
//! bits.

use std::fmt;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer. Bijective with full avalanche.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, then mixed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h ^ (label.len() as u64).wrapping_mul(GOLDEN))
}

/// Position in the namespace tree of a master seed.
///
/// `child` descends one level; the resulting key depends on the full path, so
/// distinct paths give unrelated streams while equal paths give equal streams.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedContext {
    master: u64,
    key: u64,
    depth: u32,
}

impl SeedContext {
    pub fn new(master: u64) -> Self {
        SeedContext {
            master,
            key: mix64(master ^ GOLDEN),
            depth: 0,
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Raw 64-bit key of this namespace.
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn child(&self, label: &str, index: u64) -> Self {
        let k = mix64(self.key ^ hash_label(label));
        let k = mix64(k.wrapping_add(GOLDEN) ^ mix64(index.wrapping_add(0x632b_e59b_d9b4_e019)));
        SeedContext {
            master: self.master,
            key: k,
            depth: self.depth + 1,
        }
    }

    /// The `i`-th 64-bit word of this namespace's stream.
    #[inline]
    pub fn word(&self, i: u64) -> u64 {
        mix64(self.key ^ mix64(i.wrapping_mul(GOLDEN).wrapping_add(0x1d8e_4e27_c47d_124f)))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision (word 0).
    #[inline]
    pub fn unit(&self) -> f64 {
        self.unit_at(0)
    }

    #[inline]
    pub fn unit_at(&self, i: u64) -> f64 {
        (self.word(i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli(p) decision drawn from word 0.
    #[inline]
    pub fn bernoulli(&self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform integer in `0..bound` from word `i` (bound > 0).
    pub fn below(&self, i: u64, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((u128::from(self.word(i)) * u128::from(bound)) >> 64) as u64
    }
}

impl fmt::Debug for SeedContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SeedContext(master={}, depth={}, key={:016x})",
            self.master, self.depth, self.key
        )
    }
}

/// Hash a sequence of integers into a single key (order sensitive).
pub fn hash_words<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    let mut h = GOLDEN;
    let mut n = 0u64;
    for w in words {
        h = mix64(h ^ mix64(w.wrapping_add(n.wrapping_mul(GOLDEN))));
        n += 1;
    }
    mix64(h ^ n)
}
