//! Deterministic, splittable randomness.
//!
//! Streams are ChaCha12 keyed from a 64-bit seed. `split` derives an
//! independent child key from the parent key and a stream id, so a dataset
//! generated with one stream per sample is bit-identical whether samples are
//! drawn serially or in parallel.

use crate::mat::Mat;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Word position used when deriving child keys; far beyond any position the
/// direct draw path can reach in practice, so the two never overlap.
const DERIVE_WORD_POS: u128 = 1 << 68;

#[derive(Debug, Clone)]
pub struct Rng {
    key: [u8; 32],
    inner: ChaCha12Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let inner = ChaCha12Rng::seed_from_u64(seed);
        Rng {
            key: inner.get_seed(),
            inner,
        }
    }

    fn from_key(key: [u8; 32]) -> Self {
        Rng {
            key,
            inner: ChaCha12Rng::from_seed(key),
        }
    }

    /// Derives an independent child generator. Children with distinct ids are
    /// independent of each other and of this generator's own draw stream.
    pub fn split(&self, id: u64) -> Rng {
        let mut derive = ChaCha12Rng::from_seed(self.key);
        derive.set_stream(id);
        derive.set_word_pos(DERIVE_WORD_POS);
        let mut key = [0u8; 32];
        derive.fill_bytes(&mut key);
        Rng::from_key(key)
    }

    /// Named substream (FNV-1a over the name), used to keep e.g. data,
    /// training, and evaluation draws independent of one another.
    pub fn named(&self, name: &str) -> Rng {
        self.split(fnv1a64(name.as_bytes()))
    }

    pub fn next_f64(&mut self) -> f64 {
        // 53-bit uniform in [0, 1)
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)`.
    pub fn next_index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_index bound must be positive");
        rand::Rng::random_range(&mut self.inner, 0..bound)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Matrix of i.i.d. standard normal entries.
    pub fn gaussian(&mut self, rows: usize, cols: usize) -> Mat {
        assert!(rows >= 1 && cols >= 1, "gaussian dims must be >= 1");
        let data = (0..rows * cols).map(|_| self.standard_normal()).collect();
        Mat::from_vec(rows, cols, data).expect("sized by construction")
    }

    /// Uniformly random `k`-subset of `{0..n-1}`, sorted ascending.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "subset size exceeds ground set");
        let mut idx = rand::seq::index::sample(&mut self.inner, n, k).into_vec();
        idx.sort_unstable();
        idx
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
