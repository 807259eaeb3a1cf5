//! Reproducible random-number streams.
//!
//! Every stream is a ChaCha8 keystream (`rand_chacha::ChaCha8Rng`). The key is
//! the SHA-256 digest of the master seed and a role tag; the replica index
//! selects the ChaCha stream. Distinct `(index, role)` pairs therefore read
//! disjoint keystreams, and the same triple reproduces the same bytes on every
//! platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Identifier written into every output file.
pub const RNG_ALGORITHM: &str = "chacha8(key=sha256(seed_le||role),stream=index)";

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    index: u64,
    role: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }
}

/// Derives the stream for `(seed, index, role)`.
pub fn derive_stream(seed: u64, index: u64, role: &str) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(role.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut inner = ChaCha8Rng::from_seed(key);
    inner.set_stream(index);
    RngStream {
        seed,
        index,
        role: role.to_owned(),
        inner,
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Uniform draw on `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Standard exponential draw by inversion; always finite and positive.
#[inline]
pub fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let e = -(1.0 - uniform(rng)).ln();
    if e > 0.0 {
        e
    } else {
        f64::MIN_POSITIVE
    }
}

/// Uniform index in `0..n`. Panics if `n == 0`.
#[inline]
pub fn uniform_index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Index drawn with probability proportional to `weights`; `None` when all
/// weights are zero.
pub fn weighted_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = uniform(rng) * total;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return Some(i);
            }
            u -= w;
            last_positive = Some(i);
        }
    }
    last_positive
}
