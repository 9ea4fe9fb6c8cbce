//! Counter-based randomness.
//!
//! Every draw is a pure function of `(seed, run, t, arm)`, built from the
//! SplitMix64 finalizer. Any single step of any replication can be
//! regenerated without replaying the run.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ word.wrapping_add(GOLDEN))
}

/// 64-bit hash of a sequence of words.
pub fn hash_words(words: &[u64]) -> u64 {
    words.iter().fold(GOLDEN, |h, &w| absorb(h, w))
}

/// Seed for replication `run_index`, independent of execution order.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    hash_words(&[0x7275_6e73, master_seed, run_index])
}

/// Uniform in `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn uniform(seed: u64, run: u64, t: u64, arm: u64) -> f64 {
    let h = absorb(absorb(absorb(absorb(GOLDEN, seed), run), t), arm);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bernoulli(p) draw as 0.0 / 1.0. `p = 1` always succeeds, `p = 0` never does.
#[inline]
pub fn bernoulli(p: f64, seed: u64, run: u64, t: u64, arm: u64) -> f64 {
    if uniform(seed, run, t, arm) < p {
        1.0
    } else {
        0.0
    }
}

/// Sequential stream over the same hash, used for environment generation.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, domain: u64) -> Self {
        Self {
            key: hash_words(&[seed, domain]),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        absorb(self.key, self.counter)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
