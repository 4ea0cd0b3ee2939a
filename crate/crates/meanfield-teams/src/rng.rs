//! Counter-based random number generation.
//!
//! Every draw is a pure function of a key `(seed, rep, stage, agent, slot)`,
//! so simulations are reproducible regardless of how replications are
//! scheduled across threads. The mixer is splitmix64; not cryptographic.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an arbitrary key path down to a single 64-bit word.
pub fn key_hash(parts: &[u64]) -> u64 {
    let mut h = GOLDEN;
    for (i, &p) in parts.iter().enumerate() {
        h = mix64(h ^ p.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN)));
    }
    mix64(h)
}

/// Uniform draw in `[0, 1)` keyed by the full counter path.
pub fn keyed_uniform(parts: &[u64]) -> f64 {
    // 53 mantissa bits
    (key_hash(parts) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stateful convenience wrapper: a key prefix plus an incrementing slot.
///
/// Used where a stream of draws is needed under one logical key
/// (e.g. generating a random model from a seed).
pub struct KeyedStream {
    prefix: Vec<u64>,
    slot: u64,
}

impl KeyedStream {
    pub fn new(prefix: &[u64]) -> Self {
        Self { prefix: prefix.to_vec(), slot: 0 }
    }

    pub fn next_uniform(&mut self) -> f64 {
        let mut parts = self.prefix.clone();
        parts.push(self.slot);
        self.slot += 1;
        keyed_uniform(&parts)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }
}

/// Sample an index from a pmf by inverse CDF with fixed index ordering.
///
/// The last index with positive mass absorbs any floating-point slack.
pub fn inverse_cdf(pmf: &[f64], unif: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in pmf.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if unif < acc {
                return i;
            }
        }
    }
    last_positive
}
