//! Counter-based pseudo-random generator for the simulator.
//!
//! Every draw is a pure function of `(seed, stream key)`, so generation is
//! reproducible regardless of evaluation order and safe to parallelize.
//! The generator is a SplitMix64-style finalizer chain:
//!
//! ```text
//! h_0   = mix64(seed ^ 0x9E3779B97F4A7C15)
//! h_i   = mix64(h_{i-1} + 0x9E3779B97F4A7C15 + key_i)        (wrapping)
//! mix64(z) = let z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
//!            let z = (z ^ z>>27) * 0x94D049BB133111EB;
//!            z ^ z>>31
//! ```
//!
//! Uniform doubles take the top 53 bits of the final word. Gaussians use
//! Box-Muller on two sub-draws of the same key (suffix words 0 and 1).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless keyed generator. Streams are identified by `&[u64]` keys; a
/// fixed key always yields the same value for the same seed.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn word(&self, key: &[u64]) -> u64 {
        let mut h = mix64(self.seed ^ GOLDEN);
        for &w in key {
            h = mix64(h.wrapping_add(GOLDEN).wrapping_add(w));
        }
        h
    }

    /// Uniform in [0, 1): top 53 bits of the stream word.
    pub fn uniform(&self, key: &[u64]) -> f64 {
        (self.word(key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&self, key: &[u64], lo: f64, hi: f64) -> f64 {
        lo + self.uniform(key) * (hi - lo)
    }

    /// Standard normal via Box-Muller; sub-draws use key suffixes 0 and 1.
    pub fn gaussian(&self, key: &[u64]) -> f64 {
        let mut k = Vec::with_capacity(key.len() + 1);
        k.extend_from_slice(key);
        k.push(0);
        // map to (0, 1] so ln never sees zero
        let u1 = ((self.word(&k) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        *k.last_mut().unwrap() = 1;
        let u2 = (self.word(&k) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
