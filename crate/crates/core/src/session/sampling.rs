//! Seeded batch sampling.
//!
//! Batches are drawn with SplitMix64 driving a partial Fisher–Yates shuffle:
//!
//! ```text
//! for i in 0..size:
//!     j = i + bounded(len - i)
//!     swap(pool[i], pool[j])
//! batch = pool[0..size]
//! ```
//!
//! `bounded(m)` draws 64-bit outputs, rejects any below `2^64 mod m` and
//! returns the survivor `mod m`, so every index is exactly uniform. The
//! whole procedure uses only wrapping 64-bit integer arithmetic and gives
//! the same batch on every platform. Growing `size` only appends to the
//! batch drawn with the same pool and seed.

use super::SessionError;

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..bound`.
    pub fn bounded(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= zone {
                return x % bound;
            }
        }
    }

    /// Uniform float in `[0, 1)` built from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Independent child generator.
    pub fn split(&mut self) -> SplitMix64 {
        SplitMix64::new(self.next_u64())
    }
}

/// Draws `size` distinct images from `pool` without replacement.
pub fn sample_batch(pool: &[String], size: usize, seed: u64) -> Result<Vec<String>, SessionError> {
    if size > pool.len() {
        return Err(SessionError::Validation(format!(
            "batch size {size} exceeds pool of {} images",
            pool.len()
        )));
    }
    let mut work: Vec<&String> = pool.iter().collect();
    let mut rng = SplitMix64::new(seed);
    for i in 0..size {
        let j = i + rng.bounded((work.len() - i) as u64) as usize;
        work.swap(i, j);
    }
    Ok(work.into_iter().take(size).cloned().collect())
}
