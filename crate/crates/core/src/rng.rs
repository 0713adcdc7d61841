//! Seeded, splittable random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. The generator seed is
//! derived with the SplitMix64 finalizer:
//!
//! ```text
//! child = mix64(mix64(master_seed ^ 0x9E3779B97F4A7C15) ^ stream_id.wrapping_mul(0xD1B54A32D192ED03))
//! mix64(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!           z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!           z ^ (z >> 31)
//! ```
//!
//! and the generator itself is ChaCha8 seeded via `seed_from_u64(child)`,
//! which is portable and bit-reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MUL: u64 = 0xD1B5_4A32_D192_ED03;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// The derived 64-bit generator seed.
    pub fn seed(&self) -> u64 {
        mix64(mix64(self.master_seed ^ GOLDEN) ^ self.stream_id.wrapping_mul(STREAM_MUL))
    }

    /// A stream nested under this one: its master seed is this stream's derived seed.
    pub fn substream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed(), id)
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_sequence() {
        let a: Vec<u64> = RngStream::new(7, 3).rng().random_iter().take(16).collect();
        let b: Vec<u64> = RngStream::new(7, 3).rng().random_iter().take(16).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_ids_distinct_seeds() {
        let seeds: std::collections::HashSet<u64> =
            (0..1000).map(|id| RngStream::new(42, id).seed()).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(RngStream::new(1, 0).seed(), RngStream::new(0, 1).seed());
    }

    #[test]
    fn mix64_reference_values() {
        // SplitMix64 finalizer of 0 and 1
        assert_eq!(mix64(0), 0);
        assert_eq!(mix64(1), 0x5692_161D_100B_05E5);
    }

    #[test]
    fn streams_uncorrelated() {
        let n = 20_000;
        let mut a = RngStream::new(9, 0).rng();
        let mut b = RngStream::new(9, 1).rng();
        let xs: Vec<f64> = (0..n).map(|_| a.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.random::<f64>() - 0.5).collect();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let corr = cov / (1.0 / 12.0);
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
