//! Counter-addressed Gaussian noise.
//!
//! Every draw is a pure function of `(seed, stream, element)`: ChaCha8 keyed
//! by the seed, one ChaCha stream per diffusion step, and a fixed four-word
//! slot per element. Any partition of the elements across threads therefore
//! produces the same numbers.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const WORDS_PER_ELEMENT: u128 = 4;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    base: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Writes independent standard normals into the real and imaginary part
    /// of each slot; `out[j]` is element `offset + j` of `stream`.
    pub fn fill(&self, stream: u64, offset: u64, out: &mut [Complex64]) {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(offset as u128 * WORDS_PER_ELEMENT);
        for slot in out {
            // (0, 1] keeps the logarithm finite.
            let u1 = ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
            let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (TAU * u2).sin_cos();
            *slot = Complex64::new(r * c, r * s);
        }
    }
}

/// SplitMix64 finalizer, used to derive independent seeds for scenes and blocks.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
