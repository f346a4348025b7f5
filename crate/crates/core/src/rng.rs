//! Pinned, portable random number generation.
//!
//! All randomness comes from ChaCha8 keyed by a 64-bit master seed. A
//! (purpose, index) pair selects an independent ChaCha stream, so the
//! channel, noise and payload draws of trial `i` are fixed no matter which
//! detector consumes them or which worker thread runs the trial.
//!
//! Key derivation: the 256-bit key is four consecutive SplitMix64 outputs
//! seeded with the master seed. The stream id is `index * 4 + purpose`.
//! Uniforms use the top 53 bits of `next_u64`; Gaussians use Box–Muller.

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// What a random substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Channel = 0,
    Noise = 1,
    Payload = 2,
    Aux = 3,
}

/// SplitMix64 step; also used to mix seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives substreams from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSchedule {
    key: [u8; 32],
}

impl SeedSchedule {
    pub fn new(master: u64) -> Self {
        let mut s = master;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        Self { key }
    }

    pub fn stream(&self, purpose: Purpose, index: u64) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index.wrapping_mul(4).wrapping_add(purpose as u64));
        SimRng { inner: rng }
    }
}

/// Generator handed to the simulation code.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn from_seed(seed: u64, purpose: Purpose, index: u64) -> Self {
        SeedSchedule::new(seed).stream(purpose, index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent N(0, 1) samples via Box–Muller.
    pub fn gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * PI * u2;
        (r * t.cos(), r * t.sin())
    }

    /// Circularly-symmetric CN(0, 1).
    pub fn complex_gaussian(&mut self) -> Complex64 {
        let (a, b) = self.gaussian_pair();
        Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn bit(&mut self) -> u8 {
        (self.next_u64() >> 63) as u8
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) {
        self.inner.fill_bytes(out);
    }
}
