//! Counter-addressed Gaussian streams.
//!
//! Every draw is addressed by `(seed, trajectory, step, slot)`. The ChaCha
//! block counter is repositioned at the start of each step, so a draw depends
//! only on its coordinates and never on how many draws were made before it or
//! on which worker made them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Words reserved per step. Each Gaussian pair consumes four 32-bit words.
const WORDS_PER_STEP: u128 = 1 << 36;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    trajectory: u64,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCoordinates {
    pub seed: u64,
    pub trajectory: u64,
}

impl RngStream {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        Self {
            seed,
            trajectory,
            rng,
        }
    }

    pub fn coordinates(&self) -> StreamCoordinates {
        StreamCoordinates {
            seed: self.seed,
            trajectory: self.trajectory,
        }
    }

    /// Fills `out` with standard normals at coordinates `(step, 0..out.len())`.
    pub fn gaussians(&mut self, step: u64, out: &mut [f64]) {
        self.rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = box_muller(self.rng.next_u64(), self.rng.next_u64()).0;
        }
    }

    /// Uniform draw in `[0, 1)` at coordinates `(step, slot)`, separate from the
    /// Gaussian slots of the same step.
    pub fn uniform(&mut self, step: u64, slot: u64) -> f64 {
        self.rng
            .set_word_pos(step as u128 * WORDS_PER_STEP + WORDS_PER_STEP / 2 + 2 * slot as u128);
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

fn box_muller(x: u64, y: u64) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1] keeps the logarithm finite.
    let u1 = ((x >> 11) + 1) as f64 * SCALE;
    let u2 = (y >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Single standard normal from an arbitrary generator.
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    box_muller(rng.next_u64(), rng.next_u64()).0
}
