//! Spatially uniform Brownian increments with reproducible per-realization
//! streams.
//!
//! Realization `m` reads ChaCha stream `m` under the ensemble seed; step `s`
//! starts at a fixed word offset inside that stream. An increment therefore
//! depends only on `(seed, m, step)` and never on evaluation order or on how
//! realizations are split across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Words reserved per fine step inside a realization's stream; the normal
/// sampler never consumes more than a handful.
const WORDS_PER_STEP: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WienerEnsemble {
    realizations: usize,
    dim: usize,
    seed: u64,
    refinement: usize,
}

impl WienerEnsemble {
    pub fn new(realizations: usize, dim: usize, seed: u64) -> Result<Self> {
        if realizations == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one realization".into()));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("bad noise dimension {dim}")));
        }
        Ok(Self {
            realizations,
            dim,
            seed,
            refinement: 1,
        })
    }

    /// Build each step's increment as the sum of `refinement` finer increments.
    /// Runs whose `dt * refinement` agree then share Brownian paths exactly
    /// (common random numbers across time-step levels).
    pub fn with_refinement(mut self, refinement: usize) -> Self {
        self.refinement = refinement.max(1);
        self
    }

    pub fn realizations(&self) -> usize {
        self.realizations
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    /// Standard normal vector for one fine step of realization `m`.
    pub fn unit_normal(&self, m: usize, fine_step: u64) -> [f64; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(m as u64);
        rng.set_word_pos(fine_step as u128 * WORDS_PER_STEP);
        let mut out = [0.0; 3];
        for v in out.iter_mut().take(self.dim) {
            *v = rng.sample(StandardNormal);
        }
        out
    }

    /// `dW ~ N(0, dt I)` for realization `m` over coarse step `step`.
    pub fn increment(&self, m: usize, step: u64, dt: f64) -> [f64; 3] {
        let r = self.refinement as u64;
        let scale = (dt / r as f64).sqrt();
        let mut out = [0.0; 3];
        for j in 0..r {
            let z = self.unit_normal(m, step * r + j);
            for (o, zi) in out.iter_mut().zip(z) {
                *o += scale * zi;
            }
        }
        out
    }

    /// Increments of every realization for one step.
    pub fn sample_increments(&self, step: u64, dt: f64) -> Result<Vec<[f64; 3]>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok((0..self.realizations).map(|m| self.increment(m, step, dt)).collect())
    }
}
