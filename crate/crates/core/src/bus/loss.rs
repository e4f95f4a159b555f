use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded Bernoulli message loss for fault injection.
#[derive(Clone, Debug)]
pub struct LossModel {
    probability: f64,
    rng: ChaCha8Rng,
}

impl LossModel {
    /// `probability` is clamped to `[0, 1]`.
    pub fn new(probability: f64, seed: u64) -> Self {
        Self { probability: probability.clamp(0.0, 1.0), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    /// Rolls for one transmission. `true` means the message is lost.
    pub fn drop_next(&mut self) -> bool {
        self.rng.gen_bool(self.probability)
    }
}
