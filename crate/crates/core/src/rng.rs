//! Seeded random streams.
//!
//! Every run derives independent ChaCha streams from one seed, one per
//! purpose, so that enabling an attack (which consumes randomness for role
//! assignment and default decisions) never perturbs the population or the
//! buyer ordering of the same seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags for the independent streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Population = 1,
    Roles = 2,
    Ordering = 3,
    Defaults = 4,
}

pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Draws `n` values whose marginals are each `Uniform[lo, hi)`, one per
/// equal-width stratum, in shuffled order.
pub fn stratified_uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut strata: Vec<usize> = (0..n).collect();
    strata.shuffle(rng);
    let width = hi - lo;
    strata
        .into_iter()
        .map(|s| lo + width * (s as f64 + rng.gen::<f64>()) / n as f64)
        .collect()
}
