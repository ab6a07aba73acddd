//! Seeded Poisson shot noise.
//!
//! Every independent draw site gets its own ChaCha stream derived from the
//! user seed, so results do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Stream family tags keep fringe, blocking, and tomography draws apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    Fringe = 1,
    Blocking = 2,
    Tomography = 3,
}

/// Generator for draw `index` of family `kind` under `seed`.
pub fn substream(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 56) ^ index);
    rng
}

/// Poisson-distributed count with the given mean; zero mean yields zero.
pub fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 || !mean.is_finite() {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(rng) as u64
}

/// Mixes a run seed with a repetition index; used to fan out Monte Carlo trials.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.random()
}
