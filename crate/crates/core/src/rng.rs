//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! a master seed, so adding or removing one component never perturbs the
//! draws of another.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Exp1, StandardNormal};

pub type StreamRng = rand_chacha::ChaCha8Rng;

/// Stream tags used by the trainers.
pub mod stream {
    pub const ENCODER: u64 = 1;
    pub const CLASSIFIER: u64 = 2;
    pub const DISCRIMINATORS: u64 = 3;
    pub const BATCHES: u64 = 4;
    pub const PROJECTIONS: u64 = 5;
    pub const ESTIMATOR: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for `stream` from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    seeded(derive_seed(seed, stream))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// A draw from the flat Dirichlet distribution on the `n`-simplex.
pub fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    items.shuffle(rng);
}

/// A uniformly random permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
