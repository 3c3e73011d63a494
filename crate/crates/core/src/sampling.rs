//! Seeded random draws. Every stochastic routine in the crate takes a `u64` seed
//! and builds its generator here, so results are reproducible across runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for sub-task `stream` of a seeded computation.
pub fn sub_rng(seed: u64, stream: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream.wrapping_add(1));
    r
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform point on the unit sphere in `R^dim` (`dim ≥ 1`).
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut v = normal_vec(rng, dim);
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            v.iter_mut().for_each(|e| *e /= n);
            return v;
        }
    }
}

pub fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(lo..hi)).collect()
}
