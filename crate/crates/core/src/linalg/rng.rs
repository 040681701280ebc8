//! Seeded, splittable randomness and the samplers built on it.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Reproducible 64-bit seeded generator.
///
/// Backed by ChaCha8, which is counter based: `split` derives independent
/// child streams from `(seed, stream)` without consuming parent state, so
/// sweeps over seeds and sub-streams are reproducible in any order.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator for the sub-stream `label`.
    pub fn split(&self, label: u64) -> Self {
        Self::with_stream(self.seed, splitmix64(self.stream ^ splitmix64(label)))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.standard_normal())
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw from the unit sphere in `R^n`, via a normalized Gaussian vector.
pub fn sample_unit_sphere(n: usize, rng: &mut SeededRng) -> DVector<f64> {
    assert!(n >= 1, "dimension must be positive");
    loop {
        let g = rng.normal_vector(n);
        let norm = g.norm();
        if norm > 0.0 && norm.is_finite() {
            return g / norm;
        }
    }
}

/// Draw from Dirichlet(1/2, ..., 1/2) as the squared coordinates of a sphere draw.
pub fn sample_dirichlet_half(n: usize, rng: &mut SeededRng) -> DVector<f64> {
    assert!(n >= 2, "Dirichlet sampler needs n >= 2");
    let u = sample_unit_sphere(n, rng);
    let w = u.map(|x| x * x);
    let s = w.sum();
    w / s
}
