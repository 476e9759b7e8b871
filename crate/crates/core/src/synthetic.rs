//! Planted low-rank test beds and Gaussian constructions.
//!
//! A planted instance is `Σ_λ σ_λ g_λ h_λ† + noise·E` with unit Gaussian
//! directions `g_λ`, `h_λ`, i.i.d. standard normal `E`, and `σ_λ` spread
//! linearly from `2s` down to `s`, where `s = scale · noise · √m`. For
//! `n > m` the noise singular values stay above `√m(√α − 1)·noise`, so `scale`
//! directly sets the data-to-noise separation.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedSpec {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub scale: f64,
    pub noise: f64,
}

impl Default for PlantedSpec {
    /// The 200×300, rank-8 bed used by the flip experiments.
    fn default() -> Self {
        Self {
            m: 200,
            n: 300,
            rank: 8,
            scale: 3.0,
            noise: 1.0,
        }
    }
}

impl PlantedSpec {
    pub fn new(m: usize, n: usize, rank: usize) -> Self {
        Self {
            m,
            n,
            rank,
            ..Self::default()
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    /// Planted singular values, descending.
    pub fn planted_sigma(&self) -> Vec<f64> {
        let base = self.scale * self.noise * (self.m as f64).sqrt();
        (0..self.rank)
            .map(|l| {
                let t = if self.rank > 1 {
                    l as f64 / (self.rank - 1) as f64
                } else {
                    0.0
                };
                base * (2.0 - t)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::invalid("planted matrix needs m, n >= 1"));
        }
        if self.rank > self.m.min(self.n) {
            return Err(Error::invalid("planted rank exceeds min(m, n)"));
        }
        if !(self.scale >= 0.0) || !(self.noise >= 0.0) {
            return Err(Error::invalid("scale and noise must be non-negative"));
        }
        Ok(())
    }

    pub fn generate(&self, rng: &mut SeededRng) -> Result<DMatrix<f64>> {
        self.validate()?;
        let mut t = gaussian_matrix(self.m, self.n, rng) * self.noise;
        for s in self.planted_sigma() {
            let g = unit_gaussian(self.m, rng);
            let h = unit_gaussian(self.n, rng);
            t.ger(s, &g, &h, 1.0);
        }
        Ok(t)
    }

    /// Instance `stream` of the ensemble rooted at `seed`.
    pub fn instance(&self, seed: u64, stream: u64) -> Result<DMatrix<f64>> {
        self.generate(&mut SeededRng::new(seed, stream))
    }
}

pub fn gaussian_matrix(m: usize, n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng))
}

fn unit_gaussian(len: usize, rng: &mut SeededRng) -> nalgebra::DVector<f64> {
    loop {
        let g = nalgebra::DVector::from_fn(len, |_, _| StandardNormal.sample(rng));
        let norm: f64 = g.norm();
        if norm > 0.0 {
            return g / norm;
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn haar_orthogonal(n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..n {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}
