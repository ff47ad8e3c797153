use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernels::Dataset;

pub const DEFAULT_MOONS_SAMPLES: usize = 300;
pub const DEFAULT_MOONS_NOISE: f64 = 0.08;
pub const DEFAULT_MOONS_SEED: u64 = 0;

/// Two interleaved half circles of radius 1.
///
/// The first `n/2` samples lie on the upper arc centred at the origin
/// (`(cos θ, sin θ)`), the rest on the lower arc centred at `(1, 0.5)`
/// traversed downward (`(1 − cos θ, 0.5 − sin θ)`), with `θ` evenly spaced
/// over `[0, π]`. Isotropic gaussian noise of scale `noise_sigma` is added
/// to every coordinate. Labels are 0 for the upper arc and 1 for the lower.
pub fn generate_two_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("two moons needs a positive even sample count, got {n}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise must be >= 0, got {noise_sigma}")));
    }
    let half = n / 2;
    let angle = |k: usize| if half > 1 { PI * k as f64 / (half - 1) as f64 } else { 0.0 };
    let mut x = DMatrix::from_fn(2, n, |r, j| {
        let (k, lower) = if j < half { (j, false) } else { (j - half, true) };
        let t = angle(k);
        match (r, lower) {
            (0, false) => t.cos(),
            (_, false) => t.sin(),
            (0, true) => 1.0 - t.cos(),
            (_, true) => 0.5 - t.sin(),
        }
    });
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        for j in 0..n {
            for r in 0..2 {
                x[(r, j)] += normal.sample(&mut rng);
            }
        }
    }
    let labels = (0..n).map(|j| usize::from(j >= half)).collect();
    Dataset::new(x, Some(labels))
}
