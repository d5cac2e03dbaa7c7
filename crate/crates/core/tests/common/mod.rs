#![allow(dead_code)]

use chic_core::sim::gen_design;
use chic_core::Dataset;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Logistic data with the given true coefficients on independent normals.
pub fn logistic_data(n: usize, beta: &[f64], seed: u64) -> Dataset {
    let x = gen_design(n, beta.len(), 0.3, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFFFF);
    let y = DVector::from_fn(n, |i, _| {
        let eta: f64 = -0.2 + (0..beta.len()).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
        f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
    });
    Dataset::unnamed(y, x).unwrap()
}

/// Poisson data with the given true coefficients.
pub fn poisson_data(n: usize, beta: &[f64], seed: u64) -> Dataset {
    use rand_distr::{Distribution, Poisson};
    let x = gen_design(n, beta.len(), 0.2, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let y = DVector::from_fn(n, |i, _| {
        let eta: f64 = 0.3 + (0..beta.len()).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
        Poisson::new(eta.exp()).unwrap().sample(&mut rng)
    });
    Dataset::unnamed(y, x).unwrap()
}

/// Gaussian data with unit noise.
pub fn gaussian_data(n: usize, beta: &[f64], seed: u64) -> Dataset {
    use rand_distr::StandardNormal;
    let x = gen_design(n, beta.len(), 0.2, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        1.0 + (0..beta.len()).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + e
    });
    Dataset::unnamed(y, x).unwrap()
}
