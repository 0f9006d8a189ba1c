#![allow(dead_code)]

use gad_core::{EnsembleSample, LossFamily, LossSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub fn spec(family: LossFamily) -> LossSpec<f64> {
    LossSpec::with_default_epsilon(family)
}

/// Dirichlet(1, …, 1) weights.
pub fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).unwrap();
    let raw: Vec<f64> = (0..k).map(|_| gamma.sample(rng) + 1e-12).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|g| g / total).collect()
}

/// Target `±1` for classification families, uniform on `[-3, 3]` otherwise;
/// `K ∈ 1..=8`, predictions uniform on `[-3, 3]`, Dirichlet weights.
pub fn random_sample(rng: &mut ChaCha8Rng, family: LossFamily) -> EnsembleSample<f64> {
    let target = if family.is_classification() {
        if rng.random_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    } else {
        rng.random_range(-3.0..=3.0)
    };
    let k = rng.random_range(1..=8);
    let predictions = (0..k).map(|_| rng.random_range(-3.0..=3.0)).collect();
    EnsembleSample::new(target, predictions, dirichlet(rng, k)).unwrap()
}

/// Equal-weight sample with `K ∈ 2..=8`.
pub fn random_equal_sample(rng: &mut ChaCha8Rng) -> EnsembleSample<f64> {
    let target = rng.random_range(-3.0..=3.0);
    let k = rng.random_range(2..=8);
    let predictions = (0..k).map(|_| rng.random_range(-3.0..=3.0)).collect();
    EnsembleSample::equal_weights(target, predictions).unwrap()
}
