#![allow(dead_code)]

use imo_core::model::Template;
use imo_core::{GaussianLine, GridSpec, LatentVector, ModelBundle, ToyModel, ToyModelSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Three-template model on a 16-pixel grid.
pub fn tiny_spec() -> ToyModelSpec {
    ToyModelSpec {
        grid: GridSpec::Linear {
            start: 4000.0,
            stop: 8000.0,
            points: 16,
        },
        pivot: 6000.0,
        scale: 3000.0,
        templates: vec![
            Template {
                name: "constant".into(),
                polynomial: vec![1.0],
                bumps: vec![],
            },
            Template {
                name: "slope".into(),
                polynomial: vec![0.0, 1.0],
                bumps: vec![],
            },
            Template {
                name: "bump".into(),
                polynomial: vec![],
                bumps: vec![GaussianLine::new(6000.0, 1.0, 400.0)],
            },
        ],
        latent_mean: vec![1.0, -0.3, 0.5],
        latent_variances: vec![0.01, 0.004, 0.02],
    }
}

/// Decoded latent near the mean plus white noise.
pub fn random_flux(model: &ToyModel, rng: &mut ChaCha8Rng, latent_sigmas: f64, noise: f64) -> Vec<f64> {
    let spec = model.spec();
    let latent: Vec<f64> = spec
        .latent_mean
        .iter()
        .zip(&spec.latent_variances)
        .map(|(m, v)| m + latent_sigmas * v.sqrt() * rng.random_range(-1.0..1.0))
        .collect();
    let mut flux = model
        .decode(&LatentVector::new(latent).unwrap(), model.redshift())
        .unwrap();
    let n = Normal::new(0.0, noise).unwrap();
    for f in &mut flux {
        *f += n.sample(rng);
    }
    flux
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
