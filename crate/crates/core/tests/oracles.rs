//! Model and attribution outputs checked against independent computations.

mod common;

use common::{max_abs_diff, norm, random_flux, tiny_spec};
use imo_core::model::{finite_difference_gradient, toy_decode, toy_encode, Template, FD_REL_STEP};
use imo_core::{
    combine_min_variance, imo, integrated_gradients, score, score_gradient, BaselineEnsemble,
    GaussianLine, GridSpec, LatentVector, ModelBundle, Scorer, Spectrum, StridePolicy, ToyModel,
    ToyModelSpec, WindowSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradient_matches_central_differences() {
    let model = ToyModel::new(ToyModelSpec::galaxy_default(), 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_flux(&model, &mut rng, 4.0, 0.1);
        let g = score_gradient(&model, &x).unwrap();
        let fd = finite_difference_gradient(&model, &x, FD_REL_STEP);
        worst = worst.max(max_abs_diff(&g, &fd) / norm(&fd).max(1e-300));
    }
    assert!(worst < 1e-5, "relative error {worst:e}");
}

#[test]
fn score_matches_straight_line_recomputation() {
    let spec = ToyModelSpec::galaxy_default();
    let z = 0.07;
    let model = ToyModel::new(spec.clone(), z).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_flux(&model, &mut rng, 3.0, 0.05);
    // least squares via normal equations, solved with nalgebra's Cholesky
    let grid = spec.canonical_grid().unwrap();
    let b = spec.basis(&grid, z).unwrap();
    let xt = nalgebra::DVector::from_vec(x.clone());
    let s = (b.transpose() * &b)
        .cholesky()
        .unwrap()
        .solve(&(b.transpose() * xt));
    let mut expected = 0.0;
    for k in 0..spec.latent_dim() {
        let v = spec.latent_variances[k];
        let d = s[k] - spec.latent_mean[k];
        expected += -0.5 * d * d / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
    }
    let got = score(&model, &x).unwrap();
    assert!((got - expected).abs() < 1e-8 * (1.0 + expected.abs()), "{got} vs {expected}");
}

#[test]
fn two_template_encode_matches_cramer_solution() {
    let spec = ToyModelSpec {
        templates: vec![
            Template {
                name: "blue".into(),
                polynomial: vec![],
                bumps: vec![GaussianLine::new(5000.0, 1.0, 600.0)],
            },
            Template {
                name: "red".into(),
                polynomial: vec![],
                bumps: vec![GaussianLine::new(7000.0, 1.0, 600.0)],
            },
        ],
        latent_mean: vec![0.0, 0.0],
        latent_variances: vec![1.0, 1.0],
        ..ToyModelSpec::galaxy_default()
    };
    let z = 0.05;
    let grid = spec.canonical_grid().unwrap();
    let gauss = |l: f64, c: f64| (-0.5 * ((l / (1.0 + z) - c) / 600.0).powi(2)).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let flux: Vec<f64> = grid.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (l, f) in grid.iter().zip(&flux) {
            let (b1, b2) = (gauss(*l, 5000.0), gauss(*l, 7000.0));
            a11 += b1 * b1;
            a12 += b1 * b2;
            a22 += b2 * b2;
            r1 += b1 * f;
            r2 += b2 * f;
        }
        let det = a11 * a22 - a12 * a12;
        let expected = [(r1 * a22 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det];
        let got = toy_encode(&spec, &flux, z).unwrap();
        assert!(max_abs_diff(got.as_slice(), &expected) < 1e-10);
    }
}

#[test]
fn decoded_line_peaks_at_observed_wavelength() {
    let spec = ToyModelSpec {
        grid: GridSpec::Linear {
            start: 7000.0,
            stop: 7400.0,
            points: 4001,
        },
        templates: vec![Template {
            name: "halpha".into(),
            polynomial: vec![],
            bumps: vec![GaussianLine::new(6563.0, 1.0, 5.0)],
        }],
        latent_mean: vec![0.0],
        latent_variances: vec![1.0],
        ..ToyModelSpec::galaxy_default()
    };
    let flux = toy_decode(&spec, &LatentVector::new(vec![1.0]).unwrap(), 0.1).unwrap();
    let grid = spec.canonical_grid().unwrap();
    let peak = (0..flux.len()).max_by(|&a, &b| flux[a].total_cmp(&flux[b])).unwrap();
    assert!((grid[peak] - 7219.3).abs() < 0.05, "peak at {}", grid[peak]);
}

#[test]
fn ig_completeness_on_random_pairs() {
    let model = ToyModel::new(ToyModelSpec::galaxy_default(), 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let x = random_flux(&model, &mut rng, 5.0, 0.1);
        let b = random_flux(&model, &mut rng, 1.0, 0.0);
        let ig = integrated_gradients(&model, &x, &b, 512).unwrap();
        let delta = score(&model, &x).unwrap() - score(&model, &b).unwrap();
        let total: f64 = ig.iter().sum();
        assert!(
            (total - delta).abs() < 1e-8 * (1.0 + delta.abs()),
            "sum {total} vs delta {delta}"
        );
    }
}

/// Direct transcription of the inverse-occlusion loop, with two-pass moments.
fn naive_imo(
    model: &ToyModel,
    x: &[f64],
    recons: &[Vec<f64>],
    windows: &[usize],
    stride_of: impl Fn(usize) -> usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let n = x.len();
    let m = recons.len();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for &w in windows {
        let stride = stride_of(w);
        let mut rows = Vec::new();
        for r in recons {
            let p = Scorer::score(model, r);
            let mut acc = vec![0.0; n];
            let mut cover = vec![0usize; n];
            // every start below n, so dense strides end with short tail blocks
            for i in (0..n).step_by(stride) {
                let u = (i + w).min(n);
                let mut y = r.clone();
                y[i..u].copy_from_slice(&x[i..u]);
                let t = (p - Scorer::score(model, &y)) / (u - i) as f64;
                for q in i..u {
                    acc[q] += t;
                    cover[q] += 1;
                }
            }
            rows.push((0..n).map(|q| acc[q] / cover[q] as f64).collect::<Vec<_>>());
        }
        let mean: Vec<f64> = (0..n)
            .map(|q| rows.iter().map(|row| row[q]).sum::<f64>() / m as f64)
            .collect();
        let var: Vec<f64> = (0..n)
            .map(|q| {
                if m < 2 {
                    0.0
                } else {
                    rows.iter().map(|row| (row[q] - mean[q]).powi(2)).sum::<f64>()
                        / (m - 1) as f64
                }
            })
            .collect();
        means.push(mean);
        vars.push(var);
    }
    let combined = (0..n)
        .map(|q| {
            let vmax = vars.iter().map(|v| v[q]).fold(0.0, f64::max);
            let eps = 1e-12 * (vmax + 1.0);
            if vars.iter().all(|v| v[q] <= eps) {
                means.iter().map(|mu| mu[q]).sum::<f64>() / means.len() as f64
            } else {
                let num: f64 = means.iter().zip(&vars).map(|(mu, v)| mu[q] / v[q].max(eps)).sum();
                let den: f64 = vars.iter().map(|v| 1.0 / v[q].max(eps)).sum();
                num / den
            }
        })
        .collect();
    (means, vars, combined)
}

#[test]
fn imo_matches_naive_reimplementation_on_sixteen_pixels() {
    let spec = tiny_spec();
    let z = 0.05;
    let model = ToyModel::new(spec, z).unwrap();
    let grid = model.wavelengths().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let recons: Vec<Vec<f64>> = (0..5).map(|_| random_flux(&model, &mut rng, 2.0, 0.0)).collect();
    let mut x = random_flux(&model, &mut rng, 1.0, 0.05);
    x[6] += 1.0;
    x[7] -= 0.5;
    let spectrum = Spectrum::new(x.clone(), grid, z).unwrap();
    let ensemble =
        BaselineEnsemble::scored(&model, recons.clone(), (0..5).map(|j| format!("b{j}")).collect(), z)
            .unwrap();
    let windows = [1, 2, 4, 8, 16];
    for policy in [StridePolicy::Disjoint, StridePolicy::Dense] {
        let stack = imo(
            &model,
            &spectrum,
            &ensemble,
            &WindowSet::new(windows.to_vec()).unwrap(),
            policy,
        )
        .unwrap();
        let (means, vars, combined) = naive_imo(&model, &x, &recons, &windows, |w| policy.stride(w));
        for k in 0..windows.len() {
            let d = max_abs_diff(&stack.per_window_mean[k], &means[k]);
            assert!(d < 1e-12, "{policy:?} W={}: mean differs by {d:e}", windows[k]);
            assert!(max_abs_diff(&stack.per_window_var[k], &vars[k]) < 1e-12);
        }
        let d = max_abs_diff(&stack.combined, &combined);
        assert!(d < 1e-12, "{policy:?}: combined differs by {d:e}");
    }
}

#[test]
fn combiner_two_window_example() {
    let got = combine_min_variance(&[vec![0.0], vec![5.0]], &[vec![1.0], vec![4.0]]).unwrap();
    assert!((got[0] - 1.0).abs() < 1e-15);
}
