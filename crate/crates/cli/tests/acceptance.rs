//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use imo_core::io::{sample_baselines, Dataset};
use imo_core::model::{finite_difference_gradient, Template, FD_REL_STEP};
use imo_core::{
    expected_gradients, feature_ablation, imo, integrated_gradients, inverse_occlusion, occlusion,
    score, score_gradient, AttributionStack, BaselineEnsemble, GaussianLine, GridSpec,
    LatentVector, ModelBundle, Scorer, Spectrum, StridePolicy, SynthConfig, SyntheticSuite,
    ToyModel, ToyModelSpec, WindowSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn random_flux(model: &ToyModel, rng: &mut ChaCha8Rng, spread: f64, noise: f64) -> Vec<f64> {
    let spec = model.spec();
    let latent: Vec<f64> = spec
        .latent_mean
        .iter()
        .zip(&spec.latent_variances)
        .map(|(m, v)| m + spread * v.sqrt() * rng.random_range(-1.0..1.0))
        .collect();
    let mut flux = model
        .decode(&LatentVector::new(latent).unwrap(), model.redshift())
        .unwrap();
    for f in &mut flux {
        *f += noise * rng.random_range(-1.0..1.0);
    }
    flux
}

/// Default synthetic scenario shared by the attribution criteria.
struct Scenario {
    suite: SyntheticSuite,
    clean: AttributionStack,
    calibration: AttributionStack,
    double_peak: AttributionStack,
}

impl Scenario {
    fn build() -> Self {
        let suite =
            SyntheticSuite::build(&SynthConfig::default(), 100, (0.0, 0.2), 0.1, SEED).unwrap();
        let model = ToyModel::new(suite.model.clone(), 0.1).unwrap();
        let dataset = Dataset::from_spectra(suite.dataset.clone());
        let ensemble = sample_baselines(&dataset, 8, &model, 0.1, SEED).unwrap();
        let windows = WindowSet::standard();
        let run = |x: &Spectrum| imo(&model, x, &ensemble, &windows, StridePolicy::Disjoint).unwrap();
        Scenario {
            clean: run(&suite.clean),
            calibration: run(&suite.calibration.0),
            double_peak: run(&suite.double_peak.0),
            suite,
        }
    }
}

fn gradient_oracle() -> Outcome {
    let model = ToyModel::new(ToyModelSpec::galaxy_default(), 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_flux(&model, &mut rng, 4.0, 0.1);
        let g = score_gradient(&model, &x).unwrap();
        let fd = finite_difference_gradient(&model, &x, FD_REL_STEP);
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(max_abs_diff(&g, &fd) / scale);
    }
    ensure(worst < 1e-5, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.3e} over 100 inputs"))
}

fn ig_completeness() -> Outcome {
    let model = ToyModel::new(ToyModelSpec::galaxy_default(), 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = random_flux(&model, &mut rng, 5.0, 0.1);
        let b = random_flux(&model, &mut rng, 1.0, 0.0);
        let ig = integrated_gradients(&model, &x, &b, 512).unwrap();
        let delta = score(&model, &x).unwrap() - score(&model, &b).unwrap();
        let gap = (ig.iter().sum::<f64>() - delta).abs() / (1.0 + delta.abs());
        worst = worst.max(gap);
    }
    ensure(worst < 1e-8, || format!("worst scaled gap {worst:.3e}"))?;
    Ok(format!("worst |ΣIG − Δ|/(1+|Δ|) = {worst:.3e} over 50 pairs"))
}

fn equivalences() -> Outcome {
    let model = ToyModel::new(ToyModelSpec::galaxy_default(), 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_flux(&model, &mut rng, 4.0, 0.1);
    let b = random_flux(&model, &mut rng, 1.0, 0.0);

    let occ = occlusion(&model, &x, &b, 1, 1).unwrap();
    let fa = feature_ablation(&model, &x, &b).unwrap();
    ensure(occ == fa, || "occlusion(W=1) differs from feature ablation".into())?;

    let ig = integrated_gradients(&model, &x, &b, 512).unwrap();
    let same = BaselineEnsemble::scored(&model, vec![b.clone(); 8], vec!["b".into(); 8], 0.1).unwrap();
    let eg = expected_gradients(&model, &x, &same, 512).unwrap();
    ensure(eg == ig, || "EG over identical baselines differs from IG".into())?;

    let single = BaselineEnsemble::scored(&model, vec![b.clone()], vec!["b".into()], 0.1).unwrap();
    let spectrum = Spectrum::new(x.clone(), model.wavelengths().to_vec(), 0.1).unwrap();
    let windows = WindowSet::standard();
    for policy in [StridePolicy::Disjoint, StridePolicy::Dense] {
        let stack = imo(&model, &spectrum, &single, &windows, policy).unwrap();
        for (k, &w) in windows.sizes().iter().enumerate() {
            let io = inverse_occlusion(&model, &x, &b, single.scores()[0], w, policy.stride(w))
                .unwrap();
            ensure(stack.per_window_mean[k] == io, || {
                format!("M=1 IMO mean differs from inverse occlusion at W={w} ({policy:?})")
            })?;
        }
    }
    Ok("occlusion(W=1)=FA, EG(identical)=IG, IMO(M=1)=inverse occlusion, all bit-exact".into())
}

fn null_test(s: &Scenario) -> Outcome {
    let null = max_abs(&s.clean.combined);
    let cal = max_abs(&s.calibration.combined);
    let dp = max_abs(&s.double_peak.combined);
    let ratio = cal.min(dp) / null;
    ensure(ratio >= 10.0, || format!("ratio {ratio:.2} (null {null:.3e})"))?;
    Ok(format!(
        "null {null:.3e}, calibration {cal:.3e}, double peak {dp:.3e}, ratio {ratio:.1}"
    ))
}

fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { v[i - 1] };
            let right = if i + 1 == n { f64::NEG_INFINITY } else { v[i + 1] };
            v[i] > left && v[i] >= right
        })
        .collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

fn localized_anomaly(s: &Scenario) -> Outcome {
    let label = &s.suite.double_peak.1;
    let row = &s.double_peak.per_window_mean[0];
    let mut top: Vec<usize> = local_maxima(row).into_iter().take(2).collect();
    top.sort();
    let mut peaks = label.peaks.clone();
    peaks.sort();
    ensure(top.len() == 2 && peaks.len() == 2, || format!("maxima {top:?}, peaks {peaks:?}"))?;
    let ok = top.iter().zip(&peaks).all(|(&a, &p)| a.abs_diff(p) <= 2);
    ensure(ok, || format!("top maxima {top:?} vs injected peaks {peaks:?}"))?;
    Ok(format!("W=1 top maxima {top:?}, injected peaks {peaks:?}"))
}

fn broad_anomaly(s: &Scenario) -> Outcome {
    let k = s.calibration.windows.sizes().iter().position(|&w| w == 64).unwrap();
    let row = &s.calibration.per_window_mean[k];
    let (a, b) = s.suite.calibration.1.affected[0];
    let n = row.len();
    let mean = |r: &[f64]| r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64;
    let blue = mean(&row[a..b]);
    let red = mean(&row[b..n]);
    let ratio = blue / red;
    ensure(ratio >= 5.0, || format!("blue/red ratio {ratio:.2}"))?;

    let wide = &s.double_peak.per_window_mean[k];
    let coarse = wide.chunks(64).all(|c| c.iter().all(|v| *v == c[0]));
    ensure(coarse, || "W=64 attribution varies inside a 64-pixel block".into())?;
    let blocks: Vec<usize> = s.suite.double_peak.1.peaks.iter().map(|p| p / 64).collect();
    Ok(format!(
        "blue/red |IMO_64| = {ratio:.1}; W=64 on the double peak is constant per block, both peaks in block {:?}",
        blocks
    ))
}

fn tiny_model() -> ToyModel {
    let spec = ToyModelSpec {
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
    };
    ToyModel::new(spec, 0.05).unwrap()
}

/// The inverse-occlusion loop written out directly, two-pass moments.
fn naive_imo(model: &ToyModel, x: &[f64], recons: &[Vec<f64>], windows: &[usize]) -> Vec<f64> {
    let n = x.len();
    let m = recons.len() as f64;
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for &w in windows {
        let rows: Vec<Vec<f64>> = recons
            .iter()
            .map(|r| {
                let p = Scorer::score(model, r);
                let mut t = vec![0.0; n];
                for i in (0..n).step_by(w) {
                    let u = (i + w).min(n);
                    let mut y = r.clone();
                    y[i..u].copy_from_slice(&x[i..u]);
                    let l = Scorer::score(model, &y);
                    for v in &mut t[i..u] {
                        *v = (p - l) / (u - i) as f64;
                    }
                }
                t
            })
            .collect();
        let mean: Vec<f64> = (0..n).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / m).collect();
        let var: Vec<f64> = (0..n)
            .map(|i| rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (m - 1.0))
            .collect();
        means.push(mean);
        vars.push(var);
    }
    (0..n)
        .map(|i| {
            let eps = 1e-12 * (vars.iter().map(|v| v[i]).fold(0.0, f64::max) + 1.0);
            if vars.iter().all(|v| v[i] <= eps) {
                return means.iter().map(|mu| mu[i]).sum::<f64>() / means.len() as f64;
            }
            let w: Vec<f64> = vars.iter().map(|v| 1.0 / v[i].max(eps)).collect();
            means.iter().zip(&w).map(|(mu, w)| mu[i] * w).sum::<f64>() / w.iter().sum::<f64>()
        })
        .collect()
}

fn tiny_case() -> (ToyModel, Spectrum, BaselineEnsemble, Vec<Vec<f64>>) {
    let model = tiny_model();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let recons: Vec<Vec<f64>> = (0..6).map(|_| random_flux(&model, &mut rng, 2.0, 0.0)).collect();
    let mut x = random_flux(&model, &mut rng, 1.0, 0.05);
    x[5] += 1.0;
    x[11] -= 0.7;
    let spectrum = Spectrum::new(x, model.wavelengths().to_vec(), 0.05).unwrap();
    let ids = (0..6).map(|j| format!("b{j}")).collect();
    let ensemble = BaselineEnsemble::scored(&model, recons.clone(), ids, 0.05).unwrap();
    (model, spectrum, ensemble, recons)
}

fn brute_force() -> Outcome {
    let (model, spectrum, ensemble, recons) = tiny_case();
    let windows = [1, 2, 4, 8, 16];
    let stack = imo(
        &model,
        &spectrum,
        &ensemble,
        &WindowSet::new(windows.to_vec()).unwrap(),
        StridePolicy::Disjoint,
    )
    .unwrap();
    let naive = naive_imo(&model, spectrum.flux(), &recons, &windows);
    let d = max_abs_diff(&stack.combined, &naive);
    ensure(d < 1e-12, || format!("max difference {d:.3e}"))?;
    Ok(format!("N=16, W∈{{1,2,4,8,16}}: max difference {d:.3e}"))
}

fn run_compare(bin: &str, synth: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(bin)
        .arg("compare")
        .arg("--input")
        .arg(synth.join("double_peak.spec"))
        .arg("--dataset")
        .arg(synth.join("dataset"))
        .arg("--model")
        .arg(synth.join("model.toml"))
        .args(["--seed", "42", "--out"])
        .arg(out)
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("compare exited with {status}"))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_imo");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth = tmp.path().join("synth");
    let status = Command::new(bin)
        .args(["synth", "--seed", "42", "--out"])
        .arg(&synth)
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || "synth failed".into())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_compare(bin, &synth, &a)?;
    run_compare(bin, &synth, &b)?;
    let mut checked = Vec::new();
    for entry in fs::read_dir(&a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let name = name.to_string_lossy().into_owned();
        if !(name.ends_with(".result") || name.ends_with(".csv")) {
            continue;
        }
        let first = fs::read(a.join(&name)).map_err(|e| e.to_string())?;
        let second = fs::read(b.join(&name)).map_err(|e| e.to_string())?;
        ensure(first == second, || format!("{name} differs between runs"))?;
        checked.push(name);
    }
    ensure(checked.len() == 7, || format!("expected 6 results and a CSV, found {checked:?}"))?;
    Ok(format!("{} files byte-identical across two runs", checked.len()))
}

fn convexity(s: &Scenario) -> Outcome {
    let (model, spectrum, ensemble, _) = tiny_case();
    let tiny = imo(
        &model,
        &spectrum,
        &ensemble,
        &WindowSet::new(vec![1, 2, 4, 8, 16]).unwrap(),
        StridePolicy::Dense,
    )
    .unwrap();
    let cases = [
        ("clean", &s.clean),
        ("calibration", &s.calibration),
        ("double peak", &s.double_peak),
        ("n=16", &tiny),
    ];
    for (name, stack) in cases {
        for i in 0..stack.len() {
            let col = stack.per_window_mean.iter().map(|r| r[i]);
            let lo = col.clone().fold(f64::INFINITY, f64::min);
            let hi = col.fold(f64::NEG_INFINITY, f64::max);
            let c = stack.combined[i];
            ensure(lo <= c && c <= hi, || format!("{name} pixel {i}: {c} outside [{lo}, {hi}]"))?;
        }
    }
    Ok(format!("{} spectra, every pixel inside [min_k, max_k]", cases.len()))
}

fn report(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
        (o, _) => o,
    };
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} criterion {id}: {name}: {detail} [{:.2}s]", elapsed.as_secs_f64());
    ok
}

fn main() -> ExitCode {
    let start = Instant::now();
    let secs = |s| Some(Duration::from_secs(s));
    let mut ok = true;
    ok &= report(1, "gradient oracle", secs(5), gradient_oracle);
    ok &= report(2, "IG completeness", secs(10), ig_completeness);
    ok &= report(3, "method equivalences", None, equivalences);
    let built = Instant::now();
    let scenario = Scenario::build();
    println!("     scenario built in {:.2}s", built.elapsed().as_secs_f64());
    ok &= report(4, "IMO null test", None, || null_test(&scenario));
    ok &= report(5, "localized anomaly", None, || localized_anomaly(&scenario));
    ok &= report(6, "broad anomaly", None, || broad_anomaly(&scenario));
    ok &= report(7, "brute-force equivalence", None, brute_force);
    ok &= report(8, "determinism", None, determinism);
    ok &= report(9, "combiner convexity", None, || convexity(&scenario));
    let total = start.elapsed();
    let in_time = total < Duration::from_secs(120);
    println!(
        "{} total runtime {:.2}s (limit 120s)",
        if in_time { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    );
    if ok && in_time {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
