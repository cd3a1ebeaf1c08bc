//! Attribution methods: saliency, integrated and expected gradients, feature
//! ablation, occlusion, and inverse multiscale occlusion (IMO) with its
//! minimum-variance combination across window sizes.
//!
//! Per-baseline and per-block evaluations may run in parallel, but every
//! reduction (means, variances, coverage averages) runs in index order, so
//! results are bit-identical regardless of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_flux, score, score_gradient, Scorer};
use crate::spectrum::Spectrum;

/// The six attribution methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Saliency,
    Ig,
    Eg,
    Fa,
    Occlusion,
    Imo,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Saliency,
        Method::Ig,
        Method::Eg,
        Method::Fa,
        Method::Occlusion,
        Method::Imo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::Ig => "ig",
            Method::Eg => "eg",
            Method::Fa => "fa",
            Method::Occlusion => "occlusion",
            Method::Imo => "imo",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::input(format!("unknown attribution method {s:?}")))
    }
}

/// Baselines reconstructed at the input redshift, each with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEnsemble {
    reconstructions: Vec<Vec<f64>>,
    scores: Vec<f64>,
    source_ids: Vec<String>,
    redshift: f64,
}

impl BaselineEnsemble {
    pub fn new(
        reconstructions: Vec<Vec<f64>>,
        scores: Vec<f64>,
        source_ids: Vec<String>,
        redshift: f64,
    ) -> Result<Self> {
        if reconstructions.is_empty() {
            return Err(Error::input("baseline ensemble is empty"));
        }
        if scores.len() != reconstructions.len() || source_ids.len() != reconstructions.len() {
            return Err(Error::input(format!(
                "ensemble has {} reconstructions, {} scores and {} source ids",
                reconstructions.len(),
                scores.len(),
                source_ids.len()
            )));
        }
        let n = reconstructions[0].len();
        if reconstructions.iter().any(|r| r.len() != n) {
            return Err(Error::input("reconstructions differ in length"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::input("baseline scores must be finite"));
        }
        Ok(BaselineEnsemble {
            reconstructions,
            scores,
            source_ids,
            redshift,
        })
    }

    /// Scores each reconstruction with `model`.
    pub fn scored(
        model: &(impl Scorer + ?Sized),
        reconstructions: Vec<Vec<f64>>,
        source_ids: Vec<String>,
        redshift: f64,
    ) -> Result<Self> {
        let scores = reconstructions
            .iter()
            .map(|r| score(model, r))
            .collect::<Result<Vec<_>>>()?;
        BaselineEnsemble::new(reconstructions, scores, source_ids, redshift)
    }

    pub fn len(&self) -> usize {
        self.reconstructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reconstructions.is_empty()
    }

    pub fn reconstructions(&self) -> &[Vec<f64>] {
        &self.reconstructions
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn source_ids(&self) -> &[String] {
        &self.source_ids
    }

    pub fn redshift(&self) -> f64 {
        self.redshift
    }
}

/// Strictly increasing occlusion window sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSet(Vec<usize>);

impl WindowSet {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::input("window set is empty"));
        }
        if sizes[0] == 0 {
            return Err(Error::input("window sizes must be positive"));
        }
        if sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(format!(
                "window sizes must be strictly increasing, got {sizes:?}"
            )));
        }
        Ok(WindowSet(sizes))
    }

    /// Windows 1, 4, 16, 64.
    pub fn standard() -> Self {
        WindowSet(vec![1, 4, 16, 64])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_fits(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&w) if w > n => Err(Error::input(format!(
                "window {w} exceeds the spectrum length {n}"
            ))),
            _ => Ok(()),
        }
    }
}

/// How occlusion blocks advance across the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StridePolicy {
    /// Stride equals the window: non-overlapping chunks.
    #[default]
    Disjoint,
    /// Stride 1 with coverage averaging.
    Dense,
}

impl StridePolicy {
    pub fn stride(self, window: usize) -> usize {
        match self {
            StridePolicy::Disjoint => window,
            StridePolicy::Dense => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StridePolicy::Disjoint => "disjoint",
            StridePolicy::Dense => "dense",
        }
    }
}

impl std::str::FromStr for StridePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disjoint" => Ok(StridePolicy::Disjoint),
            "dense" => Ok(StridePolicy::Dense),
            other => Err(Error::input(format!(
                "unknown stride policy {other:?} (expected disjoint or dense)"
            ))),
        }
    }
}

/// Per-window IMO attributions, their spread over baselines, and the combination.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionStack {
    pub windows: WindowSet,
    pub stride: StridePolicy,
    /// K rows of length N: mean over baselines.
    pub per_window_mean: Vec<Vec<f64>>,
    /// K rows of length N: unbiased sample variance over baselines.
    pub per_window_var: Vec<Vec<f64>>,
    /// Indexed `[k][j][i]` (window, baseline, pixel).
    pub per_baseline: Option<Vec<Vec<Vec<f64>>>>,
    pub combined: Vec<f64>,
}

impl AttributionStack {
    pub fn len(&self) -> usize {
        self.combined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combined.is_empty()
    }

    /// Standard deviation of the combined estimate, `sqrt(1 / Σ_k 1/σ²_k)`,
    /// using the same variance floor as the combination.
    pub fn combined_spread(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (floor, _) = variance_floor(&self.per_window_var, i);
                let precision: f64 = self
                    .per_window_var
                    .iter()
                    .map(|row| 1.0 / row[i].max(floor))
                    .sum();
                (1.0 / precision).sqrt()
            })
            .collect()
    }
}

/// Gradient of the score at `x`.
pub fn saliency(model: &(impl Scorer + ?Sized), x: &[f64]) -> Result<Vec<f64>> {
    score_gradient(model, x)
}

/// Path-integrated gradients from `baseline` to `x`.
///
/// The path integral uses the trapezoidal rule on `steps` evenly spaced
/// points, both endpoints included.
pub fn integrated_gradients(
    model: &(impl Scorer + ?Sized),
    x: &[f64],
    baseline: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    check_flux(model, x, "input")?;
    check_flux(model, baseline, "baseline")?;
    if steps < 2 {
        return Err(Error::input(format!(
            "integrated gradients needs at least 2 steps, got {steps}"
        )));
    }
    let n = x.len();
    let delta: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mut point = vec![0.0; n];
    let mut integral = vec![0.0; n];
    let last = steps - 1;
    for step in 0..steps {
        let alpha = step as f64 / last as f64;
        for ((p, b), d) in point.iter_mut().zip(baseline).zip(&delta) {
            *p = b + alpha * d;
        }
        let grad = score_gradient(model, &point)?;
        let weight = if step == 0 || step == last { 0.5 } else { 1.0 };
        for (acc, g) in integral.iter_mut().zip(&grad) {
            *acc += weight * g;
        }
    }
    Ok(integral
        .iter()
        .zip(&delta)
        .map(|(acc, d)| d * (acc / last as f64))
        .collect())
}

/// Integrated gradients averaged over every baseline in the ensemble.
///
/// Runs the full path integral per baseline rather than sampling a single
/// interpolation point per baseline.
pub fn expected_gradients(
    model: &(impl Scorer + ?Sized),
    x: &[f64],
    ensemble: &BaselineEnsemble,
    steps: usize,
) -> Result<Vec<f64>> {
    if ensemble.is_empty() {
        return Err(Error::input("expected gradients needs at least one baseline"));
    }
    let per_baseline = ensemble
        .reconstructions()
        .par_iter()
        .map(|b| integrated_gradients(model, x, b, steps))
        .collect::<Result<Vec<_>>>()?;
    Ok(running_mean(&per_baseline))
}

/// `FA_i = score(x) - score(x with pixel i taken from the baseline)`.
pub fn feature_ablation(
    model: &(impl Scorer + ?Sized),
    x: &[f64],
    baseline: &[f64],
) -> Result<Vec<f64>> {
    check_flux(model, x, "input")?;
    check_flux(model, baseline, "baseline")?;
    let reference = score(model, x)?;
    let blocks = blocks(x.len(), 1, 1);
    let block_scores = paste_scores(model, x, baseline, &blocks)?;
    Ok(block_scores.iter().map(|s| reference - s).collect())
}

/// Forward occlusion: blocks of `x` replaced by the baseline.
///
/// Each block's score drop is spread evenly over its pixels; pixels covered
/// by several blocks (`stride < window`) average their contributions.
pub fn occlusion(
    model: &(impl Scorer + ?Sized),
    x: &[f64],
    baseline: &[f64],
    window: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    check_flux(model, x, "input")?;
    check_flux(model, baseline, "baseline")?;
    check_window(window, stride, x.len())?;
    let reference = score(model, x)?;
    let blocks = blocks(x.len(), window, stride);
    let drops: Vec<f64> = paste_scores(model, x, baseline, &blocks)?
        .iter()
        .map(|s| reference - s)
        .collect();
    Ok(spread_over_blocks(x.len(), &blocks, &drops))
}

/// Inverse occlusion: blocks of `x` pasted into the baseline reconstruction.
///
/// `recon_score` must be the model's score of `recon`. A block `[i, u)`
/// contributes `(recon_score - score(pasted)) / (u - i)` to each of its pixels.
pub fn inverse_occlusion(
    model: &(impl Scorer + ?Sized),
    x: &[f64],
    recon: &[f64],
    recon_score: f64,
    window: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    check_flux(model, x, "input")?;
    check_flux(model, recon, "reconstruction")?;
    check_window(window, stride, x.len())?;
    let blocks = blocks(x.len(), window, stride);
    let drops: Vec<f64> = paste_scores(model, recon, x, &blocks)?
        .iter()
        .map(|s| recon_score - s)
        .collect();
    Ok(spread_over_blocks(x.len(), &blocks, &drops))
}

/// Inverse multiscale occlusion over every window and baseline.
pub fn imo(
    model: &(impl Scorer + ?Sized),
    x: &Spectrum,
    ensemble: &BaselineEnsemble,
    windows: &WindowSet,
    stride: StridePolicy,
) -> Result<AttributionStack> {
    if ensemble.is_empty() {
        return Err(Error::input("IMO needs at least one baseline"));
    }
    if ensemble.redshift() != x.redshift() {
        return Err(Error::input(format!(
            "ensemble was reconstructed at z = {} but the input is at z = {}",
            ensemble.redshift(),
            x.redshift()
        )));
    }
    let flux = x.flux();
    check_flux(model, flux, "input")?;
    windows.check_fits(flux.len())?;

    let jobs: Vec<(usize, usize)> = (0..windows.len())
        .flat_map(|k| (0..ensemble.len()).map(move |j| (k, j)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(k, j)| {
            let w = windows.sizes()[k];
            inverse_occlusion(
                model,
                flux,
                &ensemble.reconstructions()[j],
                ensemble.scores()[j],
                w,
                stride.stride(w),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let m = ensemble.len();
    let mut per_baseline: Vec<Vec<Vec<f64>>> = Vec::with_capacity(windows.len());
    let mut rows = rows.into_iter();
    for _ in 0..windows.len() {
        per_baseline.push(rows.by_ref().take(m).collect());
    }
    let (per_window_mean, per_window_var): (Vec<_>, Vec<_>) =
        per_baseline.iter().map(|b| mean_and_variance(b)).unzip();
    let combined = combine_min_variance(&per_window_mean, &per_window_var)?;
    Ok(AttributionStack {
        windows: windows.clone(),
        stride,
        per_window_mean,
        per_window_var,
        per_baseline: Some(per_baseline),
        combined,
    })
}

/// Inverse-variance weighted mean of the per-window rows, pixel by pixel.
///
/// Variances are floored at `1e-12 * (max_k v_k + 1)`; when every variance at
/// a pixel sits at or below the floor the plain mean is returned.
pub fn combine_min_variance(means: &[Vec<f64>], variances: &[Vec<f64>]) -> Result<Vec<f64>> {
    if means.is_empty() {
        return Err(Error::input("nothing to combine"));
    }
    if means.len() != variances.len() {
        return Err(Error::input(format!(
            "{} mean rows but {} variance rows",
            means.len(),
            variances.len()
        )));
    }
    let n = means[0].len();
    if means.iter().chain(variances).any(|r| r.len() != n) {
        return Err(Error::input("mean and variance rows differ in length"));
    }
    if variances.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(Error::input("variances must be non-negative"));
    }
    if means.len() == 1 {
        return Ok(means[0].clone());
    }
    let k = means.len() as f64;
    Ok((0..n)
        .map(|i| {
            let (floor, all_floored) = variance_floor(variances, i);
            let (lo, hi) = means.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[i]), hi.max(r[i]))
            });
            if all_floored {
                return (means.iter().map(|r| r[i]).sum::<f64>() / k).clamp(lo, hi);
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for (m, v) in means.iter().zip(variances) {
                let w = 1.0 / v[i].max(floor);
                num += m[i] * w;
                den += w;
            }
            // rounding can push a convex combination a hair outside its hull
            (num / den).clamp(lo, hi)
        })
        .collect())
}

fn variance_floor(variances: &[Vec<f64>], i: usize) -> (f64, bool) {
    let vmax = variances.iter().map(|r| r[i]).fold(0.0f64, f64::max);
    let floor = 1e-12 * (vmax + 1.0);
    (floor, vmax <= floor)
}

fn check_window(window: usize, stride: usize, n: usize) -> Result<()> {
    if window == 0 || window > n {
        return Err(Error::input(format!(
            "window must be in 1..={n}, got {window}"
        )));
    }
    if stride == 0 || stride > window {
        return Err(Error::input(format!(
            "stride must be in 1..={window}, got {stride}"
        )));
    }
    Ok(())
}

/// Half-open blocks `[i, min(i + window, n))` for `i = 0, stride, 2·stride, …`.
pub fn blocks(n: usize, window: usize, stride: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(stride.max(1))
        .map(|i| (i, (i + window).min(n)))
        .collect()
}

/// Scores `base` with each block replaced by the matching slice of `source`.
fn paste_scores(
    model: &(impl Scorer + ?Sized),
    base: &[f64],
    source: &[f64],
    blocks: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut work = base.to_vec();
    blocks
        .iter()
        .map(|&(i, u)| {
            work[i..u].copy_from_slice(&source[i..u]);
            let s = model.score(&work);
            work[i..u].copy_from_slice(&base[i..u]);
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::Numerical(format!(
                    "score of block [{i}, {u}) is not finite"
                )))
            }
        })
        .collect()
}

fn spread_over_blocks(n: usize, blocks: &[(usize, usize)], drops: &[f64]) -> Vec<f64> {
    let mut total = vec![0.0; n];
    let mut coverage = vec![0u32; n];
    for (&(i, u), d) in blocks.iter().zip(drops) {
        let share = d / (u - i) as f64;
        for p in i..u {
            total[p] += share;
            coverage[p] += 1;
        }
    }
    total
        .iter()
        .zip(&coverage)
        .map(|(t, &c)| t / c as f64)
        .collect()
}

/// Elementwise running mean; identical rows reproduce themselves exactly.
fn running_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    mean_and_variance(rows).0
}

/// Welford mean and unbiased variance over rows, accumulated in row order.
fn mean_and_variance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows[0].len();
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for (j, row) in rows.iter().enumerate() {
        let count = (j + 1) as f64;
        for ((m, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = v - *m;
            *m += delta / count;
            *s += delta * (v - *m);
        }
    }
    let var = if rows.len() < 2 {
        vec![0.0; n]
    } else {
        let denom = (rows.len() - 1) as f64;
        m2.iter().map(|s| s / denom).collect()
    };
    (mean, var)
}
