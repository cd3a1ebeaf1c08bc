//! Scored-model abstraction and the analytic toy model.
//!
//! Every attribution method only needs a scalar score and, optionally, its
//! gradient; that is the [`Scorer`] trait. Baseline reconstruction also needs
//! an encoder, a redshift-aware decoder and a latent density, which together
//! form a [`ModelBundle`].
//!
//! [`ToyModel`] is a fully analytic bundle: the encoder is a least-squares
//! projection onto redshifted rest-frame templates, the decoder evaluates the
//! templates, and the latent density is a diagonal Gaussian.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectrum::{GaussianLine, GridSpec, Spectrum};

/// Relative step for the central finite-difference gradient fallback.
pub const FD_REL_STEP: f64 = 1e-5;

/// Ratio of smallest to largest singular value below which a basis is rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Coordinates in a model's latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("latent coordinate {i} is not finite")));
        }
        Ok(LatentVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        LatentVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A scalar anomaly score over flux vectors of fixed length.
///
/// Higher scores mean more probable (less anomalous) inputs. Implementations
/// may assume `flux.len() == self.input_len()`; the free functions [`score`]
/// and [`score_gradient`] validate before calling in.
pub trait Scorer: Sync {
    fn input_len(&self) -> usize;

    fn score(&self, flux: &[f64]) -> f64;

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    /// Exact gradient of [`Scorer::score`], when the model provides one.
    fn analytic_gradient(&self, _flux: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Encoder, redshift-aware decoder and latent log-density.
///
/// `score(x)` must equal `latent_log_prob(encode(x))`.
pub trait ModelBundle: Scorer {
    fn latent_dim(&self) -> usize;

    /// Canonical observed-frame grid every flux vector lives on.
    fn wavelengths(&self) -> &[f64];

    fn encode(&self, flux: &[f64]) -> Result<LatentVector>;

    /// Encodes a spectrum observed at its own redshift.
    ///
    /// Redshift-agnostic encoders can rely on the default, which ignores it.
    fn encode_observed(&self, spectrum: &Spectrum) -> Result<LatentVector> {
        self.encode(spectrum.flux())
    }

    fn decode(&self, latent: &LatentVector, z: f64) -> Result<Vec<f64>>;

    fn latent_log_prob(&self, latent: &LatentVector) -> f64;

    /// Stable identifier of the model parameters, recorded in result files.
    fn fingerprint(&self) -> String;
}

pub(crate) fn check_flux(model: &(impl Scorer + ?Sized), flux: &[f64], what: &str) -> Result<()> {
    if flux.len() != model.input_len() {
        return Err(Error::input(format!(
            "{what} has length {} but the model expects {}",
            flux.len(),
            model.input_len()
        )));
    }
    if let Some(i) = flux.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("{what} sample {i} is not finite")));
    }
    Ok(())
}

/// Validated score evaluation.
pub fn score(model: &(impl Scorer + ?Sized), flux: &[f64]) -> Result<f64> {
    check_flux(model, flux, "flux")?;
    let s = model.score(flux);
    if !s.is_finite() {
        return Err(Error::Numerical(format!("score is not finite ({s})")));
    }
    Ok(s)
}

/// Gradient of the score with respect to the flux.
///
/// Uses the model's analytic gradient when it has one and central finite
/// differences with step `FD_REL_STEP * max(1, |x_i|)` otherwise.
pub fn score_gradient(model: &(impl Scorer + ?Sized), flux: &[f64]) -> Result<Vec<f64>> {
    check_flux(model, flux, "flux")?;
    let grad = if model.has_analytic_gradient() {
        match model.analytic_gradient(flux) {
            Some(g) => g,
            None => finite_difference_gradient(model, flux, FD_REL_STEP),
        }
    } else {
        finite_difference_gradient(model, flux, FD_REL_STEP)
    };
    if grad.len() != flux.len() {
        return Err(Error::Numerical(format!(
            "gradient has length {} for input of length {}",
            grad.len(),
            flux.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("gradient is not finite".into()));
    }
    Ok(grad)
}

pub fn finite_difference_gradient(
    model: &(impl Scorer + ?Sized),
    flux: &[f64],
    rel_step: f64,
) -> Vec<f64> {
    let mut probe = flux.to_vec();
    (0..flux.len())
        .map(|i| {
            let h = rel_step * flux[i].abs().max(1.0);
            probe[i] = flux[i] + h;
            let up = model.score(&probe);
            probe[i] = flux[i] - h;
            let down = model.score(&probe);
            probe[i] = flux[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// One rest-frame template: polynomial continuum plus Gaussian bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    /// Coefficients in the normalized rest wavelength `u`, lowest order first.
    #[serde(default)]
    pub polynomial: Vec<f64>,
    #[serde(default)]
    pub bumps: Vec<GaussianLine>,
}

impl Template {
    pub fn eval(&self, rest_wavelength: f64, u: f64) -> f64 {
        let poly = self
            .polynomial
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * u + c);
        poly + self
            .bumps
            .iter()
            .map(|b| b.eval(rest_wavelength))
            .sum::<f64>()
    }
}

/// Parameters of the analytic toy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelSpec {
    pub grid: GridSpec,
    /// Rest wavelength mapped to `u = 0`.
    pub pivot: f64,
    /// Rest wavelength span mapped to `u = 1`.
    pub scale: f64,
    pub templates: Vec<Template>,
    pub latent_mean: Vec<f64>,
    pub latent_variances: Vec<f64>,
}

impl ToyModelSpec {
    /// Six templates: three continuum terms, narrow Balmer lines, narrow
    /// forbidden lines and a broad Balmer component.
    pub fn galaxy_default() -> Self {
        let w = crate::synth::NARROW_LINE_WIDTH;
        let balmer = vec![
            GaussianLine::new(6562.8, 1.0, w),
            GaussianLine::new(4861.3, 0.35, w),
            GaussianLine::new(4340.5, 0.15, w),
        ];
        let forbidden = vec![
            GaussianLine::new(3727.4, 0.6, w),
            GaussianLine::new(4958.9, 0.17, w),
            GaussianLine::new(5006.8, 0.5, w),
            GaussianLine::new(6548.1, 0.12, w),
            GaussianLine::new(6583.5, 0.35, w),
            GaussianLine::new(6716.4, 0.2, w),
            GaussianLine::new(6730.8, 0.15, w),
        ];
        let broad = vec![
            GaussianLine::new(6562.8, 1.0, 45.0),
            GaussianLine::new(4861.3, 0.35, 45.0),
        ];
        let templates = vec![
            Template {
                name: "continuum_constant".into(),
                polynomial: vec![1.0],
                bumps: vec![],
            },
            Template {
                name: "continuum_slope".into(),
                polynomial: vec![0.0, 1.0],
                bumps: vec![],
            },
            Template {
                name: "continuum_curvature".into(),
                polynomial: vec![0.0, 0.0, 1.0],
                bumps: vec![],
            },
            Template {
                name: "balmer_narrow".into(),
                polynomial: vec![],
                bumps: balmer,
            },
            Template {
                name: "forbidden_narrow".into(),
                polynomial: vec![],
                bumps: forbidden,
            },
            Template {
                name: "balmer_broad".into(),
                polynomial: vec![],
                bumps: broad,
            },
        ];
        ToyModelSpec {
            grid: GridSpec::desi_like(),
            pivot: 6000.0,
            scale: 3000.0,
            templates,
            latent_mean: vec![1.0, -0.3, 0.1, 1.0, 1.0, 0.0],
            latent_variances: vec![1e-2, 3.4e-3, 1e-4, 6.25e-2, 6.25e-2, 1e-3],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.templates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.latent_dim();
        if s == 0 {
            return Err(Error::input("toy model needs at least one template"));
        }
        if self.latent_mean.len() != s || self.latent_variances.len() != s {
            return Err(Error::input(format!(
                "latent_mean/latent_variances must have {s} entries (got {}/{})",
                self.latent_mean.len(),
                self.latent_variances.len()
            )));
        }
        if self.latent_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::input("latent_mean must be finite"));
        }
        if let Some(k) = self
            .latent_variances
            .iter()
            .position(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::input(format!(
                "latent variance {k} must be strictly positive"
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0 && self.pivot.is_finite()) {
            return Err(Error::input("pivot must be finite and scale positive"));
        }
        for t in &self.templates {
            if t.bumps.iter().any(|b| !(b.width > 0.0)) {
                return Err(Error::input(format!(
                    "template {} has a non-positive bump width",
                    t.name
                )));
            }
        }
        Ok(())
    }

    pub fn canonical_grid(&self) -> Result<Vec<f64>> {
        self.grid.build()
    }

    /// N×S matrix of templates evaluated at `grid / (1 + z)`.
    pub fn basis(&self, grid: &[f64], z: f64) -> Result<DMatrix<f64>> {
        check_redshift(z)?;
        let s = self.latent_dim();
        Ok(DMatrix::from_fn(grid.len(), s, |i, k| {
            let rest = grid[i] / (1.0 + z);
            let u = (rest - self.pivot) / self.scale;
            self.templates[k].eval(rest, u)
        }))
    }

    /// S×N least-squares projector onto the redshifted basis.
    pub fn projector(&self, grid: &[f64], z: f64) -> Result<DMatrix<f64>> {
        let basis = self.basis(grid, z)?;
        pseudo_inverse(basis, z)
    }

    /// Sets the latent density to the sample moments of `dataset` encoded at
    /// each spectrum's own redshift. `variance_floor` keeps every variance positive.
    pub fn fit_density(&mut self, dataset: &[Spectrum], variance_floor: f64) -> Result<()> {
        if dataset.len() < 2 {
            return Err(Error::input("density fit needs at least two spectra"));
        }
        if !(variance_floor > 0.0) {
            return Err(Error::input("variance floor must be positive"));
        }
        let s = self.latent_dim();
        let mut mean = vec![0.0; s];
        let mut m2 = vec![0.0; s];
        for (n, spectrum) in dataset.iter().enumerate() {
            let latent = toy_encode(self, spectrum.flux(), spectrum.redshift())?;
            for k in 0..s {
                let v = latent.as_slice()[k];
                let delta = v - mean[k];
                mean[k] += delta / (n + 1) as f64;
                m2[k] += delta * (v - mean[k]);
            }
        }
        let denom = (dataset.len() - 1) as f64;
        self.latent_mean = mean;
        self.latent_variances = m2.iter().map(|m| m / denom + variance_floor).collect();
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::input(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ToyModelSpec =
            toml::from_str(text).map_err(|e| Error::input(format!("toy model config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn check_redshift(z: f64) -> Result<()> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::input(format!("redshift must be >= 0, got {z}")));
    }
    Ok(())
}

fn pseudo_inverse(basis: DMatrix<f64>, z: f64) -> Result<DMatrix<f64>> {
    let (n, s) = basis.shape();
    if s > n {
        return Err(Error::DegenerateModel(format!(
            "{s} templates cannot be resolved on {n} pixels"
        )));
    }
    let svd = basis.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(max_sv > 0.0) || min_sv <= RANK_TOLERANCE * max_sv {
        return Err(Error::DegenerateModel(format!(
            "redshifted basis is rank deficient at z = {z} (singular values {min_sv:e}..{max_sv:e})"
        )));
    }
    svd.pseudo_inverse(0.0)
        .map_err(|e| Error::DegenerateModel(e.to_string()))
}

/// Least-squares latent coordinates of `flux` under the basis redshifted to `z`.
pub fn toy_encode(spec: &ToyModelSpec, flux: &[f64], z: f64) -> Result<LatentVector> {
    let grid = spec.canonical_grid()?;
    if flux.len() != grid.len() {
        return Err(Error::input(format!(
            "flux has length {} but the canonical grid has {}",
            flux.len(),
            grid.len()
        )));
    }
    let projector = spec.projector(&grid, z)?;
    LatentVector::new(apply_projector(&projector, flux))
}

/// `flux_i = Σ_k latent_k · template_k(grid_i / (1 + z))`.
pub fn toy_decode(spec: &ToyModelSpec, latent: &LatentVector, z: f64) -> Result<Vec<f64>> {
    let grid = spec.canonical_grid()?;
    let basis = spec.basis(&grid, z)?;
    apply_basis(&basis, latent)
}

fn apply_projector(projector: &DMatrix<f64>, flux: &[f64]) -> Vec<f64> {
    let s = projector.nrows();
    let mut out = vec![0.0; s];
    // column-major: each pixel's column is contiguous
    for (col, &x) in projector.as_slice().chunks_exact(s).zip(flux) {
        for (o, &e) in out.iter_mut().zip(col) {
            *o += e * x;
        }
    }
    out
}

fn apply_basis(basis: &DMatrix<f64>, latent: &LatentVector) -> Result<Vec<f64>> {
    if latent.len() != basis.ncols() {
        return Err(Error::input(format!(
            "latent has {} coordinates but the model has {}",
            latent.len(),
            basis.ncols()
        )));
    }
    let n = basis.nrows();
    let mut out = vec![0.0; n];
    for (col, &c) in basis.as_slice().chunks_exact(n).zip(latent.as_slice()) {
        for (o, &b) in out.iter_mut().zip(col) {
            *o += b * c;
        }
    }
    Ok(out)
}

/// The toy model instantiated for one analysis redshift.
#[derive(Debug, Clone)]
pub struct ToyModel {
    spec: ToyModelSpec,
    redshift: f64,
    grid: Vec<f64>,
    basis: DMatrix<f64>,
    projector: DMatrix<f64>,
    inv_var: Vec<f64>,
    log_norm: f64,
}

impl ToyModel {
    pub fn new(spec: ToyModelSpec, redshift: f64) -> Result<Self> {
        spec.validate()?;
        let grid = spec.canonical_grid()?;
        let basis = spec.basis(&grid, redshift)?;
        let projector = pseudo_inverse(basis.clone(), redshift)?;
        let inv_var = spec.latent_variances.iter().map(|v| 1.0 / v).collect();
        let log_norm = -0.5
            * spec
                .latent_variances
                .iter()
                .map(|v| (2.0 * PI * v).ln())
                .sum::<f64>();
        Ok(ToyModel {
            spec,
            redshift,
            grid,
            basis,
            projector,
            inv_var,
            log_norm,
        })
    }

    pub fn spec(&self) -> &ToyModelSpec {
        &self.spec
    }

    pub fn redshift(&self) -> f64 {
        self.redshift
    }

    /// Highest attainable score, reached at the latent mean.
    pub fn max_score(&self) -> f64 {
        self.log_norm
    }

    /// S×N encoder matrix at the analysis redshift.
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    fn log_prob_slice(&self, latent: &[f64]) -> f64 {
        let quad: f64 = latent
            .iter()
            .zip(&self.spec.latent_mean)
            .zip(&self.inv_var)
            .map(|((s, m), iv)| (s - m) * (s - m) * iv)
            .sum();
        self.log_norm - 0.5 * quad
    }
}

impl Scorer for ToyModel {
    fn input_len(&self) -> usize {
        self.grid.len()
    }

    fn score(&self, flux: &[f64]) -> f64 {
        self.log_prob_slice(&apply_projector(&self.projector, flux))
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn analytic_gradient(&self, flux: &[f64]) -> Option<Vec<f64>> {
        let latent = apply_projector(&self.projector, flux);
        // d log p / d s_k
        let dlatent: Vec<f64> = latent
            .iter()
            .zip(&self.spec.latent_mean)
            .zip(&self.inv_var)
            .map(|((s, m), iv)| -(s - m) * iv)
            .collect();
        let s = self.projector.nrows();
        Some(
            self.projector
                .as_slice()
                .chunks_exact(s)
                .map(|col| col.iter().zip(&dlatent).map(|(e, d)| e * d).sum())
                .collect(),
        )
    }
}

impl ModelBundle for ToyModel {
    fn latent_dim(&self) -> usize {
        self.spec.latent_dim()
    }

    fn wavelengths(&self) -> &[f64] {
        &self.grid
    }

    fn encode(&self, flux: &[f64]) -> Result<LatentVector> {
        check_flux(self, flux, "flux")?;
        LatentVector::new(apply_projector(&self.projector, flux))
    }

    fn encode_observed(&self, spectrum: &Spectrum) -> Result<LatentVector> {
        if spectrum.wavelengths() != self.grid.as_slice() {
            return Err(Error::input(
                "spectrum is not sampled on the model's canonical grid",
            ));
        }
        if spectrum.redshift() == self.redshift {
            self.encode(spectrum.flux())
        } else {
            let projector = self.spec.projector(&self.grid, spectrum.redshift())?;
            LatentVector::new(apply_projector(&projector, spectrum.flux()))
        }
    }

    fn decode(&self, latent: &LatentVector, z: f64) -> Result<Vec<f64>> {
        if z == self.redshift {
            apply_basis(&self.basis, latent)
        } else {
            apply_basis(&self.spec.basis(&self.grid, z)?, latent)
        }
    }

    fn latent_log_prob(&self, latent: &LatentVector) -> f64 {
        self.log_prob_slice(latent.as_slice())
    }

    fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.spec.to_toml().unwrap_or_default().as_bytes());
        hasher.update(self.redshift.to_le_bytes());
        hex::encode(hasher.finalize())
    }
}
