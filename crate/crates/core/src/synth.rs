//! Synthetic galaxy-like spectra and anomaly injection.
//!
//! Spectra are a low-order rest-frame polynomial continuum plus Gaussian
//! emission lines, the same family the toy model's templates span, so clean
//! spectra reconstruct well and injected anomalies land off the manifold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ToyModelSpec;
use crate::spectrum::{nearest_pixel, GaussianLine, GridSpec, Spectrum};

/// Rest-frame Gaussian sigma (Å) of the narrow emission lines.
pub const NARROW_LINE_WIDTH: f64 = 8.0;

/// Injected profiles are truncated at this many widths from their center.
pub const PROFILE_HALF_WIDTHS: f64 = 5.0;

/// Per-spectrum scatter of the anomaly-free population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationScatter {
    /// Relative scatter of the overall continuum level.
    pub continuum_scale: f64,
    /// Absolute scatter added to the linear continuum coefficient.
    pub continuum_tilt: f64,
    /// Relative scatter of all emission-line amplitudes.
    pub line_scale: f64,
}

impl Default for PopulationScatter {
    fn default() -> Self {
        PopulationScatter {
            continuum_scale: 0.1,
            continuum_tilt: 0.05,
            line_scale: 0.25,
        }
    }
}

/// Flux offset on the blue side of `pivot` (Å): `offset + slope·(λ - pivot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationJump {
    pub pivot: f64,
    pub offset: f64,
    pub slope: f64,
}

impl Default for CalibrationJump {
    fn default() -> Self {
        CalibrationJump {
            pivot: 5800.0,
            offset: -1.0,
            slope: 1e-3,
        }
    }
}

/// A line split into two components `separation` Å apart (rest frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePeak {
    pub rest_center: f64,
    pub separation: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl Default for DoublePeak {
    fn default() -> Self {
        DoublePeak {
            rest_center: 6562.8,
            separation: 80.0,
            amplitude: 3.0,
            width: NARROW_LINE_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub grid: GridSpec,
    /// Rest wavelength where the continuum polynomial variable is zero.
    pub pivot: f64,
    /// Rest wavelength span mapped to one unit of the continuum variable.
    pub scale: f64,
    pub continuum_coeffs: Vec<f64>,
    /// Rest-frame emission lines.
    pub lines: Vec<GaussianLine>,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub population: PopulationScatter,
    #[serde(default)]
    pub calibration: CalibrationJump,
    #[serde(default)]
    pub double_peak: DoublePeak,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let w = NARROW_LINE_WIDTH;
        SynthConfig {
            grid: GridSpec::desi_like(),
            pivot: 6000.0,
            scale: 3000.0,
            continuum_coeffs: vec![1.0, -0.3, 0.1],
            lines: vec![
                GaussianLine::new(3727.4, 0.6, w),  // [OII]
                GaussianLine::new(4340.5, 0.15, w), // Hγ
                GaussianLine::new(4861.3, 0.35, w), // Hβ
                GaussianLine::new(4958.9, 0.17, w), // [OIII]
                GaussianLine::new(5006.8, 0.5, w),  // [OIII]
                GaussianLine::new(6548.1, 0.12, w), // [NII]
                GaussianLine::new(6562.8, 1.0, w),  // Hα
                GaussianLine::new(6583.5, 0.35, w), // [NII]
                GaussianLine::new(6716.4, 0.2, w),  // [SII]
                GaussianLine::new(6730.8, 0.15, w), // [SII]
            ],
            noise_sigma: 0.05,
            seed: 0,
            population: PopulationScatter::default(),
            calibration: CalibrationJump::default(),
            double_peak: DoublePeak::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        if let Some(l) = self.lines.iter().find(|l| !(l.width > 0.0)) {
            return Err(Error::input(format!(
                "line at {} Å has non-positive width",
                l.center
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::input("noise_sigma must be non-negative"));
        }
        if !(self.scale > 0.0) {
            return Err(Error::input("continuum scale must be positive"));
        }
        let p = &self.population;
        if !(p.continuum_scale >= 0.0 && p.continuum_tilt >= 0.0 && p.line_scale >= 0.0) {
            return Err(Error::input("population scatter must be non-negative"));
        }
        Ok(())
    }

    /// The configured line at `rest_center`, if any.
    pub fn line_at(&self, rest_center: f64) -> Option<GaussianLine> {
        self.lines
            .iter()
            .copied()
            .find(|l| (l.center - rest_center).abs() < 1e-6)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::input(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig =
            toml::from_str(text).map_err(|e| Error::input(format!("synth config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    CalibrationJump,
    DoublePeak,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::CalibrationJump => "calibration_jump",
            AnomalyKind::DoublePeak => "double_peak",
        }
    }
}

impl std::str::FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calibration_jump" => Ok(AnomalyKind::CalibrationJump),
            "double_peak" => Ok(AnomalyKind::DoublePeak),
            other => Err(Error::input(format!("unknown anomaly kind {other:?}"))),
        }
    }
}

/// Ground truth for an injected anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyLabel {
    pub kind: AnomalyKind,
    /// Sorted, disjoint half-open pixel ranges whose flux was modified.
    pub affected: Vec<(usize, usize)>,
    /// Pixels nearest the injected peak centers (double peaks only).
    pub peaks: Vec<usize>,
    pub parameters: Vec<(String, f64)>,
}

impl AnomalyLabel {
    pub fn contains(&self, pixel: usize) -> bool {
        self.affected.iter().any(|&(a, b)| (a..b).contains(&pixel))
    }

    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }
}

/// Output of [`generate_spectrum`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub spectrum: Spectrum,
    /// Lines skipped because their observed center fell off the grid.
    pub warnings: Vec<String>,
}

/// Continuum plus redshifted lines plus white noise seeded by `config.seed`.
pub fn generate_spectrum(config: &SynthConfig, z: f64) -> Result<Generated> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    render(config, z, &config.continuum_coeffs, 1.0, &mut rng)
}

fn render(
    config: &SynthConfig,
    z: f64,
    continuum: &[f64],
    line_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Generated> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::input(format!("redshift must be >= 0, got {z}")));
    }
    let grid = config.grid.build()?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let mut warnings = Vec::new();
    let lines: Vec<GaussianLine> = config
        .lines
        .iter()
        .filter_map(|l| {
            let obs = l.redshifted(z);
            if obs.center < lo || obs.center > hi {
                warnings.push(format!(
                    "line at rest {} Å lands at {:.2} Å, outside the grid; skipped",
                    l.center, obs.center
                ));
                None
            } else {
                Some(GaussianLine {
                    amplitude: obs.amplitude * line_scale,
                    ..obs
                })
            }
        })
        .collect();
    let noise = Normal::new(0.0, config.noise_sigma)
        .map_err(|e| Error::input(format!("noise: {e}")))?;
    let flux = grid
        .iter()
        .map(|&w| {
            let u = (w / (1.0 + z) - config.pivot) / config.scale;
            let cont = continuum.iter().rev().fold(0.0, |acc, &c| acc * u + c);
            let emission: f64 = lines.iter().map(|l| l.eval(w)).sum();
            let n = if config.noise_sigma > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            cont + emission + n
        })
        .collect();
    Ok(Generated {
        spectrum: Spectrum::new(flux, grid, z)?,
        warnings,
    })
}

/// One draw from the anomaly-free population, with its latent parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMember {
    pub spectrum: Spectrum,
    pub continuum_coeffs: Vec<f64>,
    pub line_scale: f64,
}

/// Member `index` of the population generated from `seed`.
///
/// Each index reads its own ChaCha stream, so members are independent of how
/// many others are drawn and can be built in any order.
pub fn population_member(
    config: &SynthConfig,
    z_range: (f64, f64),
    seed: u64,
    index: u64,
) -> Result<PopulationMember> {
    let (z0, z1) = z_range;
    if !(z0.is_finite() && z1.is_finite() && z0 >= 0.0 && z1 >= z0) {
        return Err(Error::input(format!("invalid redshift range ({z0}, {z1})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let z = if z1 > z0 { rng.random_range(z0..=z1) } else { z0 };
    let p = &config.population;
    let std = |s: f64| Normal::new(0.0, s).map_err(|e| Error::input(e.to_string()));
    let a = 1.0 + std(p.continuum_scale)?.sample(&mut rng);
    let tilt = std(p.continuum_tilt)?.sample(&mut rng);
    let b = (1.0 + std(p.line_scale)?.sample(&mut rng)).max(0.0);
    let mut coeffs: Vec<f64> = config.continuum_coeffs.iter().map(|c| a * c).collect();
    if coeffs.len() < 2 {
        coeffs.resize(2, 0.0);
    }
    coeffs[1] += tilt;
    let generated = render(config, z, &coeffs, b, &mut rng)?;
    Ok(PopulationMember {
        spectrum: generated.spectrum,
        continuum_coeffs: coeffs,
        line_scale: b,
    })
}

/// `count` anomaly-free spectra with redshifts uniform in `z_range`.
pub fn build_dataset(
    config: &SynthConfig,
    count: usize,
    z_range: (f64, f64),
    seed: u64,
) -> Result<Vec<Spectrum>> {
    if count == 0 {
        return Err(Error::input("dataset count must be positive"));
    }
    config.validate()?;
    (0..count as u64)
        .map(|i| population_member(config, z_range, seed, i).map(|m| m.spectrum))
        .collect()
}

/// Adds `offset + slope·(λ - pivot)` to every pixel blueward of `pivot`.
pub fn inject_calibration_jump(
    spectrum: &Spectrum,
    jump: &CalibrationJump,
) -> Result<(Spectrum, AnomalyLabel)> {
    let grid = spectrum.wavelengths();
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if !(jump.pivot >= lo && jump.pivot <= hi) {
        return Err(Error::input(format!(
            "calibration pivot {} Å is outside the grid [{lo}, {hi}]",
            jump.pivot
        )));
    }
    let blue_end = grid.partition_point(|&w| w < jump.pivot);
    let mut flux = spectrum.flux().to_vec();
    for (f, &w) in flux[..blue_end].iter_mut().zip(grid) {
        *f += jump.offset + jump.slope * (w - jump.pivot);
    }
    let label = AnomalyLabel {
        kind: AnomalyKind::CalibrationJump,
        affected: vec![(0, blue_end)],
        peaks: vec![],
        parameters: vec![
            ("pivot".into(), jump.pivot),
            ("offset".into(), jump.offset),
            ("slope".into(), jump.slope),
        ],
    };
    Ok((spectrum.with_flux(flux)?, label))
}

/// Replaces a single emission line by two components.
///
/// `original` is the rest-frame line present in the spectrum (as generated),
/// which is subtracted before the two new components are added. Profiles are
/// truncated at [`PROFILE_HALF_WIDTHS`] widths so the label covers every
/// modified pixel.
pub fn inject_double_peak(
    spectrum: &Spectrum,
    peak: &DoublePeak,
    original: Option<GaussianLine>,
) -> Result<(Spectrum, AnomalyLabel)> {
    if !(peak.width > 0.0) {
        return Err(Error::input("double-peak width must be positive"));
    }
    let z = spectrum.redshift();
    let grid = spectrum.wavelengths();
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let half = 0.5 * peak.separation;
    let components = [
        GaussianLine::new(peak.rest_center - half, peak.amplitude, peak.width).redshifted(z),
        GaussianLine::new(peak.rest_center + half, peak.amplitude, peak.width).redshifted(z),
    ];
    for c in &components {
        if c.center < lo || c.center > hi {
            return Err(Error::input(format!(
                "double-peak component at {:.2} Å is outside the grid [{lo}, {hi}]",
                c.center
            )));
        }
    }
    let mut flux = spectrum.flux().to_vec();
    let mut ranges = Vec::new();
    let mut apply = |line: GaussianLine, sign: f64| {
        let reach = PROFILE_HALF_WIDTHS * line.width;
        let a = grid.partition_point(|&w| w < line.center - reach);
        let b = grid.partition_point(|&w| w <= line.center + reach);
        for (f, &w) in flux[a..b].iter_mut().zip(&grid[a..b]) {
            *f += sign * line.eval(w);
        }
        if b > a {
            ranges.push((a, b));
        }
    };
    if let Some(orig) = original {
        apply(orig.redshifted(z), -1.0);
    }
    for c in components {
        apply(c, 1.0);
    }
    let label = AnomalyLabel {
        kind: AnomalyKind::DoublePeak,
        affected: merge_ranges(ranges),
        peaks: components
            .iter()
            .map(|c| nearest_pixel(grid, c.center))
            .collect(),
        parameters: vec![
            ("rest_center".into(), peak.rest_center),
            ("separation".into(), peak.separation),
            ("amplitude".into(), peak.amplitude),
            ("width".into(), peak.width),
        ],
    };
    Ok((spectrum.with_flux(flux)?, label))
}

fn merge_ranges(mut ranges: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    ranges.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(ranges.len());
    for (a, b) in ranges {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Everything needed for an end-to-end run on synthetic ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub config: SynthConfig,
    pub dataset: Vec<Spectrum>,
    /// Toy model whose latent density is fitted to `dataset`.
    pub model: ToyModelSpec,
    /// Anomaly-free population draw at the test redshift.
    pub clean: Spectrum,
    pub calibration: (Spectrum, AnomalyLabel),
    pub double_peak: (Spectrum, AnomalyLabel),
}

/// Variance floor used when fitting the toy density to a synthetic dataset.
pub const DENSITY_VARIANCE_FLOOR: f64 = 1e-6;

impl SyntheticSuite {
    /// Builds a dataset of `count` spectra in `z_range`, fits the toy density
    /// to it, and derives the clean and anomalous test spectra at `test_z`.
    pub fn build(
        config: &SynthConfig,
        count: usize,
        z_range: (f64, f64),
        test_z: f64,
        seed: u64,
    ) -> Result<Self> {
        let dataset = build_dataset(config, count, z_range, seed)?;
        let mut model = ToyModelSpec {
            grid: config.grid.clone(),
            pivot: config.pivot,
            scale: config.scale,
            ..ToyModelSpec::galaxy_default()
        };
        model.fit_density(&dataset, DENSITY_VARIANCE_FLOOR)?;
        // test draws use streams past the dataset
        let member = population_member(config, (test_z, test_z), seed, count as u64)?;
        let clean = member.spectrum;
        let calibration = inject_calibration_jump(&clean, &config.calibration)?;
        let original = config
            .line_at(config.double_peak.rest_center)
            .map(|l| GaussianLine {
                amplitude: l.amplitude * member.line_scale,
                ..l
            });
        let double_peak = inject_double_peak(&clean, &config.double_peak, original)?;
        Ok(SyntheticSuite {
            config: config.clone(),
            dataset,
            model,
            clean,
            calibration,
            double_peak,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SynthConfig {
        SynthConfig {
            noise_sigma: 0.0,
            continuum_coeffs: vec![],
            lines: vec![],
            ..SynthConfig::default()
        }
    }

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    #[test]
    fn empty_model_gives_zero_flux() {
        let g = generate_spectrum(&quiet(), 0.1).unwrap();
        assert!(g.spectrum.flux().iter().all(|&f| f == 0.0));
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn single_line_peaks_at_nearest_pixel() {
        for (z, observed) in [(0.0, 6563.0), (0.05, 6891.15)] {
            let cfg = SynthConfig {
                lines: vec![GaussianLine::new(6563.0, 1.0, 8.0)],
                ..quiet()
            };
            let s = generate_spectrum(&cfg, z).unwrap().spectrum;
            assert_eq!(argmax(s.flux()), s.nearest_pixel(observed), "z = {z}");
        }
    }

    #[test]
    fn off_grid_line_is_skipped_with_warning() {
        let cfg = SynthConfig {
            lines: vec![GaussianLine::new(9700.0, 1.0, 8.0)],
            ..quiet()
        };
        let g = generate_spectrum(&cfg, 0.2).unwrap();
        assert_eq!(g.warnings.len(), 1);
        assert!(g.spectrum.flux().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate_spectrum(&cfg, 0.1).unwrap();
        let b = generate_spectrum(&cfg, 0.1).unwrap();
        assert_eq!(a, b);
        let other = generate_spectrum(&SynthConfig { seed: 1, ..cfg }, 0.1).unwrap();
        assert_ne!(a.spectrum.flux(), other.spectrum.flux());
    }

    #[test]
    fn null_calibration_jump_is_identity() {
        let s = generate_spectrum(&SynthConfig::default(), 0.1).unwrap().spectrum;
        let jump = CalibrationJump {
            pivot: 5800.0,
            offset: 0.0,
            slope: 0.0,
        };
        let (out, label) = inject_calibration_jump(&s, &jump).unwrap();
        assert_eq!(out, s);
        assert_eq!(label.kind, AnomalyKind::CalibrationJump);
        let first_red = s.wavelengths().iter().position(|&w| w >= 5800.0).unwrap();
        assert_eq!(label.affected, vec![(0, first_red)]);
    }

    #[test]
    fn large_negative_offset_makes_blue_side_negative() {
        let s = generate_spectrum(&SynthConfig::default(), 0.1).unwrap().spectrum;
        let max_abs = s.flux().iter().fold(0.0f64, |a, f| a.max(f.abs()));
        let jump = CalibrationJump {
            pivot: 5800.0,
            offset: -2.0 * max_abs,
            slope: 0.0,
        };
        let (out, label) = inject_calibration_jump(&s, &jump).unwrap();
        let (a, b) = label.affected[0];
        assert!(out.flux()[a..b].iter().all(|&f| f < 0.0));
        assert_eq!(&out.flux()[b..], &s.flux()[b..]);
    }

    #[test]
    fn negative_slope_deviation_grows_blueward() {
        let s = generate_spectrum(&SynthConfig::default(), 0.1).unwrap().spectrum;
        let jump = CalibrationJump {
            pivot: 6000.0,
            offset: 0.0,
            slope: -1e-3,
        };
        let (out, label) = inject_calibration_jump(&s, &jump).unwrap();
        let dev: Vec<f64> = out
            .flux()
            .iter()
            .zip(s.flux())
            .map(|(a, b)| (a - b).abs())
            .take(label.affected[0].1)
            .collect();
        assert!(dev.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn calibration_pivot_must_be_on_grid() {
        let s = generate_spectrum(&SynthConfig::default(), 0.1).unwrap().spectrum;
        let jump = CalibrationJump {
            pivot: 100.0,
            offset: 1.0,
            slope: 0.0,
        };
        assert!(inject_calibration_jump(&s, &jump).is_err());
    }

    #[test]
    fn double_peak_centers_land_on_expected_pixels() {
        let s = generate_spectrum(&quiet(), 0.0).unwrap().spectrum;
        let dp = DoublePeak {
            rest_center: 6563.0,
            separation: 20.0,
            amplitude: 1.0,
            width: 4.0,
        };
        let (_, label) = inject_double_peak(&s, &dp, None).unwrap();
        assert_eq!(
            label.peaks,
            vec![s.nearest_pixel(6553.0), s.nearest_pixel(6573.0)]
        );
    }

    #[test]
    fn zero_separation_rescales_the_line() {
        let line = GaussianLine::new(6563.0, 1.0, 8.0);
        let cfg = SynthConfig {
            lines: vec![line],
            ..quiet()
        };
        let s = generate_spectrum(&cfg, 0.1).unwrap().spectrum;
        let dp = DoublePeak {
            rest_center: 6563.0,
            separation: 0.0,
            amplitude: 1.5,
            width: 8.0,
        };
        let (out, label) = inject_double_peak(&s, &dp, Some(line)).unwrap();
        let obs = line.redshifted(0.1);
        for (i, (&f, &w)) in out.flux().iter().zip(s.wavelengths()).enumerate() {
            if label.contains(i) {
                assert!((f - 3.0 * obs.eval(w)).abs() < 1e-12, "pixel {i}");
            }
        }
    }

    #[test]
    fn zero_amplitude_removes_the_line() {
        let line = GaussianLine::new(6563.0, 1.0, 8.0);
        let cfg = SynthConfig {
            lines: vec![line],
            continuum_coeffs: vec![0.7],
            ..quiet()
        };
        let s = generate_spectrum(&cfg, 0.1).unwrap().spectrum;
        let dp = DoublePeak {
            rest_center: 6563.0,
            separation: 40.0,
            amplitude: 0.0,
            width: 8.0,
        };
        let (out, label) = inject_double_peak(&s, &dp, Some(line)).unwrap();
        let obs = line.redshifted(0.1);
        for (&f, &w) in out.flux().iter().zip(s.wavelengths()) {
            if (w - obs.center).abs() <= PROFILE_HALF_WIDTHS * obs.width {
                assert!((f - 0.7).abs() < 1e-12);
            }
        }
        assert!(!label.affected.is_empty());
    }

    #[test]
    fn double_peak_off_grid_is_an_error() {
        let s = generate_spectrum(&quiet(), 0.0).unwrap().spectrum;
        let dp = DoublePeak {
            rest_center: 3600.0,
            separation: 40.0,
            amplitude: 1.0,
            width: 8.0,
        };
        assert!(matches!(
            inject_double_peak(&s, &dp, None),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn injection_is_local_and_labelled() {
        let cfg = SynthConfig::default();
        let s = generate_spectrum(&cfg, 0.1).unwrap().spectrum;
        let (out, label) =
            inject_double_peak(&s, &cfg.double_peak, cfg.line_at(6562.8)).unwrap();
        let obs_width = cfg.double_peak.width * 1.1;
        let centers = [
            (6562.8 - 40.0) * 1.1,
            6562.8 * 1.1,
            (6562.8 + 40.0) * 1.1,
        ];
        for (i, (a, b)) in out.flux().iter().zip(s.flux()).enumerate() {
            if (a - b).abs() > 1e-9 {
                assert!(label.contains(i), "pixel {i} changed outside label");
                let w = s.wavelengths()[i];
                assert!(centers.iter().any(|c| (w - c).abs() <= 5.0 * obs_width));
            }
        }
    }

    #[test]
    fn dataset_is_deterministic_and_in_range() {
        let cfg = SynthConfig::default();
        let a = build_dataset(&cfg, 100, (0.0, 0.2), 11).unwrap();
        let b = build_dataset(&cfg, 100, (0.0, 0.2), 11).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| (0.0..=0.2).contains(&s.redshift())));
        let single = build_dataset(&cfg, 1, (0.0, 0.2), 11).unwrap();
        assert_eq!(single[0], a[0]);
        assert!(build_dataset(&cfg, 0, (0.0, 0.2), 11).is_err());
    }

    #[test]
    fn merge_ranges_joins_overlaps() {
        assert_eq!(
            merge_ranges(vec![(5, 9), (0, 3), (2, 6), (12, 14)]),
            vec![(0, 9), (12, 14)]
        );
    }
}
