//! Observed-frame spectra and wavelength grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Description of a wavelength grid in Å.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    /// `points` evenly spaced samples from `start` to `stop` inclusive.
    Linear { start: f64, stop: f64, points: usize },
    /// Explicit sample positions.
    Explicit { wavelengths: Vec<f64> },
}

impl GridSpec {
    /// DESI-like coverage: 512 pixels over 3600–9800 Å.
    pub fn desi_like() -> Self {
        GridSpec::Linear {
            start: 3600.0,
            stop: 9800.0,
            points: 512,
        }
    }

    pub fn build(&self) -> Result<Vec<f64>> {
        let grid = match self {
            GridSpec::Linear {
                start,
                stop,
                points,
            } => linear_grid(*start, *stop, *points)?,
            GridSpec::Explicit { wavelengths } => wavelengths.clone(),
        };
        validate_grid(&grid)?;
        Ok(grid)
    }
}

pub fn linear_grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(Error::input("grid needs at least one point"));
    }
    if points == 1 {
        return Ok(vec![start]);
    }
    if !(start.is_finite() && stop.is_finite()) || stop <= start {
        return Err(Error::input(format!(
            "grid bounds must be finite with start < stop (got {start}, {stop})"
        )));
    }
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            if i == points - 1 {
                stop
            } else {
                start + step * i as f64
            }
        })
        .collect())
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::input("wavelength grid is empty"));
    }
    if let Some(i) = grid.iter().position(|w| !w.is_finite()) {
        return Err(Error::input(format!("wavelength {i} is not finite")));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::input(format!(
            "wavelengths must be strictly increasing (index {} -> {})",
            i,
            i + 1
        )));
    }
    Ok(())
}

/// Flux sampled on an observed-frame wavelength grid at a known redshift.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    flux: Vec<f64>,
    wavelengths: Vec<f64>,
    redshift: f64,
}

impl Spectrum {
    pub fn new(flux: Vec<f64>, wavelengths: Vec<f64>, redshift: f64) -> Result<Self> {
        if flux.len() != wavelengths.len() {
            return Err(Error::input(format!(
                "flux has {} samples but grid has {}",
                flux.len(),
                wavelengths.len()
            )));
        }
        validate_grid(&wavelengths)?;
        if let Some(i) = flux.iter().position(|f| !f.is_finite()) {
            return Err(Error::input(format!("flux sample {i} is not finite")));
        }
        if !redshift.is_finite() || redshift < 0.0 {
            return Err(Error::input(format!("redshift must be >= 0, got {redshift}")));
        }
        Ok(Spectrum {
            flux,
            wavelengths,
            redshift,
        })
    }

    pub fn flux(&self) -> &[f64] {
        &self.flux
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn redshift(&self) -> f64 {
        self.redshift
    }

    pub fn len(&self) -> usize {
        self.flux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flux.is_empty()
    }

    /// Replaces the flux, keeping grid and redshift.
    pub fn with_flux(&self, flux: Vec<f64>) -> Result<Self> {
        Spectrum::new(flux, self.wavelengths.clone(), self.redshift)
    }

    pub fn into_flux(self) -> Vec<f64> {
        self.flux
    }

    /// Index of the grid point closest to `wavelength`.
    pub fn nearest_pixel(&self, wavelength: f64) -> usize {
        nearest_pixel(&self.wavelengths, wavelength)
    }
}

pub fn nearest_pixel(grid: &[f64], wavelength: f64) -> usize {
    let idx = grid.partition_point(|&w| w < wavelength);
    if idx == 0 {
        0
    } else if idx == grid.len() {
        grid.len() - 1
    } else if (grid[idx] - wavelength) < (wavelength - grid[idx - 1]) {
        idx
    } else {
        idx - 1
    }
}

/// Gaussian profile in Å: `amplitude * exp(-((λ - center) / width)^2 / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLine {
    pub center: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl GaussianLine {
    pub fn new(center: f64, amplitude: f64, width: f64) -> Self {
        GaussianLine {
            center,
            amplitude,
            width,
        }
    }

    #[inline]
    pub fn eval(&self, wavelength: f64) -> f64 {
        let t = (wavelength - self.center) / self.width;
        self.amplitude * (-0.5 * t * t).exp()
    }

    /// The same line seen at redshift `z`: center and width stretch by `1 + z`.
    pub fn redshifted(&self, z: f64) -> Self {
        GaussianLine {
            center: self.center * (1.0 + z),
            amplitude: self.amplitude,
            width: self.width * (1.0 + z),
        }
    }
}
