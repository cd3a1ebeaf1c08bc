//! Python bindings. Vectors cross the boundary as lists of floats.

use imo_core::io::{self, Dataset, SpectrumFile};
use imo_core::synth::{self, CalibrationJump, DoublePeak};
use imo_core::{attribution, model, Error, Method, ModelBundle, StridePolicy, WindowSet};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::DegenerateModel(_) | Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for imo_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn stride_policy(name: &str) -> PyResult<StridePolicy> {
    name.parse().py()
}

#[pyclass(name = "Spectrum", module = "imo", frozen, from_py_object)]
#[derive(Clone)]
struct PySpectrum {
    inner: imo_core::Spectrum,
}

#[pymethods]
impl PySpectrum {
    #[new]
    fn new(flux: Vec<f64>, wavelengths: Vec<f64>, redshift: f64) -> PyResult<Self> {
        Ok(PySpectrum {
            inner: imo_core::Spectrum::new(flux, wavelengths, redshift).py()?,
        })
    }

    #[getter]
    fn flux(&self) -> Vec<f64> {
        self.inner.flux().to_vec()
    }

    #[getter]
    fn wavelengths(&self) -> Vec<f64> {
        self.inner.wavelengths().to_vec()
    }

    #[getter]
    fn redshift(&self) -> f64 {
        self.inner.redshift()
    }

    fn nearest_pixel(&self, wavelength: f64) -> usize {
        self.inner.nearest_pixel(wavelength)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum(n={}, z={})",
            self.inner.len(),
            self.inner.redshift()
        )
    }
}

#[pyclass(name = "ToyModel", module = "imo", frozen)]
struct PyToyModel {
    inner: model::ToyModel,
}

#[pymethods]
impl PyToyModel {
    /// Model at `redshift` from a TOML description, or the built-in default.
    #[new]
    #[pyo3(signature = (redshift, toml=None))]
    fn new(redshift: f64, toml: Option<&str>) -> PyResult<Self> {
        let spec = match toml {
            Some(text) => model::ToyModelSpec::from_toml(text).py()?,
            None => model::ToyModelSpec::galaxy_default(),
        };
        Ok(PyToyModel {
            inner: model::ToyModel::new(spec, redshift).py()?,
        })
    }

    #[getter]
    fn redshift(&self) -> f64 {
        self.inner.redshift()
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn wavelengths(&self) -> Vec<f64> {
        self.inner.wavelengths().to_vec()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.spec().to_toml().py()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn max_score(&self) -> f64 {
        self.inner.max_score()
    }

    fn encode(&self, flux: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.encode(&flux).py()?.into_inner())
    }

    fn decode(&self, latent: Vec<f64>, redshift: f64) -> PyResult<Vec<f64>> {
        let latent = model::LatentVector::new(latent).py()?;
        self.inner.decode(&latent, redshift).py()
    }

    fn score(&self, flux: Vec<f64>) -> PyResult<f64> {
        model::score(&self.inner, &flux).py()
    }

    fn score_gradient(&self, flux: Vec<f64>) -> PyResult<Vec<f64>> {
        model::score_gradient(&self.inner, &flux).py()
    }
}

#[pyclass(name = "BaselineEnsemble", module = "imo", frozen)]
struct PyEnsemble {
    inner: attribution::BaselineEnsemble,
}

#[pymethods]
impl PyEnsemble {
    /// Scores each reconstruction with `model`.
    #[new]
    #[pyo3(signature = (model, reconstructions, source_ids=None))]
    fn new(
        model: &PyToyModel,
        reconstructions: Vec<Vec<f64>>,
        source_ids: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let ids = source_ids
            .unwrap_or_else(|| (0..reconstructions.len()).map(|j| format!("b{j}")).collect());
        let inner = attribution::BaselineEnsemble::scored(
            &model.inner,
            reconstructions,
            ids,
            model.inner.redshift(),
        )
        .py()?;
        Ok(PyEnsemble { inner })
    }

    #[getter]
    fn reconstructions(&self) -> Vec<Vec<f64>> {
        self.inner.reconstructions().to_vec()
    }

    #[getter]
    fn scores(&self) -> Vec<f64> {
        self.inner.scores().to_vec()
    }

    #[getter]
    fn source_ids(&self) -> Vec<String> {
        self.inner.source_ids().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "AttributionStack", module = "imo", frozen)]
struct PyStack {
    inner: attribution::AttributionStack,
}

#[pymethods]
impl PyStack {
    #[getter]
    fn windows(&self) -> Vec<usize> {
        self.inner.windows.sizes().to_vec()
    }

    #[getter]
    fn stride(&self) -> &'static str {
        self.inner.stride.as_str()
    }

    #[getter]
    fn per_window_mean(&self) -> Vec<Vec<f64>> {
        self.inner.per_window_mean.clone()
    }

    #[getter]
    fn per_window_var(&self) -> Vec<Vec<f64>> {
        self.inner.per_window_var.clone()
    }

    /// Nested `[window][baseline][pixel]` lists, or None.
    #[getter]
    fn per_baseline(&self) -> Option<Vec<Vec<Vec<f64>>>> {
        self.inner.per_baseline.clone()
    }

    #[getter]
    fn combined(&self) -> Vec<f64> {
        self.inner.combined.clone()
    }

    fn combined_spread(&self) -> Vec<f64> {
        self.inner.combined_spread()
    }
}

#[pyfunction]
fn saliency(model: &PyToyModel, x: Vec<f64>) -> PyResult<Vec<f64>> {
    attribution::saliency(&model.inner, &x).py()
}

#[pyfunction]
#[pyo3(signature = (model, x, baseline, steps=512))]
fn integrated_gradients(
    model: &PyToyModel,
    x: Vec<f64>,
    baseline: Vec<f64>,
    steps: usize,
) -> PyResult<Vec<f64>> {
    attribution::integrated_gradients(&model.inner, &x, &baseline, steps).py()
}

#[pyfunction]
#[pyo3(signature = (model, x, ensemble, steps=512))]
fn expected_gradients(
    model: &PyToyModel,
    x: Vec<f64>,
    ensemble: &PyEnsemble,
    steps: usize,
) -> PyResult<Vec<f64>> {
    attribution::expected_gradients(&model.inner, &x, &ensemble.inner, steps).py()
}

#[pyfunction]
fn feature_ablation(model: &PyToyModel, x: Vec<f64>, baseline: Vec<f64>) -> PyResult<Vec<f64>> {
    attribution::feature_ablation(&model.inner, &x, &baseline).py()
}

#[pyfunction]
#[pyo3(signature = (model, x, baseline, window, stride=None))]
fn occlusion(
    model: &PyToyModel,
    x: Vec<f64>,
    baseline: Vec<f64>,
    window: usize,
    stride: Option<usize>,
) -> PyResult<Vec<f64>> {
    attribution::occlusion(&model.inner, &x, &baseline, window, stride.unwrap_or(window)).py()
}

#[pyfunction]
#[pyo3(signature = (model, x, recon, recon_score, window, stride=None))]
fn inverse_occlusion(
    model: &PyToyModel,
    x: Vec<f64>,
    recon: Vec<f64>,
    recon_score: f64,
    window: usize,
    stride: Option<usize>,
) -> PyResult<Vec<f64>> {
    attribution::inverse_occlusion(
        &model.inner,
        &x,
        &recon,
        recon_score,
        window,
        stride.unwrap_or(window),
    )
    .py()
}

#[pyfunction]
#[pyo3(signature = (model, x, ensemble, windows=vec![1, 4, 16, 64], stride="disjoint"))]
fn imo(
    model: &PyToyModel,
    x: &PySpectrum,
    ensemble: &PyEnsemble,
    windows: Vec<usize>,
    stride: &str,
) -> PyResult<PyStack> {
    let windows = WindowSet::new(windows).py()?;
    let inner = attribution::imo(
        &model.inner,
        &x.inner,
        &ensemble.inner,
        &windows,
        stride_policy(stride)?,
    )
    .py()?;
    Ok(PyStack { inner })
}

#[pyfunction]
fn combine_min_variance(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    attribution::combine_min_variance(&means, &variances).py()
}

#[pyfunction]
fn method_names() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.as_str()).collect()
}

fn label_dict<'py>(py: Python<'py>, label: &synth::AnomalyLabel) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", label.kind.as_str())?;
    d.set_item("affected", label.affected.clone())?;
    d.set_item("peaks", label.peaks.clone())?;
    let params = PyDict::new(py);
    for (k, v) in &label.parameters {
        params.set_item(k, v)?;
    }
    d.set_item("parameters", params)?;
    Ok(d)
}

/// Spectrum of the default synthetic galaxy at redshift `z`.
#[pyfunction]
#[pyo3(signature = (z, seed=0, noise_sigma=None))]
fn generate_spectrum(z: f64, seed: u64, noise_sigma: Option<f64>) -> PyResult<PySpectrum> {
    let mut config = synth::SynthConfig {
        seed,
        ..Default::default()
    };
    if let Some(s) = noise_sigma {
        config.noise_sigma = s;
    }
    let generated = synth::generate_spectrum(&config, z).py()?;
    Ok(PySpectrum {
        inner: generated.spectrum,
    })
}

#[pyfunction]
#[pyo3(signature = (spectrum, pivot=5800.0, offset=-1.0, slope=1e-3))]
fn inject_calibration_jump<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    pivot: f64,
    offset: f64,
    slope: f64,
) -> PyResult<(PySpectrum, Bound<'py, PyDict>)> {
    let jump = CalibrationJump {
        pivot,
        offset,
        slope,
    };
    let (s, label) = synth::inject_calibration_jump(&spectrum.inner, &jump).py()?;
    Ok((PySpectrum { inner: s }, label_dict(py, &label)?))
}

#[pyfunction]
#[pyo3(signature = (spectrum, rest_center=6562.8, separation=80.0, amplitude=3.0, width=8.0))]
fn inject_double_peak<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    rest_center: f64,
    separation: f64,
    amplitude: f64,
    width: f64,
) -> PyResult<(PySpectrum, Bound<'py, PyDict>)> {
    let peak = DoublePeak {
        rest_center,
        separation,
        amplitude,
        width,
    };
    let (s, label) = synth::inject_double_peak(&spectrum.inner, &peak, None).py()?;
    Ok((PySpectrum { inner: s }, label_dict(py, &label)?))
}

/// Default synthetic scenario: dataset, fitted model and test spectra.
#[pyfunction]
#[pyo3(signature = (count=100, z_min=0.0, z_max=0.2, test_redshift=0.1, seed=0))]
fn synthetic_suite<'py>(
    py: Python<'py>,
    count: usize,
    z_min: f64,
    z_max: f64,
    test_redshift: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = synth::SynthConfig::default();
    let suite =
        synth::SyntheticSuite::build(&config, count, (z_min, z_max), test_redshift, seed).py()?;
    let wrap = |s: &imo_core::Spectrum| PySpectrum { inner: s.clone() };
    let d = PyDict::new(py);
    let dataset: Vec<PySpectrum> = suite.dataset.iter().map(wrap).collect();
    d.set_item("dataset", dataset)?;
    d.set_item("model_toml", suite.model.to_toml().py()?)?;
    d.set_item("clean", wrap(&suite.clean))?;
    d.set_item("calibration", wrap(&suite.calibration.0))?;
    d.set_item("calibration_label", label_dict(py, &suite.calibration.1)?)?;
    d.set_item("double_peak", wrap(&suite.double_peak.0))?;
    d.set_item("double_peak_label", label_dict(py, &suite.double_peak.1)?)?;
    Ok(d)
}

#[pyfunction]
fn sample_baselines(
    dataset: Vec<PySpectrum>,
    m: usize,
    model: &PyToyModel,
    seed: u64,
) -> PyResult<PyEnsemble> {
    let dataset = Dataset::from_spectra(dataset.into_iter().map(|s| s.inner).collect());
    let z = model.inner.redshift();
    let inner = io::sample_baselines(&dataset, m, &model.inner, z, seed).py()?;
    Ok(PyEnsemble { inner })
}

#[pyfunction]
fn load_spectrum(path: &str) -> PyResult<PySpectrum> {
    Ok(PySpectrum {
        inner: io::load_spectrum(path).py()?.spectrum,
    })
}

#[pyfunction]
fn save_spectrum(path: &str, spectrum: &PySpectrum) -> PyResult<()> {
    io::save_spectrum(path, &SpectrumFile::new(spectrum.inner.clone())).py()
}

/// Spectra of a dataset directory, sorted by file name.
#[pyfunction]
fn load_dataset(path: &str) -> PyResult<Vec<PySpectrum>> {
    let dataset = io::load_dataset(path).py()?;
    Ok(dataset
        .spectra()
        .iter()
        .map(|s| PySpectrum { inner: s.clone() })
        .collect())
}

#[pymodule]
#[pyo3(name = "imo")]
fn imo_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyToyModel>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyStack>()?;
    m.add_function(wrap_pyfunction!(saliency, m)?)?;
    m.add_function(wrap_pyfunction!(integrated_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(expected_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(feature_ablation, m)?)?;
    m.add_function(wrap_pyfunction!(occlusion, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_occlusion, m)?)?;
    m.add_function(wrap_pyfunction!(imo, m)?)?;
    m.add_function(wrap_pyfunction!(combine_min_variance, m)?)?;
    m.add_function(wrap_pyfunction!(method_names, m)?)?;
    m.add_function(wrap_pyfunction!(generate_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(inject_calibration_jump, m)?)?;
    m.add_function(wrap_pyfunction!(inject_double_peak, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_suite, m)?)?;
    m.add_function(wrap_pyfunction!(sample_baselines, m)?)?;
    m.add_function(wrap_pyfunction!(load_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(save_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    Ok(())
}
