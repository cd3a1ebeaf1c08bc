//! The `attribute` and `compare` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use imo_core::io::{fmt_f64, load_dataset, load_spectrum, sample_baselines, save_result};
use imo_core::io::{spectrum_digest, Dataset, ResultFile, SpectrumFile};
use imo_core::{
    expected_gradients, feature_ablation, imo, integrated_gradients, occlusion, saliency, score,
    AttributionStack, BaselineEnsemble, Method, ModelBundle, StridePolicy, ToyModel, ToyModelSpec,
    WindowSet,
};
use serde::Serialize;

use crate::error::{at, io_at, CliError, Result};
use crate::manifest::{FileEntry, Manifest};
use crate::plot::{Figure, Panel, Series, BLACK, BLUE, GRAY, RED};

pub const DEFAULT_BASELINES: usize = 8;
pub const DEFAULT_STEPS: usize = 512;
pub const DEFAULT_OCCLUSION_WINDOW: usize = 64;

/// Options shared by `attribute` and `compare`.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Spectrum file to explain.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory of baseline spectra.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Toy model description (TOML).
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated window sizes [default: 1,4,16,64].
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    /// `disjoint` or `dense` [default: disjoint].
    #[arg(long)]
    pub stride: Option<StridePolicy>,
    /// Number of baselines drawn from the dataset [default: 8].
    #[arg(long)]
    pub baselines: Option<usize>,
    /// Integration steps for ig and eg [default: 512].
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AttributeArgs {
    /// saliency, ig, eg, fa, occlusion or imo.
    #[arg(long)]
    pub method: Method,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

/// Inputs and resolved parameters for one or more attribution runs.
pub struct Context {
    pub input: SpectrumFile,
    pub input_digest: String,
    pub model: ToyModel,
    pub ensemble: Option<BaselineEnsemble>,
    pub dataset_digest: String,
    pub windows: WindowSet,
    pub stride: StridePolicy,
    pub steps: usize,
    pub seed: u64,
}

/// One method's output.
pub struct MethodRun {
    pub result: ResultFile,
    pub stack: Option<AttributionStack>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub window: usize,
    pub argmax_pixel: usize,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: String,
    pub n: usize,
    pub input_score: f64,
    /// Pixel of largest |attribution|.
    pub argmax_pixel: usize,
    pub argmax_wavelength: f64,
    pub max_abs: f64,
    /// Three times the largest combined spread over baselines (IMO only).
    pub noise_floor: Option<f64>,
    pub above_noise_floor: Option<bool>,
    pub windows: Vec<WindowSummary>,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{}: score {:.4} argmax pixel {} ({:.1} Å) max|attribution| {:.4e}",
            self.method,
            self.input_score,
            self.argmax_pixel,
            self.argmax_wavelength,
            self.max_abs
        );
        if let (Some(floor), Some(above)) = (self.noise_floor, self.above_noise_floor) {
            let verdict = if above { "above" } else { "below" };
            let _ = write!(s, " noise floor {floor:.4e} ({verdict})");
        }
        for w in &self.windows {
            let _ = write!(
                s,
                "\n  W={}: argmax pixel {} max|mean| {:.4e}",
                w.window, w.argmax_pixel, w.max_abs
            );
        }
        s
    }
}

/// Index and value of the largest |v|; the first wins ties.
pub fn argmax_abs(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, x)| {
            if x.abs() > bv {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        })
}

fn needs_dataset(method: Method) -> bool {
    !matches!(method, Method::Saliency)
}

fn check_parameters(method: Method, run: &RunArgs) -> Result<()> {
    let windows = run.windows.is_some();
    let stride = run.stride.is_some();
    let baselines = run.baselines.is_some() || run.dataset.is_some();
    let steps = run.steps.is_some();
    let rejected: &[(&str, bool)] = match method {
        Method::Saliency => &[
            ("windows", windows),
            ("stride", stride),
            ("baselines/--dataset", baselines),
            ("steps", steps),
        ],
        Method::Ig | Method::Eg => &[("windows", windows), ("stride", stride)],
        Method::Fa => &[("windows", windows), ("stride", stride), ("steps", steps)],
        Method::Occlusion | Method::Imo => &[("steps", steps)],
    };
    if let Some((flag, _)) = rejected.iter().find(|(_, given)| *given) {
        return Err(CliError::usage(format!(
            "--{flag} does not apply to method {method}"
        )));
    }
    if method == Method::Occlusion {
        if let Some(w) = &run.windows {
            if w.len() != 1 {
                return Err(CliError::usage(format!(
                    "occlusion takes a single window, got {}",
                    w.len()
                )));
            }
        }
    }
    if needs_dataset(method) && run.dataset.is_none() {
        return Err(CliError::usage(format!("method {method} needs --dataset")));
    }
    Ok(())
}

pub fn load_model_spec(path: &Path) -> Result<ToyModelSpec> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    ToyModelSpec::from_toml(&text).map_err(|e| match e {
        imo_core::Error::Input(message) => CliError::Core(imo_core::Error::Config {
            path: path.to_path_buf(),
            message,
        }),
        other => CliError::File {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

impl Context {
    /// Loads inputs and draws the baseline ensemble. `default_windows` is used
    /// when `--windows` is absent.
    pub fn load(run: &RunArgs, default_windows: &[usize], with_dataset: bool) -> Result<Self> {
        let input = load_spectrum(&run.input).map_err(at(&run.input))?;
        let input_digest = spectrum_digest(&input);
        let spec = load_model_spec(&run.model)?;
        let z = input.spectrum.redshift();
        let model = ToyModel::new(spec, z).map_err(at(&run.model))?;
        if model.wavelengths() != input.spectrum.wavelengths() {
            return Err(CliError::usage(format!(
                "{} is not on the model's wavelength grid",
                run.input.display()
            )));
        }
        let windows = WindowSet::new(
            run.windows
                .clone()
                .unwrap_or_else(|| default_windows.to_vec()),
        )?;
        windows.check_fits(input.spectrum.len())?;
        let steps = run.steps.unwrap_or(DEFAULT_STEPS);
        if steps < 2 {
            return Err(CliError::usage("--steps must be at least 2"));
        }
        let (ensemble, dataset_digest) = match (&run.dataset, with_dataset) {
            (Some(dir), true) => {
                let dataset: Dataset = load_dataset(dir).map_err(at(dir))?;
                let m = run.baselines.unwrap_or(DEFAULT_BASELINES);
                if m == 0 {
                    return Err(CliError::usage("--baselines must be positive"));
                }
                let ensemble = sample_baselines(&dataset, m, &model, z, run.seed)?;
                (Some(ensemble), dataset.digest())
            }
            _ => (None, "-".to_string()),
        };
        Ok(Context {
            input,
            input_digest,
            model,
            ensemble,
            dataset_digest,
            windows,
            stride: run.stride.unwrap_or_default(),
            steps,
            seed: run.seed,
        })
    }

    fn ensemble(&self) -> Result<&BaselineEnsemble> {
        self.ensemble
            .as_ref()
            .ok_or_else(|| CliError::usage("this method needs --dataset"))
    }

    /// Pixelwise mean of the ensemble reconstructions.
    ///
    /// Single-baseline methods use it as their counterfactual; it is itself a
    /// decoded spectrum because the decoder is linear.
    pub fn mean_baseline(&self) -> Result<Vec<f64>> {
        let ensemble = self.ensemble()?;
        let m = ensemble.len() as f64;
        let mut mean = vec![0.0; self.input.spectrum.len()];
        for r in ensemble.reconstructions() {
            for (a, b) in mean.iter_mut().zip(r) {
                *a += b;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        Ok(mean)
    }

    /// Runs `method`. Occlusion uses the largest configured window.
    pub fn run(&self, method: Method) -> Result<MethodRun> {
        let x = self.input.spectrum.flux();
        let model = &self.model;
        let largest = *self.windows.sizes().last().expect("window set is nonempty");
        let mut stack = None;
        let mut windows = Vec::new();
        let mut stride = None;
        let mut steps = None;
        let combined = match method {
            Method::Saliency => saliency(model, x)?,
            Method::Ig => {
                steps = Some(self.steps);
                integrated_gradients(model, x, &self.mean_baseline()?, self.steps)?
            }
            Method::Eg => {
                steps = Some(self.steps);
                expected_gradients(model, x, self.ensemble()?, self.steps)?
            }
            Method::Fa => feature_ablation(model, x, &self.mean_baseline()?)?,
            Method::Occlusion => {
                windows = vec![largest];
                stride = Some(self.stride);
                occlusion(
                    model,
                    x,
                    &self.mean_baseline()?,
                    largest,
                    self.stride.stride(largest),
                )?
            }
            Method::Imo => {
                let s = imo(
                    model,
                    &self.input.spectrum,
                    self.ensemble()?,
                    &self.windows,
                    self.stride,
                )?;
                windows = self.windows.sizes().to_vec();
                stride = Some(self.stride);
                let combined = s.combined.clone();
                stack = Some(s);
                combined
            }
        };
        let (baselines, source_ids) = match (&self.ensemble, method) {
            (Some(e), m) if m != Method::Saliency => (e.len(), e.source_ids().to_vec()),
            _ => (0, Vec::new()),
        };
        let (per_window_mean, per_window_var, per_baseline) = match &stack {
            Some(s) => (
                s.per_window_mean.clone(),
                s.per_window_var.clone(),
                s.per_baseline.clone(),
            ),
            None => (Vec::new(), Vec::new(), None),
        };
        let windows = if stack.is_some() || method == Method::Occlusion {
            windows
        } else {
            Vec::new()
        };
        let result = ResultFile {
            method,
            windows,
            stride,
            baselines,
            steps,
            seed: self.seed,
            redshift: self.input.spectrum.redshift(),
            model_fingerprint: model.fingerprint(),
            input_digest: self.input_digest.clone(),
            dataset_digest: if method == Method::Saliency {
                "-".into()
            } else {
                self.dataset_digest.clone()
            },
            source_ids,
            per_window_mean,
            per_window_var,
            per_baseline,
            combined,
        };
        Ok(MethodRun { result, stack })
    }

    pub fn summary(&self, run: &MethodRun) -> Result<Summary> {
        let spectrum = &self.input.spectrum;
        let (argmax_pixel, max_abs) = argmax_abs(&run.result.combined);
        let (noise_floor, windows) = match &run.stack {
            Some(s) => {
                let spread = s.combined_spread();
                let floor = 3.0 * spread.iter().copied().fold(0.0, f64::max);
                let windows = s
                    .windows
                    .sizes()
                    .iter()
                    .zip(&s.per_window_mean)
                    .map(|(&window, row)| {
                        let (argmax_pixel, max_abs) = argmax_abs(row);
                        WindowSummary {
                            window,
                            argmax_pixel,
                            max_abs,
                        }
                    })
                    .collect();
                (Some(floor), windows)
            }
            None => (None, Vec::new()),
        };
        Ok(Summary {
            method: run.result.method.to_string(),
            n: spectrum.len(),
            input_score: score(&self.model, spectrum.flux())?,
            argmax_pixel,
            argmax_wavelength: spectrum.wavelengths()[argmax_pixel],
            max_abs,
            noise_floor,
            above_noise_floor: noise_floor.map(|f| max_abs > f),
            windows,
        })
    }

    fn spectrum_panel(&self) -> Panel {
        let mut panel = Panel::new(format!(
            "input spectrum, z = {:.4}",
            self.input.spectrum.redshift()
        ));
        if let Some(e) = &self.ensemble {
            for r in e.reconstructions() {
                panel.series.push(Series::thin(r.clone(), GRAY));
            }
        }
        panel.with(Series::new(self.input.spectrum.flux().to_vec(), BLACK))
    }

    fn window_panels(stack: &AttributionStack) -> Vec<Panel> {
        stack
            .windows
            .sizes()
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let mut panel = Panel::new(format!("IMO, W = {w}"));
                if let Some(pb) = &stack.per_baseline {
                    for trace in &pb[k] {
                        panel.series.push(Series::thin(trace.clone(), GRAY));
                    }
                }
                panel.with(Series::new(stack.per_window_mean[k].clone(), BLUE))
            })
            .collect()
    }

    /// Figure for a single method: spectrum, per-window panels, attribution.
    pub fn figure(&self, run: &MethodRun) -> Figure {
        let mut column = vec![self.spectrum_panel()];
        match &run.stack {
            Some(stack) => {
                column.extend(Self::window_panels(stack));
                column.push(
                    Panel::new("IMO, minimum-variance combination")
                        .with(Series::new(stack.combined.clone(), RED)),
                );
            }
            None => column.push(
                Panel::new(panel_title(&run.result))
                    .with(Series::new(run.result.combined.clone(), BLUE)),
            ),
        }
        let mut fig = Figure::new(self.input.spectrum.wavelengths().to_vec());
        fig.columns.push(column);
        fig
    }

    /// Side-by-side figure: methods on the left, IMO windows on the right.
    pub fn comparison_figure(&self, runs: &[MethodRun]) -> Figure {
        let mut left = vec![self.spectrum_panel()];
        let mut right = Vec::new();
        for run in runs {
            match &run.stack {
                Some(stack) => {
                    left.push(
                        Panel::new("IMO, minimum-variance combination")
                            .with(Series::new(stack.combined.clone(), RED)),
                    );
                    right = Self::window_panels(stack);
                }
                None => left.push(
                    Panel::new(panel_title(&run.result))
                        .with(Series::new(run.result.combined.clone(), BLUE)),
                ),
            }
        }
        let mut fig = Figure::new(self.input.spectrum.wavelengths().to_vec());
        fig.columns.push(left);
        if !right.is_empty() {
            fig.columns.push(right);
        }
        fig
    }
}

fn panel_title(result: &ResultFile) -> String {
    let name = match result.method {
        Method::Saliency => "saliency",
        Method::Ig => "integrated gradients",
        Method::Eg => "expected gradients",
        Method::Fa => "feature ablation",
        Method::Occlusion => "occlusion",
        Method::Imo => "IMO",
    };
    match (result.method, result.windows.first()) {
        (Method::Occlusion, Some(w)) => format!("{name}, W = {w}"),
        _ => name.to_string(),
    }
}

/// CSV of attribution vectors: one column per method, then one per IMO window.
pub fn comparison_csv(runs: &[MethodRun]) -> String {
    let mut header: Vec<String> = runs.iter().map(|r| r.result.method.to_string()).collect();
    let mut columns: Vec<&[f64]> = runs.iter().map(|r| r.result.combined.as_slice()).collect();
    for run in runs {
        if let Some(stack) = &run.stack {
            for (w, row) in stack.windows.sizes().iter().zip(&stack.per_window_mean) {
                header.push(format!("imo_w{w}"));
                columns.push(row);
            }
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| fmt_f64(c[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<FileEntry> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_at(&path))?;
    Ok(FileEntry::new(name, contents.as_bytes()))
}

fn write_result(dir: &Path, result: &ResultFile) -> Result<FileEntry> {
    let name = format!("{}.result", result.method);
    let path = dir.join(&name);
    save_result(&path, result).map_err(at(&path))?;
    let bytes = fs::read(&path).map_err(io_at(&path))?;
    Ok(FileEntry::new(&name, &bytes))
}

fn run_parameters(ctx: &Context, run: &RunArgs) -> serde_json::Value {
    serde_json::json!({
        "input": run.input,
        "dataset": run.dataset,
        "model": run.model,
        "windows": ctx.windows.sizes(),
        "stride": ctx.stride.as_str(),
        "baselines": ctx.ensemble.as_ref().map(|e| e.len()),
        "steps": ctx.steps,
        "seed": ctx.seed,
        "input_digest": ctx.input_digest,
        "dataset_digest": ctx.dataset_digest,
        "model_fingerprint": ctx.model.fingerprint(),
        "source_ids": ctx.ensemble.as_ref().map(|e| e.source_ids().to_vec()),
    })
}

/// `imo attribute`: one method, its result file, figure and summary.
pub fn attribute(args: &AttributeArgs) -> Result<Summary> {
    check_parameters(args.method, &args.run)?;
    let default_windows = match args.method {
        Method::Occlusion => vec![DEFAULT_OCCLUSION_WINDOW],
        _ => WindowSet::standard().sizes().to_vec(),
    };
    let ctx = Context::load(&args.run, &default_windows, needs_dataset(args.method))?;
    let run = ctx.run(args.method)?;
    let summary = ctx.summary(&run)?;
    let out = &args.run.out;
    fs::create_dir_all(out).map_err(io_at(out))?;
    let mut outputs = vec![write_result(out, &run.result)?];
    outputs.push(write_file(
        out,
        &format!("{}.svg", args.method),
        &ctx.figure(&run).to_svg(),
    )?);
    let manifest = Manifest {
        command: "attribute".into(),
        method: Some(args.method.to_string()),
        parameters: run_parameters(&ctx, &args.run),
        outputs,
        summary: serde_json::to_value(&summary)?,
    };
    manifest.write(out)?;
    Ok(summary)
}

/// `imo compare`: all six methods sharing one ensemble.
pub fn compare(args: &CompareArgs) -> Result<Vec<Summary>> {
    if args.run.dataset.is_none() {
        return Err(CliError::usage("compare needs --dataset"));
    }
    let ctx = Context::load(&args.run, WindowSet::standard().sizes(), true)?;
    let runs = Method::ALL
        .into_iter()
        .map(|m| ctx.run(m))
        .collect::<Result<Vec<_>>>()?;
    let summaries = runs
        .iter()
        .map(|r| ctx.summary(r))
        .collect::<Result<Vec<_>>>()?;
    let out = &args.run.out;
    fs::create_dir_all(out).map_err(io_at(out))?;
    let mut outputs = Vec::new();
    for run in &runs {
        outputs.push(write_result(out, &run.result)?);
    }
    outputs.push(write_file(out, "compare.csv", &comparison_csv(&runs))?);
    outputs.push(write_file(
        out,
        "compare.svg",
        &ctx.comparison_figure(&runs).to_svg(),
    )?);
    let manifest = Manifest {
        command: "compare".into(),
        method: None,
        parameters: run_parameters(&ctx, &args.run),
        outputs,
        summary: serde_json::to_value(&summaries)?,
    };
    manifest.write(out)?;
    Ok(summaries)
}
