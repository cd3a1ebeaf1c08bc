//! The `synth` subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use imo_core::io::{save_dataset, save_spectrum, Dataset, SpectrumFile};
use imo_core::{SynthConfig, SyntheticSuite};

use crate::error::{at, io_at, CliError, Result};
use crate::manifest::{FileEntry, Manifest};

pub const DATASET_DIR: &str = "dataset";
pub const MODEL_FILE: &str = "model.toml";
pub const CONFIG_FILE: &str = "synth_config.toml";
pub const CLEAN_FILE: &str = "clean.spec";
pub const CALIBRATION_FILE: &str = "calibration_jump.spec";
pub const DOUBLE_PEAK_FILE: &str = "double_peak.spec";

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthesis parameters (TOML); built-in defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of dataset spectra.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Redshift of the clean and anomalous test spectra.
    #[arg(long, default_value_t = 0.1)]
    pub redshift: f64,
    #[arg(long, default_value_t = 0.0)]
    pub z_min: f64,
    #[arg(long, default_value_t = 0.2)]
    pub z_max: f64,
}

fn load_config(path: &Path) -> Result<SynthConfig> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    SynthConfig::from_toml(&text).map_err(|e| match e {
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

fn write(dir: &Path, name: &str, text: &str) -> Result<FileEntry> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_at(&path))?;
    Ok(FileEntry::new(name, text.as_bytes()))
}

fn write_spectrum(dir: &Path, name: &str, file: &SpectrumFile) -> Result<FileEntry> {
    let path = dir.join(name);
    save_spectrum(&path, file).map_err(at(&path))?;
    Ok(FileEntry::new(name, file.to_text().as_bytes()))
}

/// Writes the dataset, the fitted model, and the clean and anomalous test
/// spectra. Returns the suite that was written.
pub fn synth(args: &SynthArgs) -> Result<SyntheticSuite> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => SynthConfig::default(),
    };
    config.seed = args.seed;
    if args.count == 0 {
        return Err(CliError::usage("--count must be positive"));
    }
    let suite = SyntheticSuite::build(
        &config,
        args.count,
        (args.z_min, args.z_max),
        args.redshift,
        args.seed,
    )?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(io_at(out))?;

    let dataset = Dataset::from_spectra(suite.dataset.clone());
    let dataset_dir = out.join(DATASET_DIR);
    save_dataset(&dataset_dir, &dataset).map_err(at(&dataset_dir))?;
    let mut outputs: Vec<FileEntry> = dataset
        .ids()
        .iter()
        .zip(dataset.spectra())
        .map(|(id, s)| {
            let text = SpectrumFile::new(s.clone()).to_text();
            FileEntry::new(&format!("{DATASET_DIR}/{id}.spec"), text.as_bytes())
        })
        .collect();

    outputs.push(write(out, CONFIG_FILE, &config.to_toml()?)?);
    outputs.push(write(out, MODEL_FILE, &suite.model.to_toml()?)?);
    outputs.push(write_spectrum(
        out,
        CLEAN_FILE,
        &SpectrumFile::new(suite.clean.clone()),
    )?);
    let (calibration, calibration_label) = &suite.calibration;
    outputs.push(write_spectrum(
        out,
        CALIBRATION_FILE,
        &SpectrumFile::with_label(calibration.clone(), calibration_label.clone()),
    )?);
    let (double_peak, double_peak_label) = &suite.double_peak;
    outputs.push(write_spectrum(
        out,
        DOUBLE_PEAK_FILE,
        &SpectrumFile::with_label(double_peak.clone(), double_peak_label.clone()),
    )?);

    let manifest = Manifest {
        command: "synth".into(),
        method: None,
        parameters: serde_json::json!({
            "seed": args.seed,
            "count": args.count,
            "z_range": [args.z_min, args.z_max],
            "test_redshift": args.redshift,
            "config": args.config,
            "dataset_digest": dataset.digest(),
        }),
        outputs,
        summary: serde_json::json!({
            "anomalies": {
                CALIBRATION_FILE: calibration_label,
                DOUBLE_PEAK_FILE: double_peak_label,
            },
        }),
    };
    manifest.write(out)?;
    Ok(suite)
}
