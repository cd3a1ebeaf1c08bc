//! Spectrum and result files, dataset directories, and baseline sampling.
//!
//! Both file formats are line-oriented text: a `key: value` header opened by
//! `format_version`, then numeric sections, then an `end` marker. Every float
//! is written with 17 significant digits, so round trips are bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attribution::{BaselineEnsemble, Method, StridePolicy};
use crate::error::{Error, Result};
use crate::model::{score, ModelBundle};
use crate::spectrum::Spectrum;
use crate::synth::{AnomalyKind, AnomalyLabel};

pub const FORMAT_VERSION: u32 = 1;

/// Extension of spectrum files inside a dataset directory.
pub const SPECTRUM_EXTENSION: &str = "spec";

/// Full-precision decimal: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A spectrum with optional ground-truth labels, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFile {
    pub spectrum: Spectrum,
    pub labels: Vec<AnomalyLabel>,
}

impl SpectrumFile {
    pub fn new(spectrum: Spectrum) -> Self {
        SpectrumFile {
            spectrum,
            labels: Vec::new(),
        }
    }

    pub fn with_label(spectrum: Spectrum, label: AnomalyLabel) -> Self {
        SpectrumFile {
            spectrum,
            labels: vec![label],
        }
    }

    pub fn to_text(&self) -> String {
        let s = &self.spectrum;
        let mut out = String::new();
        out.push_str("# imo spectrum\n");
        let _ = writeln!(out, "format_version: {FORMAT_VERSION}");
        let _ = writeln!(out, "n: {}", s.len());
        let _ = writeln!(out, "redshift: {}", fmt_f64(s.redshift()));
        let _ = writeln!(out, "labels: {}", self.labels.len());
        for label in &self.labels {
            let _ = writeln!(out, "label: {}", format_label(label));
        }
        out.push_str("data:\n");
        for (w, f) in s.wavelengths().iter().zip(s.flux()) {
            let _ = writeln!(out, "{} {}", fmt_f64(*w), fmt_f64(*f));
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let version: u32 = lines.header("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                lines.line_no,
                format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
            ));
        }
        let n: usize = lines.header("n")?;
        let redshift: f64 = lines.header("redshift")?;
        if !(redshift.is_finite() && redshift >= 0.0) {
            return Err(Error::format(
                lines.line_no,
                format!("redshift must be finite and >= 0, got {redshift}"),
            ));
        }
        let count: usize = lines.header("labels")?;
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = lines.header_raw("label")?;
            let label = parse_label(raw).map_err(|m| Error::format(lines.line_no, m))?;
            if label.affected.iter().any(|&(a, b)| a > b || b > n) {
                return Err(Error::format(
                    lines.line_no,
                    format!("label range outside [0, {n})"),
                ));
            }
            labels.push(label);
        }
        lines.expect_marker("data:", "data")?;
        let mut wavelengths = Vec::with_capacity(n);
        let mut flux = Vec::with_capacity(n);
        for row in 0..n {
            let line = lines.next().ok_or_else(|| {
                Error::format(
                    lines.line_no + 1,
                    format!("data section truncated after {row} of {n} rows; missing section 'end'"),
                )
            })?;
            if line == "end" {
                return Err(Error::format(
                    lines.line_no,
                    format!("data section has {row} rows but n = {n}"),
                ));
            }
            let values = parse_row(line, lines.line_no)?;
            if values.len() != 2 {
                return Err(Error::format(
                    lines.line_no,
                    format!("expected 2 columns, found {}", values.len()),
                ));
            }
            wavelengths.push(values[0]);
            flux.push(values[1]);
        }
        lines.expect_marker("end", "end")?;
        let spectrum = Spectrum::new(flux, wavelengths, redshift)
            .map_err(|e| Error::format(lines.line_no, e.to_string()))?;
        Ok(SpectrumFile { spectrum, labels })
    }
}

pub fn save_spectrum(path: impl AsRef<Path>, file: &SpectrumFile) -> Result<()> {
    fs::write(path, file.to_text())?;
    Ok(())
}

pub fn load_spectrum(path: impl AsRef<Path>) -> Result<SpectrumFile> {
    SpectrumFile::parse(&fs::read_to_string(path)?)
}

fn format_label(label: &AnomalyLabel) -> String {
    let ranges: Vec<String> = label
        .affected
        .iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect();
    let peaks: Vec<String> = label.peaks.iter().map(|p| p.to_string()).collect();
    let mut out = format!(
        "{} affected={} peaks={}",
        label.kind.as_str(),
        ranges.join(","),
        peaks.join(",")
    );
    for (k, v) in &label.parameters {
        let _ = write!(out, " {k}={}", fmt_f64(*v));
    }
    out
}

fn parse_label(raw: &str) -> std::result::Result<AnomalyLabel, String> {
    let mut parts = raw.split_whitespace();
    let kind: AnomalyKind = parts
        .next()
        .ok_or("empty label")?
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let mut affected = None;
    let mut peaks = None;
    let mut parameters = Vec::new();
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("label field {part:?} is not key=value"))?;
        match key {
            "affected" => {
                let ranges = split_list(value)
                    .map(|r| {
                        let (a, b) = r.split_once(':').ok_or(format!("bad range {r:?}"))?;
                        Ok((parse_usize(a)?, parse_usize(b)?))
                    })
                    .collect::<std::result::Result<Vec<_>, String>>()?;
                affected = Some(ranges);
            }
            "peaks" => {
                peaks = Some(
                    split_list(value)
                        .map(parse_usize)
                        .collect::<std::result::Result<Vec<_>, String>>()?,
                );
            }
            _ => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| format!("label parameter {key} is not a number"))?;
                parameters.push((key.to_string(), v));
            }
        }
    }
    Ok(AnomalyLabel {
        kind,
        affected: affected.ok_or("label lacks affected=")?,
        peaks: peaks.ok_or("label lacks peaks=")?,
        parameters,
    })
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').filter(|s| !s.is_empty())
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.parse().map_err(|_| format!("{s:?} is not a non-negative integer"))
}

/// Everything recorded about one attribution run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    pub method: Method,
    /// Window sizes; empty for methods without windows.
    pub windows: Vec<usize>,
    pub stride: Option<StridePolicy>,
    /// Number of baselines drawn (0 when the method uses none).
    pub baselines: usize,
    pub steps: Option<usize>,
    pub seed: u64,
    pub redshift: f64,
    pub model_fingerprint: String,
    /// SHA-256 of the input spectrum file contents.
    pub input_digest: String,
    /// SHA-256 over the dataset's spectrum files, in source-id order.
    pub dataset_digest: String,
    pub source_ids: Vec<String>,
    /// K rows (IMO only).
    pub per_window_mean: Vec<Vec<f64>>,
    pub per_window_var: Vec<Vec<f64>>,
    /// `[k][j][i]`, when retained.
    pub per_baseline: Option<Vec<Vec<Vec<f64>>>>,
    /// The method's attribution vector (combined IMO for `imo`).
    pub combined: Vec<f64>,
}

impl ResultFile {
    pub fn n(&self) -> usize {
        self.combined.len()
    }

    pub fn k(&self) -> usize {
        self.per_window_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n(), self.k());
        let bad = |m: String| Err(Error::input(m));
        if self.per_window_var.len() != k {
            return bad(format!(
                "{k} mean rows but {} variance rows",
                self.per_window_var.len()
            ));
        }
        if k > 0 && self.windows.len() != k {
            return bad(format!("{k} matrix rows but {} windows", self.windows.len()));
        }
        if self
            .per_window_mean
            .iter()
            .chain(&self.per_window_var)
            .any(|r| r.len() != n)
        {
            return bad(format!("matrix rows must have length {n}"));
        }
        if let Some(pb) = &self.per_baseline {
            if pb.len() != k
                || pb
                    .iter()
                    .any(|w| w.len() != self.baselines || w.iter().any(|r| r.len() != n))
            {
                return bad(format!(
                    "per-baseline tensor must be {k}×{}×{n}",
                    self.baselines
                ));
            }
        }
        if self.source_ids.len() != self.baselines {
            return bad(format!(
                "{} source ids for {} baselines",
                self.source_ids.len(),
                self.baselines
            ));
        }
        if self.source_ids.iter().any(|s| s.is_empty() || s.contains(char::is_whitespace)) {
            return bad("source ids must be non-empty and free of whitespace".into());
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        out.push_str("# imo attribution result\n");
        let _ = writeln!(out, "format_version: {FORMAT_VERSION}");
        let _ = writeln!(out, "method: {}", self.method);
        let _ = writeln!(out, "n: {}", self.n());
        let _ = writeln!(out, "k: {}", self.k());
        let _ = writeln!(out, "m: {}", self.baselines);
        let windows: Vec<String> = self.windows.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(
            out,
            "windows: {}",
            opt((!windows.is_empty()).then(|| windows.join(" ")))
        );
        let _ = writeln!(
            out,
            "stride: {}",
            opt(self.stride.map(|s| s.as_str().to_string()))
        );
        let _ = writeln!(out, "steps: {}", opt(self.steps.map(|s| s.to_string())));
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "redshift: {}", fmt_f64(self.redshift));
        let _ = writeln!(out, "model_fingerprint: {}", self.model_fingerprint);
        let _ = writeln!(out, "input_digest: {}", self.input_digest);
        let _ = writeln!(out, "dataset_digest: {}", self.dataset_digest);
        let _ = writeln!(
            out,
            "source_ids: {}",
            opt((!self.source_ids.is_empty()).then(|| self.source_ids.join(" ")))
        );
        let _ = writeln!(
            out,
            "per_baseline: {}",
            if self.per_baseline.is_some() { "yes" } else { "no" }
        );
        write_section(&mut out, "per_window_mean", &self.per_window_mean);
        write_section(&mut out, "per_window_var", &self.per_window_var);
        if let Some(pb) = &self.per_baseline {
            let rows: Vec<Vec<f64>> = pb.iter().flatten().cloned().collect();
            write_section(&mut out, "per_baseline", &rows);
        }
        write_section(&mut out, "combined", std::slice::from_ref(&self.combined));
        out.push_str("end\n");
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let version: u32 = lines.header("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                lines.line_no,
                format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
            ));
        }
        let method: Method = lines
            .header_raw("method")?
            .parse()
            .map_err(|e: Error| Error::format(lines.line_no, e.to_string()))?;
        let n: usize = lines.header("n")?;
        let k: usize = lines.header("k")?;
        let m: usize = lines.header("m")?;
        let windows = match lines.header_raw("windows")? {
            "-" => Vec::new(),
            raw => raw
                .split_whitespace()
                .map(|w| w.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::format(lines.line_no, "windows must be integers"))?,
        };
        let stride = match lines.header_raw("stride")? {
            "-" => None,
            raw => Some(
                raw.parse::<StridePolicy>()
                    .map_err(|e| Error::format(lines.line_no, e.to_string()))?,
            ),
        };
        let steps = match lines.header_raw("steps")? {
            "-" => None,
            raw => Some(
                raw.parse::<usize>()
                    .map_err(|_| Error::format(lines.line_no, "steps must be an integer"))?,
            ),
        };
        let seed: u64 = lines.header("seed")?;
        let redshift: f64 = lines.header("redshift")?;
        let model_fingerprint = lines.header_raw("model_fingerprint")?.to_string();
        let input_digest = lines.header_raw("input_digest")?.to_string();
        let dataset_digest = lines.header_raw("dataset_digest")?.to_string();
        let source_ids: Vec<String> = match lines.header_raw("source_ids")? {
            "-" => Vec::new(),
            raw => raw.split_whitespace().map(str::to_string).collect(),
        };
        if source_ids.len() != m {
            return Err(Error::format(
                lines.line_no,
                format!("{} source ids but m = {m}", source_ids.len()),
            ));
        }
        let has_per_baseline = match lines.header_raw("per_baseline")? {
            "yes" => true,
            "no" => false,
            other => {
                return Err(Error::format(
                    lines.line_no,
                    format!("per_baseline must be yes or no, got {other:?}"),
                ))
            }
        };
        let per_window_mean = lines.section("per_window_mean", k, n)?;
        let per_window_var = lines.section("per_window_var", k, n)?;
        let per_baseline = if has_per_baseline {
            let rows = lines.section("per_baseline", k * m, n)?;
            let mut rows = rows.into_iter();
            Some(
                (0..k)
                    .map(|_| rows.by_ref().take(m).collect())
                    .collect::<Vec<Vec<Vec<f64>>>>(),
            )
        } else {
            None
        };
        let combined = lines
            .section("combined", 1, n)?
            .pop()
            .unwrap_or_default();
        lines.expect_marker("end", "end")?;
        let result = ResultFile {
            method,
            windows,
            stride,
            baselines: m,
            steps,
            seed,
            redshift,
            model_fingerprint,
            input_digest,
            dataset_digest,
            source_ids,
            per_window_mean,
            per_window_var,
            per_baseline,
            combined,
        };
        result
            .validate()
            .map_err(|e| Error::format(lines.line_no, e.to_string()))?;
        Ok(result)
    }
}

pub fn save_result(path: impl AsRef<Path>, result: &ResultFile) -> Result<()> {
    fs::write(path, result.to_text()?)?;
    Ok(())
}

pub fn load_result(path: impl AsRef<Path>) -> Result<ResultFile> {
    ResultFile::parse(&fs::read_to_string(path)?)
}

fn write_section(out: &mut String, name: &str, rows: &[Vec<f64>]) {
    let _ = writeln!(out, "section {name} {}", rows.len());
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
}

fn parse_row(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::format(line_no, format!("{tok:?} is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::format(line_no, format!("non-finite value {tok}")))
            }
        })
        .collect()
}

/// Line cursor that skips blank lines and `#` comments and tracks line numbers.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        for (i, line) in self.inner.by_ref() {
            self.line_no = i + 1;
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Some(line);
            }
        }
        None
    }

    fn header_raw(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next().ok_or_else(|| {
            Error::format(self.line_no + 1, format!("file ends before header field '{key}'"))
        })?;
        match line.split_once(':') {
            Some((k, v)) if k.trim() == key => Ok(v.trim()),
            _ => Err(Error::format(
                self.line_no,
                format!("expected header field '{key}', found {line:?}"),
            )),
        }
    }

    fn header<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.header_raw(key)?;
        raw.parse()
            .map_err(|_| Error::format(self.line_no, format!("cannot parse {key} from {raw:?}")))
    }

    fn expect_marker(&mut self, marker: &str, section: &str) -> Result<()> {
        match self.next() {
            Some(line) if line == marker => Ok(()),
            Some(line) => Err(Error::format(
                self.line_no,
                format!("expected '{marker}', found {line:?}"),
            )),
            None => Err(Error::format(
                self.line_no + 1,
                format!("file truncated: missing section '{section}'"),
            )),
        }
    }

    fn section(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
        let line = self.next().ok_or_else(|| {
            Error::format(
                self.line_no + 1,
                format!("file truncated: missing section '{name}'"),
            )
        })?;
        let declared = line
            .strip_prefix("section ")
            .and_then(|rest| rest.split_once(' '))
            .filter(|(n, _)| *n == name)
            .and_then(|(_, count)| count.trim().parse::<usize>().ok())
            .ok_or_else(|| {
                Error::format(
                    self.line_no,
                    format!("expected 'section {name} <rows>', found {line:?}"),
                )
            })?;
        if declared != rows {
            return Err(Error::format(
                self.line_no,
                format!("section {name} declares {declared} rows, expected {rows}"),
            ));
        }
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let line = self.next().ok_or_else(|| {
                Error::format(
                    self.line_no + 1,
                    format!("section {name} truncated after {r} of {rows} rows"),
                )
            })?;
            if line.starts_with("section ") || line == "end" {
                return Err(Error::format(
                    self.line_no,
                    format!("section {name} has {r} rows, expected {rows}"),
                ));
            }
            let row = parse_row(line, self.line_no)?;
            if row.len() != cols {
                return Err(Error::format(
                    self.line_no,
                    format!("section {name} row {r} has {} values, expected {cols}", row.len()),
                ));
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Spectra with stable identifiers, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    spectra: Vec<Spectrum>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, spectra: Vec<Spectrum>) -> Result<Self> {
        if ids.len() != spectra.len() {
            return Err(Error::input("dataset ids and spectra differ in count"));
        }
        if ids.iter().any(|s| s.is_empty() || s.contains(char::is_whitespace)) {
            return Err(Error::input("dataset ids must be non-empty without whitespace"));
        }
        Ok(Dataset { ids, spectra })
    }

    /// Ids `spec_0000`, `spec_0001`, …
    pub fn from_spectra(spectra: Vec<Spectrum>) -> Self {
        let ids = (0..spectra.len()).map(|i| format!("spec_{i:04}")).collect();
        Dataset { ids, spectra }
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    /// SHA-256 over each spectrum's file text, in order.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (id, s) in self.ids.iter().zip(&self.spectra) {
            hasher.update(id.as_bytes());
            hasher.update(SpectrumFile::new(s.clone()).to_text().as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// SHA-256 of a spectrum file's canonical text.
pub fn spectrum_digest(file: &SpectrumFile) -> String {
    sha256_hex(file.to_text().as_bytes())
}

/// Writes `<dir>/<id>.spec` for every entry. Returns the paths written.
pub fn save_dataset(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    dataset
        .ids
        .iter()
        .zip(&dataset.spectra)
        .map(|(id, s)| {
            let path = dir.join(format!("{id}.{SPECTRUM_EXTENSION}"));
            save_spectrum(&path, &SpectrumFile::new(s.clone()))?;
            Ok(path)
        })
        .collect()
}

/// Loads every `*.spec` file in `dir`, sorted by file name.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == SPECTRUM_EXTENSION))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::input(format!(
            "no .{SPECTRUM_EXTENSION} files in {}",
            dir.as_ref().display()
        )));
    }
    let mut ids = Vec::with_capacity(paths.len());
    let mut spectra = Vec::with_capacity(paths.len());
    for p in paths {
        let file = load_spectrum(&p).map_err(|e| match e {
            Error::Format { line, message } => Error::Format {
                line,
                message: format!("{}: {message}", p.display()),
            },
            other => other,
        })?;
        let id = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        ids.push(id);
        spectra.push(file.spectrum);
    }
    Dataset::new(ids, spectra)
}

/// Draws `m` baselines and reconstructs each at redshift `z`.
///
/// Draws are without replacement when `m <= |dataset|` and with replacement
/// otherwise. Each draw is encoded at its own redshift, decoded at `z` and
/// scored by `model`.
pub fn sample_baselines(
    dataset: &Dataset,
    m: usize,
    model: &(impl ModelBundle + ?Sized),
    z: f64,
    seed: u64,
) -> Result<BaselineEnsemble> {
    if dataset.is_empty() {
        return Err(Error::input("cannot sample baselines from an empty dataset"));
    }
    if m == 0 {
        return Err(Error::input("need at least one baseline"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if m <= dataset.len() {
        index::sample(&mut rng, dataset.len(), m).into_vec()
    } else {
        (0..m).map(|_| rng.random_range(0..dataset.len())).collect()
    };
    let mut reconstructions = Vec::with_capacity(m);
    let mut scores = Vec::with_capacity(m);
    let mut ids = Vec::with_capacity(m);
    for &p in &picks {
        let latent = model.encode_observed(&dataset.spectra[p])?;
        let recon = model.decode(&latent, z)?;
        scores.push(score(model, &recon)?);
        reconstructions.push(recon);
        ids.push(dataset.ids[p].clone());
    }
    BaselineEnsemble::new(reconstructions, scores, ids, z)
}
