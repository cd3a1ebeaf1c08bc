//! Command-line driver: synthesize data, attribute anomaly scores, compare
//! methods. Each run writes its results, an SVG figure and a `manifest.json`.

pub mod error;
pub mod manifest;
pub mod plot;
pub mod run;
pub mod synth;

use clap::{Parser, Subcommand};

pub use error::{exit, CliError, Result};
pub use run::{attribute, compare, AttributeArgs, CompareArgs, RunArgs, Summary};
pub use synth::{synth, SynthArgs};

#[derive(Debug, Parser)]
#[command(name = "imo", version, about = "Explain anomaly scores of 1-D spectra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset, fitted model and anomalous test spectra.
    Synth(SynthArgs),
    /// Run one attribution method on an input spectrum.
    Attribute(AttributeArgs),
    /// Run all six methods with a shared baseline ensemble.
    Compare(CompareArgs),
}

/// Executes `cli`, returning the text to print on success.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(args) => {
            let suite = synth(args)?;
            Ok(format!(
                "wrote {} spectra and 3 test spectra to {}",
                suite.dataset.len(),
                args.out.display()
            ))
        }
        Command::Attribute(args) => Ok(attribute(args)?.render()),
        Command::Compare(args) => Ok(compare(args)?
            .iter()
            .map(Summary::render)
            .collect::<Vec<_>>()
            .join("\n")),
    }
}
