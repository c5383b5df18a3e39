//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Overrides};
use crate::error::{exit, Result};
use crate::{analyze, characterize, measure, plot};

#[derive(Debug, Parser)]
#[command(name = "oamdm", version, about = "Direct measurement of OAM state vectors by weak values, and OAM sorter simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding `noise.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exact expectation values instead of simulated counts.
    #[arg(long)]
    pub noiseless: bool,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the direct measurement and write reconstructions, fits and a manifest.
    Measure(RunArgs),
    /// Simulate the mode sorter with and without the fan-out and export the masks.
    Sorter(RunArgs),
    /// Re-fit a reconstruction CSV.
    Analyze {
        /// sinc-squared, quadratic-phase or linear-phase
        #[arg(long)]
        model: String,
        #[arg(long)]
        input: PathBuf,
        /// Unrotated reconstruction, required by linear-phase.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a measurement bundle into long-format plot tables.
    Plotdata {
        #[arg(long)]
        bundle: PathBuf,
        /// Defaults to `<bundle>/plot`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl RunArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        config.apply(&Overrides {
            seed: self.seed,
            noiseless: self.noiseless,
            out: self.out.as_ref().map(|p| p.display().to_string()),
        });
        config.validate()?;
        Ok(config)
    }
}

/// Executes a parsed command; returns the text for stdout.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Measure(args) => {
            let config = args.resolve()?;
            let (outcome, _) = measure::run_direct_measurement(&config)?;
            let mut text = serde_json::to_string_pretty(&serde_json::json!({
                "directory": config.output.directory,
                "width": outcome.width(),
                "summary": outcome.summary,
            }))
            .expect("summary serializes");
            text.push('\n');
            Ok(text)
        }
        Command::Sorter(args) => {
            let config = args.resolve()?;
            let (outcome, _) = characterize::run_sorter_characterization(&config)?;
            let mut text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
            text.push('\n');
            Ok(text)
        }
        Command::Analyze {
            model,
            input,
            reference,
            out,
        } => {
            let fits = analyze::analyze_files(&model, &input, reference.as_deref(), out.as_deref())?;
            let mut text = serde_json::to_string_pretty(&fits).expect("fits serialize");
            text.push('\n');
            Ok(text)
        }
        Command::Plotdata { bundle, out } => {
            let out = out.unwrap_or_else(|| bundle.join("plot"));
            let files = plot::emit_plot_data(&bundle, &out)?;
            Ok(files.iter().map(|p| format!("{}\n", p.display())).collect())
        }
    }
}

/// Parses `args`, runs, and returns the process exit code. Failures are printed
/// to stderr as one JSON object.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return exit::OK;
            }
            let json = serde_json::json!({
                "error": "usage",
                "exit_code": exit::CONFIG,
                "message": e.to_string().trim_end(),
            });
            eprintln!("{json}");
            return exit::CONFIG;
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            exit::OK
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
