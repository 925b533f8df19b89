//! Command-line front end for beta-binomial/gamma-Poisson regression.

pub mod commands;
pub mod data;
pub mod error;
pub mod output;
pub mod report;
pub mod spec;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::FitFlags;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "bbgp", version, about = "Beta-binomial/gamma-Poisson regression for repeated count data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Gradient max-norm convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Fit main effects first, then add interactions one at a time.
    #[arg(long)]
    pub staged: bool,
}

impl From<&FitArgs> for FitFlags {
    fn from(a: &FitArgs) -> Self {
        FitFlags {
            tol: a.tol,
            max_iter: a.max_iter,
            staged: a.staged,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a model spec with coefficient values.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Number of units (overrides layout.units).
        #[arg(long)]
        units: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model and write the coefficient report.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        /// JSON report path; the text report goes next to it as .txt.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for symmetry with `simulate`; fitting is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Likelihood-ratio test of a reduced model against a full model.
    Lrtest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        reduced: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Natural-scale summaries from a fit report.
    Predict {
        /// JSON report written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Profiles to evaluate; defaults to every factor-level combination.
        #[arg(long)]
        contrast: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: &Cli) -> Result<i32> {
    let status = match &cli.command {
        Command::Simulate { spec, units, seed, out } => commands::simulate(spec, *units, *seed, out)?,
        Command::Fit { data, spec, fit, out, .. } => commands::fit_cmd(data, spec, &fit.into(), out.as_deref())?,
        Command::Lrtest {
            data,
            full,
            reduced,
            fit,
            out,
        } => commands::lrtest_cmd(data, full, reduced, &fit.into(), out.as_deref())?,
        Command::Predict { fit, contrast, out } => commands::predict_cmd(fit, contrast.as_deref(), out.as_deref())?,
    };
    Ok(status.code())
}
