//! Command-line front end: simulate histograms, fit them, combine channel
//! estimates, tabulate first-principles decay curves and run replicate
//! studies. Every command writes a JSON run manifest next to its outputs;
//! `tcspc rerun <manifest>` repeats the run byte for byte.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage: bad flags, config file or option values |
//! | 3 | I/O: unreadable, unwritable or malformed input file |
//! | 4 | schema: report contents do not fit the request |
//! | 5 | numeric: evaluation, quadrature or degeneracy failure |

pub mod combine;
pub mod fit;
pub mod io;
pub mod manifest;
pub mod roundtrip;
pub mod simulate;
pub mod theory;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

/// Default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "TCSPC_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] tcspc::Error),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    /// Attach the offending file to a parse error.
    pub fn in_file(path: &Path, err: tcspc::Error) -> Self {
        match err {
            tcspc::Error::Format { .. } => CliError::io(path, err),
            other => CliError::Core(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use tcspc::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::Config(_) => EXIT_USAGE,
                E::Format { .. } => EXIT_IO,
                E::Schema(_) => EXIT_SCHEMA,
                E::Domain(_)
                | E::Quadrature { .. }
                | E::Evaluation { .. }
                | E::Degenerate(_)
                | E::RankDeficient { .. } => EXIT_NUMERIC,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tcspc",
    version,
    about = "TCSPC decay simulation, fitting and theory curves"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "options", rename_all = "lowercase")]
pub enum Command {
    /// Generate Poisson-sampled histograms from a model or an energy distribution.
    Simulate(simulate::SimulateArgs),
    /// Fit a decay model to a histogram.
    Fit(fit::FitArgs),
    /// Inverse-variance combination of per-channel estimates.
    Combine(combine::CombineArgs),
    /// Survival probability and intensity from an energy distribution.
    Theory(theory::TheoryArgs),
    /// Simulate-and-fit replicate study.
    Roundtrip(roundtrip::RoundtripArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a finished command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    /// File names inside `out_dir`, manifest last.
    pub files: Vec<String>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
}

/// Files written by a command body, before the manifest.
pub struct Produced {
    pub files: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub manifest_stem: String,
    pub summary: Vec<String>,
}

impl Command {
    fn out_mut(&mut self) -> &mut Option<PathBuf> {
        match self {
            Command::Simulate(a) => &mut a.out,
            Command::Fit(a) => &mut a.out,
            Command::Combine(a) => &mut a.out,
            Command::Theory(a) => &mut a.out,
            Command::Roundtrip(a) => &mut a.out,
            Command::Rerun(a) => &mut a.out,
        }
    }

    /// Fill defaults and presets so the options fully describe the run.
    fn resolve(self) -> Result<Self, CliError> {
        Ok(match self {
            Command::Simulate(a) => Command::Simulate(a.resolve()?),
            Command::Fit(a) => Command::Fit(a.resolve()?),
            Command::Combine(a) => Command::Combine(a.resolve()?),
            Command::Theory(a) => Command::Theory(a.resolve()?),
            Command::Roundtrip(a) => Command::Roundtrip(a.resolve()?),
            Command::Rerun(a) => Command::Rerun(a),
        })
    }
}

/// Execute a command and write its manifest.
pub fn run(command: Command) -> Result<Outcome, CliError> {
    let mut command = match command {
        Command::Rerun(args) => {
            let text = io::read_text(&args.manifest)?;
            let manifest =
                RunManifest::from_json(&text).map_err(|e| CliError::in_file(&args.manifest, e))?;
            let mut recorded = manifest.invocation;
            if matches!(recorded, Command::Rerun(_)) {
                return Err(CliError::Core(tcspc::Error::Schema(
                    "a manifest cannot record a rerun".into(),
                )));
            }
            if let Some(out) = args.out {
                *recorded.out_mut() = Some(out);
            }
            recorded
        }
        other => other,
    };
    let out_dir = io::resolve_out_dir(command.out_mut().as_deref())?;
    *command.out_mut() = Some(out_dir.clone());
    let command = command.resolve()?;

    let produced = match &command {
        Command::Simulate(a) => simulate::execute(a, &out_dir)?,
        Command::Fit(a) => fit::execute(a, &out_dir)?,
        Command::Combine(a) => combine::execute(a, &out_dir)?,
        Command::Theory(a) => theory::execute(a, &out_dir)?,
        Command::Roundtrip(a) => roundtrip::execute(a, &out_dir)?,
        Command::Rerun(_) => unreachable!("resolved above"),
    };
    let manifest_name = format!("{}.manifest.json", produced.manifest_stem);
    let manifest = RunManifest::new(
        command,
        out_dir.clone(),
        produced.inputs,
        produced.seed,
        produced.files.clone(),
    );
    io::write_atomic(&out_dir.join(&manifest_name), &manifest.to_json()?)?;
    let mut files = produced.files;
    files.push(manifest_name);
    Ok(Outcome {
        out_dir,
        files,
        summary: produced.summary,
    })
}

/// Parse `argv` (program name first, `--config` expanded) and run.
pub fn run_from_args(argv: Vec<String>) -> Result<Outcome, CliError> {
    let argv = io::expand_config(argv)?;
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli.command)
}
