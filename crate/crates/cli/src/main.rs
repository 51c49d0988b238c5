//! Batch front end for the cocycle library: reads one JSON run
//! configuration, executes the named pipeline, and writes deterministic
//! report files.
//!
//! Exit codes: 0 on success, 2 when the configuration or inputs are
//! invalid, 3 when a numerical procedure fails (no convergence, breached
//! precondition, missing certificate). Failures print a one-line JSON
//! reason to stderr.

mod config;
mod pipelines;
mod report;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::config::parse_config;
use crate::report::Report;

/// Failure classification mirrored in the exit code.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorKind {
    /// Bad configuration or inputs; exit 2.
    Validation,
    /// A numerical procedure failed; exit 3.
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub reason: String,
}

impl CliError {
    pub fn validation(reason: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, reason: reason.into() }
    }

    pub fn numerical(reason: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Numerical, reason: reason.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
        }
    }

    /// Machine-readable failure line.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "kind": match self.kind {
                ErrorKind::Validation => "validation",
                ErrorKind::Numerical => "numerical",
            },
            "reason": self.reason,
        })
        .to_string()
    }
}

impl From<stocycle::Error> for CliError {
    fn from(e: stocycle::Error) -> Self {
        use stocycle::Error as E;
        let kind = match &e {
            E::DimensionMismatch(_) | E::NotStochastic(_) | E::InvalidInput(_) => {
                ErrorKind::Validation
            }
            E::SingularRestriction(_)
            | E::NotInvariant { .. }
            | E::NoContraction { .. }
            | E::NotDominated { .. }
            | E::NoConvergence { .. }
            | E::NoSpectralGap(_)
            | E::TransportPrecondition(_)
            | E::RepairFailed(_) => ErrorKind::Numerical,
        };
        Self { kind, reason: e.to_string() }
    }
}

/// Report format: `json` writes the report alone, `csv` adds the
/// command's table next to it.
#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "stocycle",
    version,
    about = "Batch analysis pipelines for stochastic-matrix cocycles",
    long_about = "Reads a JSON run configuration ({\"command\": ..., ...}) and executes the \
                  named pipeline: gen, lyap, dominate, perturb, access, ruelle, or classify. \
                  Reports are deterministic for a fixed configuration and seed."
)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Override the seed specified in the configuration.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Directory that receives report files (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Worker threads; 0 keeps the library default.
    #[arg(long, value_name = "N", default_value_t = 0)]
    threads: usize,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let raw = std::fs::read(&cli.config).map_err(|e| {
        CliError::validation(format!("cannot read config {}: {e}", cli.config.display()))
    })?;
    let cfg = parse_config(&raw)?;
    let seed = cli.seed.unwrap_or_else(|| cfg.seed());

    let execute = || pipelines::dispatch(&cfg, seed);
    let output = if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?
            .install(execute)
    } else {
        execute()
    }?;

    std::fs::create_dir_all(&cli.out).map_err(|e| {
        CliError::validation(format!("cannot create {}: {e}", cli.out.display()))
    })?;
    let mut written = Vec::new();

    let report = Report::new(cfg.command(), seed, &raw, output.result);
    let report_path = cli.out.join("report.json");
    std::fs::write(&report_path, report.to_bytes()).map_err(|e| {
        CliError::validation(format!("cannot write {}: {e}", report_path.display()))
    })?;
    written.push(report_path.display().to_string());

    if cli.format == Format::Csv {
        if let Some(csv) = &output.csv {
            let csv_path = cli.out.join(format!("{}.csv", cfg.command()));
            std::fs::write(&csv_path, csv.render()).map_err(|e| {
                CliError::validation(format!("cannot write {}: {e}", csv_path.display()))
            })?;
            written.push(csv_path.display().to_string());
        }
    }
    for (name, bytes) in &output.files {
        let path = cli.out.join(name);
        std::fs::write(&path, bytes).map_err(|e| {
            CliError::validation(format!("cannot write {}: {e}", path.display()))
        })?;
        written.push(path.display().to_string());
    }

    Ok(format!("{}\nwrote: {}", output.summary, written.join(", ")))
}
