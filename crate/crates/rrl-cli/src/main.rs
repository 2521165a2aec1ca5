//! `rrl`: risk curves and simulations for ridge and min-norm regression in
//! the proportional high-dimensional regime.
//!
//! Every subcommand prints one flat table (CSV with a commented header, or
//! JSON) and exits 0 on success, 2 on bad flags, 3 on numerical failure.

mod args;
mod commands;
mod grid;
mod table;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{CliError, CvArgs, NonlinearArgs, RidgeTheoryArgs, SimulateArgs, TheoryArgs};
use table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "rrl",
    version,
    about = "Risk curves for ridge and min-norm regression in the proportional regime"
)]
struct Cli {
    /// Write the table to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Output layout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Limiting min-norm risk over an aspect-ratio grid.
    Theory(TheoryArgs),
    /// Limiting ridge risk over an aspect-ratio by penalty grid.
    RidgeTheory(RidgeTheoryArgs),
    /// Monte Carlo conditional risk next to the limiting curve.
    Simulate(SimulateArgs),
    /// Monte Carlo leave-one-out and generalized CV curves with tuning.
    Cv(CvArgs),
    /// Laurent coefficients and ridgeless variance for nonlinear features.
    Nonlinear(NonlinearArgs),
}

/// Honors `RRL_THREADS` before any parallel region starts; results do not
/// depend on the thread count, only wall time does.
fn init_threads() {
    if let Ok(raw) = std::env::var("RRL_THREADS") {
        match raw.parse::<usize>() {
            Ok(k) if k >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => eprintln!("warning: ignoring RRL_THREADS = {raw:?}, need a positive integer"),
        }
    }
}

fn emit(table: &Table, output: Option<&PathBuf>, format: Format) -> std::io::Result<()> {
    let mut sink: Box<dyn Write> = match output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        Format::Csv => table.write_csv(&mut sink)?,
        Format::Json => table.write_json(&mut sink)?,
    }
    sink.flush()
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Theory(a) => commands::theory(a),
        Command::RidgeTheory(a) => commands::ridge_theory(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Cv(a) => commands::cv(a),
        Command::Nonlinear(a) => commands::nonlinear(a),
    };
    let table = match result {
        Ok(t) => t,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = emit(&table, cli.output.as_ref(), cli.format) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return ExitCode::SUCCESS;
        }
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    let ok = table.ok_fraction();
    if ok < 0.9 {
        eprintln!("error: only {:.0}% of evaluated rows succeeded", 100.0 * ok);
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
