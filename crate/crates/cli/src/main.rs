//! `dicke-css`: exact superradiant populations, CSS decompositions and
//! low-entanglement trajectory ensembles from the command line.
//!
//! Exit status is 0 on success, 2 when outputs were written but are
//! incomplete (passage gaps) and 1 on any error.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use config::{RunConfig, Subcommand};

#[derive(Parser)]
#[command(name = "dicke-css", version, about)]
enum Cli {
    /// Exact Dicke populations → populations.csv
    Exact(Invocation),
    /// Negativity landscape over (t, η) → landscape.csv
    CssScan(Invocation),
    /// Positive passage η(t) and CSS weights → passage.csv, css_weights.csv
    CssTrace(Invocation),
    /// Trajectory ensemble → qt_ensemble.csv
    Qt(Invocation),
    /// S_max and ξ_min over emitter numbers and strategies → qt_scaling.csv
    QtScaling(Invocation),
    /// Entropy of a Dicke state, printed as JSON
    Entropy(Invocation),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct Invocation {
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (sub, inv) = match cli {
        Cli::Exact(i) => (Subcommand::Exact, i),
        Cli::CssScan(i) => (Subcommand::CssScan, i),
        Cli::CssTrace(i) => (Subcommand::CssTrace, i),
        Cli::Qt(i) => (Subcommand::Qt, i),
        Cli::QtScaling(i) => (Subcommand::QtScaling, i),
        Cli::Entropy(i) => (Subcommand::Entropy, i),
    };

    let resolved = inv
        .config
        .as_deref()
        .map(config::load_file)
        .transpose()
        .and_then(|file| config::merge(sub, file, inv.flags))
        .and_then(config::resolve);
    let cfg = match resolved {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    match run::run(&cfg) {
        Ok(run::Status::Complete) => ExitCode::SUCCESS,
        Ok(run::Status::Partial(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
