//! Command-line front end: argument definitions and one function per
//! subcommand, each writing its outputs under an output directory.

use std::io::Write;

pub mod args;
pub mod commands;
mod error;

pub use args::{Cli, Command};
pub use commands::{cmd_bench, cmd_codebook, cmd_eval, cmd_sweep, cmd_synth, cmd_track};
pub use error::{CliError, Result, EXIT_DATA, EXIT_OK, EXIT_TRAINING, EXIT_USAGE};

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codebook(a) => print_json(&cmd_codebook(&a)?),
        Command::Track(a) => {
            let report = cmd_track(&a)?;
            match &report.eval {
                Some(e) => emit(&format!(
                    "{} rows, {} transitions, OS {:.4}, CLE {}",
                    report.rows,
                    report.transitions,
                    e.os,
                    e.cle.map_or("n/a".to_string(), |c| format!("{c:.3} px"))
                )),
                None => emit(&format!("{} rows, {} transitions", report.rows, report.transitions)),
            }
        }
        Command::Eval(a) => print_json(&cmd_eval(&a)?),
        Command::Synth(a) => print_json(&cmd_synth(&a)?),
        Command::Sweep(a) => {
            for p in cmd_sweep(&a)? {
                emit(&format!("{}\t{:.4}\t{}", p.value, p.os, p.cle.map_or("n/a".to_string(), |c| format!("{c:.3}"))))?;
            }
            Ok(())
        }
        Command::Bench(a) => print_json(&cmd_bench(&a)?),
    }
}
