//! The `dipfuse` command line: `fuse`, `gains`, `metrics` and `sweep`.
//!
//! Exit codes: 0 success, 2 bad flags, 3 I/O or decoding failure, 4 dimension
//! mismatch, 5 diverged optimization (or, for `sweep`, no successful run).

mod args;
mod commands;
mod error;
pub mod manifest;
pub mod sweep;

use std::ffi::OsString;

use clap::{CommandFactory, Parser};

pub use args::{Cli, Command, Resize};
pub use error::CliError;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::USAGE } else { 0 };
        }
    };
    let name = cli.command.name();
    match commands::dispatch(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dipfuse: {e}");
            if let CliError::Usage(_) = e {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            e.exit_code()
        }
    }
}
