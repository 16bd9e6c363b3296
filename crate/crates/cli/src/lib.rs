//! Command-line front end: scenario files, result bundles and Monte Carlo
//! batches on top of `velsched-core`.

pub mod bundle;
pub mod commands;
pub mod error;
pub mod io;
pub mod montecarlo;
pub mod scenario_file;

use std::ffi::OsString;

use clap::Parser;

pub use commands::Cli;
pub use error::{CliError, ExitCode};
pub use scenario_file::ScenarioFile;

/// Parse `args` (including the program name), run the verb and return the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::Error.code()
            } else {
                ExitCode::Success.code()
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(code) => code.code(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::Error.code()
        }
    }
}
