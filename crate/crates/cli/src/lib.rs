//! The `xcheck` command line: synthetic worlds, scoring, detection,
//! evaluation, cost tables and live pipelines.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

pub use args::{Cli, Command};
pub use error::{CliError, Result};
pub use manifest::RunManifest;

/// Parses `args` (program name first) and runs the command. Summaries go
/// to `log`.
pub fn run<I, T>(args: I, log: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    Ok(())
                }
                _ => Err(CliError::Usage(e.render().to_string())),
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = cli.config.as_deref().map(settings::load_config).transpose()?;
    let name = cli.command.name();
    let section = match &config {
        Some(c) => settings::section(c, name)?,
        None => None,
    };
    let (_, sub) = matches.subcommand().expect("a subcommand is required");
    match cli.command {
        Command::Synth(a) => commands::synth(&settings::resolve(a, sub, section)?),
        Command::Score(a) => commands::score(&settings::resolve(a, sub, section)?),
        Command::Detect(a) => commands::detect(&settings::resolve(a, sub, section)?, log),
        Command::Evaluate(a) => commands::evaluate(&settings::resolve(a, sub, section)?, log),
        Command::Cost(a) => commands::cost(&settings::resolve(a, sub, section)?, log),
        Command::Pipeline(a) => commands::pipeline(&settings::resolve(a, sub, section)?, log),
    }
}

pub fn main_entry() -> ExitCode {
    let mut stderr = std::io::stderr();
    match run(std::env::args_os(), &mut stderr) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.to_string().trim_end());
            ExitCode::from(e.exit_code())
        }
    }
}
