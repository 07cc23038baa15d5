//! `enhperc`: every experiment of the library as a seedable subcommand.
//!
//! Exit codes: 0 success, 1 invalid arguments, 2 numerical failure,
//! 3 a verification returned false.

mod args;
mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;
use thiserror::Error;

use args::{Cli, Format};
use commands::Report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Args(String),
    #[error(transparent)]
    Lib(#[from] enhperc::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use enhperc::Error as E;
        match self {
            CliError::Args(_) => 1,
            CliError::Lib(
                E::InvalidParams(_)
                | E::EmptyInitial
                | E::OddColumn { .. }
                | E::InvalidCoupling(_)
                | E::Degenerate(_)
                | E::WindowMismatch(..),
            ) => 1,
            CliError::Lib(_) | CliError::Io { .. } => 2,
        }
    }
}

fn render(command: &str, format: Format, rep: &Report) -> String {
    let head = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": rep.config,
    });
    match format {
        Format::Csv => {
            let mut out = format!("# {head}\n");
            for line in &rep.csv {
                out.push_str(line);
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let mut doc = head;
            doc["results"] = rep.json.clone();
            serde_json::to_string_pretty(&doc).unwrap() + "\n"
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(threads) = cli.opts.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = commands::run(cli.command, &cli.opts).and_then(|rep| {
        let text = render(cli.command.name(), cli.opts.format, &rep);
        match &cli.opts.out {
            Some(path) => std::fs::write(path, &text).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?,
            None => {
                let mut stdout = std::io::stdout().lock();
                // a closed pipe is not worth a failure code
                let _ = stdout.write_all(text.as_bytes());
            }
        }
        Ok(rep.failure)
    });
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failure)) => {
            eprintln!("verification failed: {failure}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
