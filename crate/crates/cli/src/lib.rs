//! Batch front end: parses a run configuration, dispatches one experiment
//! and writes its outputs.
//!
//! Exit codes: 0 success, 2 when the experiment ran but an acceptance
//! threshold was violated, 1 for usage, configuration or runtime errors.

pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

pub use config::{parse_config, Experiment, RunConfig};
pub use error::CliError;
pub use run::{dispatch, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ACCEPTANCE: i32 = 2;

pub fn usage() -> String {
    let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
    format!(
        "usage: heston-laq <subcommand> --config <file> [--seed N] [--out DIR]\n\
         subcommands: {}\n\
         env: LAQ_THREADS caps the number of worker threads",
        names.join(", ")
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub experiment: Experiment,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn parse_args<I: IntoIterator<Item = String>>(args: I) -> Result<Invocation, CliError> {
    let mut it = args.into_iter();
    let sub = it.next().ok_or_else(|| CliError::Usage("missing subcommand".into()))?;
    let experiment =
        Experiment::from_name(&sub).ok_or_else(|| CliError::Usage(format!("unknown subcommand '{sub}'")))?;
    let (mut config, mut seed, mut out) = (None, None, None);
    while let Some(flag) = it.next() {
        let mut value = || it.next().ok_or_else(|| CliError::Usage(format!("{flag} needs a value")));
        match flag.as_str() {
            "--config" => config = Some(PathBuf::from(value()?)),
            "--seed" => {
                let v = value()?;
                seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| CliError::Usage(format!("--seed expects a nonnegative integer, got '{v}'")))?,
                );
            }
            "--out" => out = Some(PathBuf::from(value()?)),
            other => return Err(CliError::Usage(format!("unknown argument '{other}'"))),
        }
    }
    Ok(Invocation {
        experiment,
        config: config.ok_or_else(|| CliError::Usage("--config is required".into()))?,
        seed,
        out,
    })
}

/// Full command-line flow; returns the process exit code. Messages go to
/// `stdout`/`stderr` as given.
pub fn main_with<I, O, E>(args: I, stdout: &mut O, stderr: &mut E) -> i32
where
    I: IntoIterator<Item = String>,
    O: std::io::Write,
    E: std::io::Write,
{
    let inv = match parse_args(args) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}\n{}", usage());
            return EXIT_ERROR;
        }
    };
    let text = match std::fs::read_to_string(&inv.config) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", CliError::io(&inv.config, e));
            return EXIT_ERROR;
        }
    };
    let cfg = match parse_config(&text, Some(inv.experiment), inv.seed) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let out_dir = inv
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("laq-out/{}", cfg.experiment.name())));
    match dispatch(&cfg, &out_dir) {
        Ok(o) => {
            let _ = writeln!(
                stdout,
                "{} {}: outputs in {}",
                cfg.experiment.name(),
                if o.passed { "PASS" } else { "FAIL" },
                out_dir.display()
            );
            if o.passed {
                EXIT_OK
            } else {
                EXIT_ACCEPTANCE
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}
