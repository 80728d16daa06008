//! Command-line front end for the tubelab experiments.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Parser;

use config::{Cli, RunConfig};
use experiments::{execute, Outcome, RunError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

fn write_outcome(dir: &Path, out: &Outcome) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for t in &out.tables {
        t.write(dir).map_err(io)?;
    }
    fs::write(dir.join("summary.txt"), out.summary.render(&out.tables)).map_err(io)
}

fn write_failure(dir: &Path, cfg: &RunConfig, err: &RunError) {
    let text = format!(
        "tubelab_version: {}\ncore_version: {}\nexperiment: {}\nseed: {}\nerror: {}\nstatus: error\n",
        env!("CARGO_PKG_VERSION"),
        tubelab_core::VERSION,
        cfg.experiment.name(),
        cfg.seed,
        err.message()
    );
    if fs::create_dir_all(dir).is_ok() {
        let _ = fs::write(dir.join("summary.txt"), text);
    }
}

/// Runs one experiment from a resolved configuration and returns the exit status.
pub fn run_config(cfg: &RunConfig) -> i32 {
    match execute(cfg) {
        Ok(out) => {
            if let Err(e) = write_outcome(&cfg.out, &out) {
                eprintln!("error: {}", e.message());
                return e.exit_code();
            }
            for c in out.summary.checks.iter().filter(|c| !c.pass) {
                eprintln!("check {} failed: {}", c.name, c.detail);
            }
            let pass = out.summary.passed();
            println!(
                "{}: {} ({})",
                cfg.experiment.name(),
                if pass { "pass" } else { "fail" },
                cfg.out.display()
            );
            if pass {
                EXIT_OK
            } else {
                EXIT_VIOLATION
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            if !matches!(e, RunError::Config(_)) {
                write_failure(&cfg.out, cfg, &e);
            }
            e.exit_code()
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (experiment, flags) = cli.command.split();
    match RunConfig::from_flags(experiment, &flags) {
        Ok(cfg) => run_config(&cfg),
        Err(e) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
    }
}
