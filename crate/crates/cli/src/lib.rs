//! Command-line front end: `gen-data`, `train`, `solve` and `bench`.
//!
//! Every command first echoes its effective parameters as `#` lines so a run
//! can be reproduced from its own output. Frames used for training come from
//! even seeds and evaluation frames from odd seeds.

pub mod args;
pub mod commands;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
pub struct ExitError {
    pub code: i32,
    pub msg: String,
}

impl ExitError {
    pub fn infeasible(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INFEASIBLE,
            msg: msg.into(),
        }
    }
    pub fn budget(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_BUDGET,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for ExitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for ExitError {}

/// Training frame `i` of a run with seed base `base`.
pub fn train_seed(base: u64, i: u64) -> u64 {
    2 * (base + i)
}

/// Evaluation frame `i`; never collides with a training seed.
pub fn eval_seed(base: u64, i: u64) -> u64 {
    2 * (base + i) + 1
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match commands::dispatch(&cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            e.downcast_ref::<ExitError>().map_or(EXIT_USAGE, |x| x.code)
        }
    }
}
