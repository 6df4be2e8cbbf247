//! Driver for `caps-core`: file loading, the `caps` subcommands, DOT
//! export, corpus regression and fuzzing.

use std::fmt;
use std::path::Path;

use caps_core::parser::{parse, ParseError};
use caps_core::syntax::{validate_wellformedness, Violation};
use caps_core::typeck::Config;
use caps_core::Program;

pub mod commands;
pub mod corpus;
pub mod dot;
pub mod fuzz;
pub mod report;

/// Process exit codes. The numbers are part of the scripting contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    Malformed = 2,
    Internal = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Parse(ParseError),
    Wellformed(Vec<Violation>),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read file: {e}"),
            LoadError::Parse(e) => write!(f, "parse error: {e}"),
            LoadError::Wellformed(vs) => {
                f.write_str("not well-formed:")?;
                for v in vs {
                    write!(f, "\n  {}:{}: {v}", v.span.line, v.span.col)?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for LoadError {}

impl LoadError {
    pub fn status(&self) -> ExitStatus {
        match self {
            LoadError::Io(_) => ExitStatus::Internal,
            _ => ExitStatus::Malformed,
        }
    }
}

/// Parses and checks the well-formedness constraints.
pub fn load_source(src: &str) -> Result<Program, LoadError> {
    let p = parse(src).map_err(LoadError::Parse)?;
    let vs = validate_wellformedness(&p);
    if vs.is_empty() {
        Ok(p)
    } else {
        Err(LoadError::Wellformed(vs))
    }
}

pub fn load_file(path: &Path) -> Result<Program, LoadError> {
    let src = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    load_source(&src)
}

/// Typechecker configuration, with the budget taken from
/// `CAPS_SEARCH_BUDGET` when it is set to a number.
pub fn checker_config() -> Config {
    let mut cfg = Config::default();
    if let Some(n) = std::env::var("CAPS_SEARCH_BUDGET").ok().and_then(|s| s.trim().parse().ok()) {
        cfg.budget = n;
    }
    cfg
}
