use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use caps::commands::{cmd_check, cmd_dot, cmd_run, RunOptions, DEFAULT_FUEL};
use caps::corpus::run_corpus;
use caps::fuzz::{fuzz, FuzzOptions};
use caps::{checker_config, ExitStatus};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "caps",
    about = "Typechecker and reducer for a calculus of mut/imm/capsule/lent/read references"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Typecheck a file and show where recovery rules apply.
    Check { file: PathBuf },
    /// Typecheck and reduce a file.
    Run {
        file: PathBuf,
        /// Print every step as `#N [rule] term`.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: usize,
        /// Check the soundness theorems on the trace.
        #[arg(long)]
        verify_meta: bool,
    },
    /// Print the store at a step as a Graphviz digraph.
    Dot {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        at_step: usize,
    },
    /// Run the pipeline on generated programs.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        size: usize,
        /// Directory for shrunk repros.
        #[arg(long, default_value = "caps-repros")]
        repro_dir: PathBuf,
    },
    /// Check every file of a corpus directory against its annotation.
    Corpus { dir: PathBuf },
}

fn with_source(file: &PathBuf, f: impl FnOnce(&str) -> io::Result<ExitStatus>) -> io::Result<ExitStatus> {
    match std::fs::read_to_string(file) {
        Ok(src) => f(&src),
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            Ok(ExitStatus::Internal)
        }
    }
}

fn main_inner(cli: Cli) -> io::Result<ExitStatus> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.cmd {
        Cmd::Check { file } => with_source(&file, |s| cmd_check(s, &mut out)),
        Cmd::Run { file, trace, fuel, verify_meta } => {
            with_source(&file, |s| cmd_run(s, RunOptions { trace, fuel, verify_meta }, &mut out))
        }
        Cmd::Dot { file, at_step } => with_source(&file, |s| cmd_dot(s, at_step, &mut out)),
        Cmd::Fuzz { seed, count, size, repro_dir } => {
            let mut opts = FuzzOptions::new(seed, count, size);
            opts.checker_config = checker_config();
            opts.repro_dir = Some(repro_dir);
            let sum = fuzz(&opts, &caps_core::meta::check_all)?;
            writeln!(out, "{sum}")?;
            for (i, v) in &sum.violations {
                writeln!(out, "program {i}: {v}")?;
            }
            for r in &sum.repros {
                if let Some(p) = &r.path {
                    writeln!(out, "repro: {}", p.display())?;
                }
            }
            Ok(if sum.violations.is_empty() { ExitStatus::Success } else { ExitStatus::Failure })
        }
        Cmd::Corpus { dir } => {
            let rs = run_corpus(&dir)?;
            let failed = rs.iter().filter(|r| !r.passed).count();
            for r in &rs {
                if r.passed {
                    writeln!(out, "ok   {}", r.path.display())?;
                } else {
                    writeln!(out, "FAIL {}: {}", r.path.display(), r.detail)?;
                }
            }
            writeln!(out, "{} files, {failed} failed", rs.len())?;
            Ok(if failed == 0 { ExitStatus::Success } else { ExitStatus::Failure })
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(s) => ExitCode::from(s.code() as u8),
        Err(e) => {
            eprintln!("io error: {e}");
            ExitCode::from(ExitStatus::Internal.code() as u8)
        }
    }
}
