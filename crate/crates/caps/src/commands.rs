//! The subcommands. Each writes to the given sink and returns the exit
//! status; `main` only parses flags and picks the file.

use std::io::{self, Write};

use caps_core::meta::check_all;
use caps_core::parser::{anf_program, pretty_print};
use caps_core::reduce::{run, ReductionTrace, RunErrorKind};
use caps_core::typeck::{typecheck_program_with, ProgramTyping, TypeErrorKind};
use caps_core::{ClassTable, Program, Type};

use crate::report::{error_lines, judgment_lines, violation_json};
use crate::{checker_config, dot, load_source, ExitStatus};

pub const DEFAULT_FUEL: usize = 10_000;

fn typecheck(
    p: &Program,
    out: &mut dyn Write,
    verbose: bool,
) -> io::Result<Result<ProgramTyping, ExitStatus>> {
    match typecheck_program_with(p, checker_config()) {
        Ok(t) => {
            if verbose {
                for ((c, m), j) in &t.methods {
                    for l in judgment_lines(&format!("{c}.{m}"), j) {
                        writeln!(out, "{l}")?;
                    }
                }
                for l in judgment_lines("main", &t.main) {
                    writeln!(out, "{l}")?;
                }
            }
            Ok(Ok(t))
        }
        Err(es) => {
            for (who, e) in &es.errors {
                for l in error_lines(who, e) {
                    writeln!(out, "{l}")?;
                }
            }
            let malformed = es.errors.iter().any(|(_, e)| e.kind == TypeErrorKind::MalformedContext);
            Ok(Err(if es.any_exhausted() {
                ExitStatus::Internal
            } else if malformed {
                ExitStatus::Malformed
            } else {
                ExitStatus::Failure
            }))
        }
    }
}

pub fn cmd_check(src: &str, out: &mut dyn Write) -> io::Result<ExitStatus> {
    let p = match load_source(src) {
        Ok(p) => p,
        Err(e) => {
            writeln!(out, "{e}")?;
            return Ok(e.status());
        }
    };
    Ok(match typecheck(&p, out, true)? {
        Ok(_) => ExitStatus::Success,
        Err(s) => s,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub trace: bool,
    pub fuel: usize,
    pub verify_meta: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { trace: false, fuel: DEFAULT_FUEL, verify_meta: false }
    }
}

enum Executed {
    Done(Type, ClassTable, ReductionTrace),
    OutOfFuel(ReductionTrace),
    Failed(ExitStatus),
}

/// Loads, typechecks and reduces. Diagnostics go to `out`.
fn execute(src: &str, fuel: usize, out: &mut dyn Write) -> io::Result<Executed> {
    let p = match load_source(src) {
        Ok(p) => p,
        Err(e) => {
            writeln!(out, "{e}")?;
            return Ok(Executed::Failed(e.status()));
        }
    };
    let t = match typecheck(&p, out, false)? {
        Ok(t) => t,
        Err(s) => return Ok(Executed::Failed(s)),
    };
    let a = match anf_program(&p) {
        Ok(a) => a,
        Err(e) => {
            writeln!(out, "internal error: {e}")?;
            return Ok(Executed::Failed(ExitStatus::Internal));
        }
    };
    Ok(match run(&a.main, &a.classes, fuel) {
        Ok(tr) => Executed::Done(t.main.result, a.classes, tr),
        Err(e) => match e.kind {
            RunErrorKind::OutOfFuel => Executed::OutOfFuel(e.trace),
            RunErrorKind::Step(_) => {
                writeln!(out, "{e}")?;
                Executed::Failed(ExitStatus::Failure)
            }
            RunErrorKind::NotSimplified => {
                writeln!(out, "internal error: {e}")?;
                Executed::Failed(ExitStatus::Internal)
            }
        },
    })
}

pub fn cmd_run(src: &str, opts: RunOptions, out: &mut dyn Write) -> io::Result<ExitStatus> {
    let (ty, ct, tr) = match execute(src, opts.fuel, out)? {
        Executed::Done(ty, ct, tr) => (ty, ct, tr),
        Executed::OutOfFuel(tr) => {
            if opts.trace {
                write!(out, "{tr}")?;
            }
            writeln!(out, "out of fuel after {} steps", tr.fuel_used())?;
            return Ok(ExitStatus::Internal);
        }
        Executed::Failed(s) => return Ok(s),
    };
    if opts.trace {
        write!(out, "{tr}")?;
        writeln!(out, "done after {} steps", tr.fuel_used())?;
    } else if let Some(s) = tr.steps.last() {
        writeln!(out, "{}", pretty_print(&s.canonical()))?;
    }
    if !opts.verify_meta {
        return Ok(ExitStatus::Success);
    }
    let vs = check_all(&tr, &ct, &ty);
    for v in &vs {
        writeln!(out, "{}", violation_json(v))?;
    }
    if vs.is_empty() {
        writeln!(out, "meta: ok")?;
        Ok(ExitStatus::Success)
    } else {
        Ok(ExitStatus::Failure)
    }
}

pub fn cmd_dot(src: &str, at_step: usize, out: &mut dyn Write) -> io::Result<ExitStatus> {
    let tr = match execute(src, at_step, out)? {
        Executed::Done(_, _, tr) | Executed::OutOfFuel(tr) => tr,
        Executed::Failed(s) => return Ok(s),
    };
    let Some(step) = tr.steps.get(at_step) else {
        writeln!(out, "program stops after {} steps", tr.fuel_used())?;
        return Ok(ExitStatus::Failure);
    };
    let p = load_source(src).expect("loaded before");
    write!(out, "{}", dot::store_graph(&step.term, &p.classes))?;
    Ok(ExitStatus::Success)
}
