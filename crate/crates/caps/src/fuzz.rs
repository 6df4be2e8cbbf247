//! Generate, typecheck, run and verify programs in parallel.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use caps_core::gen::{gen_program, shrink, GenConfig};
use caps_core::meta::{MetaViolation, Theorem};
use caps_core::parser::{anf_program, pretty_print, print_program};
use caps_core::reduce::{run, ReductionTrace, RunErrorKind};
use caps_core::typeck::{typecheck_program_with, Config};
use caps_core::{ClassTable, Program, Type};

/// A metatheory checker over one trace; the default is `check_all`.
pub type Checker = dyn Fn(&ReductionTrace, &ClassTable, &Type) -> Vec<MetaViolation> + Sync;

pub const PIPELINE_FUEL: usize = 2_000;

#[derive(Clone, Debug)]
pub enum Outcome {
    Rejected,
    Exhausted,
    OutOfFuel,
    /// Typed and run; the violations may be empty.
    Checked {
        steps: usize,
        violations: Vec<MetaViolation>,
    },
}

impl Outcome {
    pub fn violations(&self) -> &[MetaViolation] {
        match self {
            Outcome::Checked { violations, .. } => violations,
            _ => &[],
        }
    }
}

/// typecheck, ANF, run, check. A stuck run is a progress violation.
pub fn pipeline(p: &Program, cfg: Config, fuel: usize, checker: &Checker) -> Outcome {
    let t = match typecheck_program_with(p, cfg) {
        Ok(t) => t,
        Err(e) if e.any_exhausted() => return Outcome::Exhausted,
        Err(_) => return Outcome::Rejected,
    };
    let Ok(a) = anf_program(p) else { return Outcome::Rejected };
    match run(&a.main, &a.classes, fuel) {
        Ok(tr) => {
            Outcome::Checked { steps: tr.fuel_used(), violations: checker(&tr, &a.classes, &t.main.result) }
        }
        Err(e) => match e.kind {
            RunErrorKind::OutOfFuel => Outcome::OutOfFuel,
            kind => {
                let steps = e.trace.fuel_used();
                let term = e.trace.last().map(pretty_print).unwrap_or_default();
                let message = match kind {
                    RunErrorKind::Step(s) => s.to_string(),
                    _ => "term is not in simplified form".to_string(),
                };
                let v =
                    MetaViolation { theorem: Theorem::Progress, step: steps, binder: None, message, term };
                Outcome::Checked { steps, violations: vec![v] }
            }
        },
    }
}

#[derive(Clone, Debug)]
pub struct FuzzOptions {
    pub seed: u64,
    pub count: usize,
    /// Bounds nesting depth and block length of generated programs.
    pub size: usize,
    pub threads: usize,
    pub fuel: usize,
    pub checker_config: Config,
    /// Where shrunk repros go; `None` keeps them in memory only.
    pub repro_dir: Option<PathBuf>,
}

impl FuzzOptions {
    pub fn new(seed: u64, count: usize, size: usize) -> Self {
        FuzzOptions {
            seed,
            count,
            size,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            fuel: PIPELINE_FUEL,
            checker_config: Config::default(),
            repro_dir: None,
        }
    }

    pub fn gen_config(&self, i: usize) -> GenConfig {
        let mut g = GenConfig::new(self.seed.wrapping_add(i as u64));
        g.max_depth = self.size.max(1);
        g.max_block_decls = self.size.max(1);
        g
    }
}

#[derive(Clone, Debug)]
pub struct Repro {
    pub index: usize,
    pub seed: u64,
    pub theorem: Theorem,
    pub original: Program,
    pub shrunk: Program,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default)]
pub struct FuzzSummary {
    pub generated: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub exhausted: usize,
    pub out_of_fuel: usize,
    pub steps: usize,
    pub violations: Vec<(usize, MetaViolation)>,
    pub repros: Vec<Repro>,
}

impl fmt::Display for FuzzSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "generated {}, accepted {}, rejected {}, search exhausted {}, out of fuel {}, steps {}, violations {}",
            self.generated,
            self.accepted,
            self.rejected,
            self.exhausted,
            self.out_of_fuel,
            self.steps,
            self.violations.len()
        )
    }
}

/// Runs the pipeline on `opts.count` generated programs. Results are
/// merged in program order, so the summary does not depend on
/// scheduling.
pub fn fuzz(opts: &FuzzOptions, checker: &Checker) -> std::io::Result<FuzzSummary> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(Program, Outcome)>>> = Mutex::new(vec![None; opts.count]);
    std::thread::scope(|s| {
        for _ in 0..opts.threads.clamp(1, opts.count.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= opts.count {
                    break;
                }
                let p = gen_program(&opts.gen_config(i));
                let o = pipeline(&p, opts.checker_config, opts.fuel, checker);
                results.lock().expect("no thread panicked")[i] = Some((p, o));
            });
        }
    });
    let mut sum = FuzzSummary { generated: opts.count, ..FuzzSummary::default() };
    let results = results.into_inner().expect("no thread panicked");
    for (i, r) in results.into_iter().enumerate() {
        let (p, o) = r.expect("every index was processed");
        match &o {
            Outcome::Rejected => sum.rejected += 1,
            Outcome::Exhausted => sum.exhausted += 1,
            Outcome::OutOfFuel => {
                sum.accepted += 1;
                sum.out_of_fuel += 1;
            }
            Outcome::Checked { steps, violations } => {
                sum.accepted += 1;
                sum.steps += steps;
                if let Some(v) = violations.first() {
                    let seed = opts.gen_config(i).seed;
                    sum.repros.push(reproduce(opts, checker, i, seed, v.theorem, p)?);
                }
                sum.violations.extend(violations.iter().cloned().map(|v| (i, v)));
            }
        }
    }
    Ok(sum)
}

fn reproduce(
    opts: &FuzzOptions,
    checker: &Checker,
    index: usize,
    seed: u64,
    theorem: Theorem,
    original: Program,
) -> std::io::Result<Repro> {
    let fails = |q: &Program| {
        pipeline(q, opts.checker_config, opts.fuel, checker).violations().iter().any(|v| v.theorem == theorem)
    };
    let shrunk = shrink(&original, fails).unwrap_or_else(|_| original.clone());
    let path = match &opts.repro_dir {
        Some(dir) => Some(write_repro(dir, seed, theorem, &shrunk)?),
        None => None,
    };
    Ok(Repro { index, seed, theorem, original, shrunk, path })
}

fn write_repro(dir: &Path, seed: u64, theorem: Theorem, p: &Program) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("repro-{seed}-{theorem}.caps"));
    let body = format!("// {theorem} violation, generator seed {seed}\n{}", print_program(p));
    std::fs::write(&path, body)?;
    Ok(path)
}
