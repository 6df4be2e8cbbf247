//! Regression runner over `accept/*.caps` and `reject/*.caps`.
//!
//! Line 1 of each file is an annotation:
//! `// accept: [rule ...]` lists rules that must occur in the main rule
//! path; `// reject: <rule|parse|wellformed> [blocking=<x>]` names the
//! rule the typechecker must fail at.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use caps_core::meta::check_all;
use caps_core::parser::anf_program;
use caps_core::reduce::run;
use caps_core::typeck::{typecheck_program_with, Rule, TypeErrorKind};

use crate::{checker_config, load_source, LoadError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expectation {
    Accept { rules: Vec<Rule> },
    RejectType { rule: Option<Rule>, blocking: Option<String> },
    RejectParse,
    RejectWellformed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnnotationError {
    Missing,
    UnknownRule(String),
    BadKey(String),
}

impl fmt::Display for AnnotationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationError::Missing => {
                f.write_str("line 1 is not an `// accept:` or `// reject:` annotation")
            }
            AnnotationError::UnknownRule(r) => write!(f, "unknown rule `{r}`"),
            AnnotationError::BadKey(k) => write!(f, "unknown annotation item `{k}`"),
        }
    }
}

fn rule(s: &str) -> Result<Rule, AnnotationError> {
    Rule::from_name(s).ok_or_else(|| AnnotationError::UnknownRule(s.to_string()))
}

pub fn parse_annotation(src: &str) -> Result<Expectation, AnnotationError> {
    let line = src.lines().next().unwrap_or("").trim();
    let line = line.strip_prefix("//").ok_or(AnnotationError::Missing)?.trim();
    if let Some(rest) = line.strip_prefix("accept:") {
        let rules = rest.split_whitespace().map(rule).collect::<Result<_, _>>()?;
        return Ok(Expectation::Accept { rules });
    }
    let rest = line.strip_prefix("reject:").ok_or(AnnotationError::Missing)?;
    let mut words = rest.split_whitespace();
    let (mut r, mut blocking) = (None, None);
    match words.next() {
        Some("parse") => return Ok(Expectation::RejectParse),
        Some("wellformed") => return Ok(Expectation::RejectWellformed),
        Some(w) if !w.contains('=') => r = Some(rule(w)?),
        Some(w) => blocking = w.strip_prefix("blocking=").map(str::to_string),
        None => {}
    }
    for w in words {
        blocking = Some(
            w.strip_prefix("blocking=").ok_or_else(|| AnnotationError::BadKey(w.to_string()))?.to_string(),
        );
    }
    Ok(Expectation::RejectType { rule: r, blocking })
}

#[derive(Clone, Debug)]
pub struct FileResult {
    pub path: PathBuf,
    pub passed: bool,
    pub detail: String,
}

/// Evaluates one file against its annotation.
pub fn check_file(src: &str) -> Result<(), String> {
    let want = parse_annotation(src).map_err(|e| e.to_string())?;
    let p = match (load_source(src), &want) {
        (Err(LoadError::Parse(_)), Expectation::RejectParse) => return Ok(()),
        (Err(LoadError::Wellformed(_)), Expectation::RejectWellformed) => return Ok(()),
        (Err(e), _) => return Err(e.to_string()),
        (Ok(_), Expectation::RejectParse | Expectation::RejectWellformed) => {
            return Err("expected a syntax error, but the file loads".into())
        }
        (Ok(p), _) => p,
    };
    match (typecheck_program_with(&p, checker_config()), want) {
        (Ok(t), Expectation::Accept { rules }) => {
            if let Some(r) = rules.iter().find(|r| !t.main.uses(**r)) {
                return Err(format!("rule path of main lacks {r}: {:?}", t.main.rule_path));
            }
            let a = anf_program(&p).map_err(|e| e.to_string())?;
            let tr = run(&a.main, &a.classes, crate::commands::DEFAULT_FUEL).map_err(|e| e.to_string())?;
            let vs = check_all(&tr, &a.classes, &t.main.result);
            match vs.first() {
                Some(v) => Err(v.to_string()),
                None => Ok(()),
            }
        }
        (Ok(t), _) => Err(format!("expected rejection, accepted at {}", t.main.result)),
        (Err(es), Expectation::Accept { .. }) => Err(es.to_string()),
        (Err(es), Expectation::RejectType { rule, blocking }) => {
            let (_, e) = &es.errors[0];
            if e.kind != TypeErrorKind::IllTyped {
                return Err(es.to_string());
            }
            if rule.is_some() && e.rule != rule {
                return Err(format!(
                    "failed at {:?}, expected {:?}: {e}",
                    e.rule.map(Rule::name),
                    rule.map(Rule::name)
                ));
            }
            if blocking.is_some() && e.blocking.as_ref().map(|b| b.as_str()) != blocking.as_deref() {
                return Err(format!("blocking variable {:?}, expected {blocking:?}: {e}", e.blocking));
            }
            Ok(())
        }
        (Err(es), _) => Err(es.to_string()),
    }
}

/// All `.caps` files under `dir/accept` and `dir/reject`, sorted.
pub fn corpus_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for sub in ["accept", "reject"] {
        let d = dir.join(sub);
        if !d.is_dir() {
            continue;
        }
        for e in std::fs::read_dir(d)? {
            let p = e?.path();
            if p.extension().is_some_and(|x| x == "caps") {
                files.push(p);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Checks every corpus file, in parallel; results are in file order.
/// Files under `accept/` must carry an accept annotation and files under
/// `reject/` a reject one.
pub fn run_corpus(dir: &Path) -> std::io::Result<Vec<FileResult>> {
    let files = corpus_files(dir)?;
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<FileResult>>> = Mutex::new(vec![None; files.len()]);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(files.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(i) else { break };
                let r = std::fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|src| {
                    let in_accept = path.parent().and_then(Path::file_name).is_some_and(|n| n == "accept");
                    let annotated_accept = matches!(parse_annotation(&src), Ok(Expectation::Accept { .. }));
                    if in_accept != annotated_accept {
                        return Err("annotation does not match the directory".into());
                    }
                    check_file(&src)
                });
                let res =
                    FileResult { path: path.clone(), passed: r.is_ok(), detail: r.err().unwrap_or_default() };
                out.lock().expect("no thread panicked")[i] = Some(res);
            });
        }
    });
    Ok(out.into_inner().expect("no thread panicked").into_iter().flatten().collect())
}
