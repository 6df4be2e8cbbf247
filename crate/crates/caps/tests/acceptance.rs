//! One line per acceptance criterion; exits nonzero if any fails.

#[path = "../../caps-core/tests/support/oracle.rs"]
#[allow(dead_code)]
mod oracle;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use caps::fuzz::{pipeline, Outcome, PIPELINE_FUEL};
use caps_core::congruence::{alpha_equiv, normalize_value};
use caps_core::gen::{enumerate_terms, gen_program, GenConfig};
use caps_core::meta::{check_all, Theorem};
use caps_core::parser::{anf_program, parse, parse_expr, pretty_print};
use caps_core::reduce::{decompose, field_of, run, RuleName};
use caps_core::syntax::free_vars;
use caps_core::typeck::{replay, typecheck_program, Config, Rule};
use caps_core::{Expr, ExprKind};

type Verdict = Result<String, String>;

fn corpus(rel: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let r = f()?;
    let el = t.elapsed();
    if el > limit {
        return Err(format!("{r}, but took {:.1?} (limit {limit:?})", el));
    }
    Ok(format!("{r}, {:.2?}", el))
}

fn typing_corpus() -> Verdict {
    let accept: &[(&str, &[Rule])] = &[
        ("accept/typing_one.caps", &[Rule::Capsule]),
        ("accept/typing_two.caps", &[Rule::Swap]),
        ("accept/typing_three.caps", &[Rule::Imm, Rule::Unrst]),
        ("accept/lent_local_joins_outer_group.caps", &[]),
        ("accept/nested_recovery_a3.caps", &[]),
        ("accept/nested_recovery_a1_clone.caps", &[]),
        ("accept/nested_recovery_a2_mix_a2_clone.caps", &[]),
    ];
    let reject = [
        "reject/alias_counterexample.caps",
        "reject/restricted_counterexample.caps",
        "reject/lent_local_in_result.caps",
        "reject/swap_weakening.caps",
        "reject/nested_recovery_a1.caps",
        "reject/nested_recovery_a2_mix_a1_clone.caps",
    ];
    let mut bad = Vec::new();
    for (f, rules) in accept {
        let p = parse(&corpus(f)).map_err(|e| format!("{f}: {e}"))?;
        match typecheck_program(&p) {
            Ok(t) => {
                if let Err(e) = replay(&t.program.classes, &t.main.derivation) {
                    bad.push(format!("{f}: replay failed: {e}"));
                }
                for r in *rules {
                    if !t.main.uses(*r) {
                        bad.push(format!("{f}: no {r} in rule path"));
                    }
                }
            }
            Err(e) => bad.push(format!("{f}: rejected: {e}")),
        }
    }
    for f in reject {
        let p = parse(&corpus(f)).map_err(|e| format!("{f}: {e}"))?;
        if let Ok(t) = typecheck_program(&p) {
            bad.push(format!("{f}: accepted at {}", t.main.result));
        }
    }
    match bad.first() {
        None => Ok(format!("{} verdicts match", accept.len() + reject.len())),
        Some(_) => Err(bad.join("; ")),
    }
}

fn trace(src: &str) -> Result<(caps_core::reduce::ReductionTrace, caps_core::ClassTable), String> {
    let p = anf_program(&parse(src).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let t = run(&p.main, &p.classes, 1000).map_err(|e| e.to_string())?;
    Ok((t, p.classes))
}

fn new_int(e: &Expr) -> Option<i64> {
    match &e.kind {
        ExprKind::New(_, args) => match args.first()?.kind {
            ExprKind::Int(n) => Some(n),
            _ => None,
        },
        _ => None,
    }
}

fn reduction_goldens() -> Verdict {
    // Assignment in the body: one field-assign step.
    let (t, ct) = trace(&corpus("accept/field_assign_in_body.caps"))?;
    let want = parse_expr("{mut B x=new B(x); mut B y=new B(x); x}", &ct).unwrap();
    let rules: Vec<_> = t.steps.iter().skip(1).map(|s| s.rule).collect();
    if rules != [Some(RuleName::FieldAssign)] || !alpha_equiv(t.last().unwrap(), &want) {
        return Err(format!("field-assign golden:\n{t}"));
    }

    // Capsule initializer: y's field becomes 1 and z's right-value is closed.
    let (t, _) = trace(&corpus("accept/capsule_initializer.caps"))?;
    let z_rv = t.steps.iter().find_map(|s| {
        let ExprKind::Block(ds, _) = &s.term.kind else { return None };
        let z = ds.iter().find(|d| d.name.base() == "z")?;
        let y = ds.iter().find(|d| d.name.base() == "y")?;
        z.init.is_right_value().then(|| (z.init.clone(), new_int(&y.init)))
    });
    let Some((rv, y_at_z)) = z_rv else { return Err(format!("z never evaluated:\n{t}")) };
    let ExprKind::Block(ds, _) = &t.last().unwrap().kind else {
        return Err("final term is not a block".into());
    };
    let y_final = ds.iter().find(|d| d.name.base() == "y").and_then(|d| new_int(&d.init));
    if !matches!(rv.kind, ExprKind::Block(..))
        || !free_vars(&rv).is_empty()
        || y_at_z != Some(1)
        || y_final != Some(1)
    {
        return Err(format!("capsule golden: z={} y={y_final:?}\n{t}", pretty_print(&rv)));
    }

    // fieldOf on a block value, after normalization.
    let ct = parse("class C { mut C f1; mut D f2; imm C f3; } class D { int n; } 0").unwrap().classes;
    let v = parse_expr("{mut C x=new C(x,y,z); mut D y=new D(0); new C(x,y,z)}", &ct).unwrap();
    let wants = ["{mut C x=new C(x,y,z); mut D y=new D(0); x}", "{mut D y=new D(0); y}", "z"];
    for (i, w) in wants.iter().enumerate() {
        let got = normalize_value(&field_of(&v, i).ok_or("fieldOf undefined")?, &ct);
        if !alpha_equiv(&got, &parse_expr(w, &ct).unwrap()) {
            return Err(format!("fieldOf {}: got {}, want {w}", i + 1, pretty_print(&got)));
        }
    }

    // Field assignment out of a nested block moves y1 to the outer store first.
    let src = "class C { mut D f; } class D { int n; }
         {mut C x=new C(w); imm C z={mut D y1=new D(0); mut D y2=x.f=y1; mut D y3=new D(1); new C(y3)}; x}";
    let p = parse(src).unwrap();
    let t = run(&p.main, &p.classes, 2).map_err(|e| e.trace).unwrap_or_else(|t| t);
    let moved = parse_expr(
        "{mut C x=new C(w); mut D y1=new D(0); imm C z={mut D y2=x.f=y1; mut D y3=new D(1); new C(y3)}; x}",
        &p.classes,
    )
    .unwrap();
    let ok = t.steps.len() > 2
        && t.steps[1].rule == Some(RuleName::FieldAssignMove)
        && alpha_equiv(&t.steps[1].term, &moved)
        && t.steps[2].rule == Some(RuleName::FieldAssign);
    if !ok {
        return Err(format!("field-assign-move golden:\n{t}"));
    }
    Ok("4 goldens match".into())
}

struct Sweep {
    corpus: usize,
    programs: usize,
    generated: usize,
    steps: usize,
    out_of_fuel: usize,
    exhausted: usize,
    by_theorem: BTreeMap<Theorem, Vec<String>>,
}

/// Runs every checker on corpus traces and on at least `want` generated
/// programs that typecheck and terminate.
fn sweep(want: usize) -> Sweep {
    let mut s = Sweep {
        corpus: 0,
        programs: 0,
        generated: 0,
        steps: 0,
        out_of_fuel: 0,
        exhausted: 0,
        by_theorem: BTreeMap::new(),
    };
    let cfg = Config::default();
    let record = |o: &Outcome, who: &str, s: &mut Sweep| {
        if let Outcome::Checked { steps, violations } = o {
            s.steps += steps;
            for v in violations {
                s.by_theorem.entry(v.theorem).or_default().push(format!("{who}: {v}"));
            }
        }
    };
    for f in caps::corpus::corpus_files(&Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")).unwrap() {
        if f.parent().is_some_and(|d| d.ends_with("accept")) {
            let p = parse(&std::fs::read_to_string(&f).unwrap()).unwrap();
            s.corpus += 1;
            record(&pipeline(&p, cfg, 10_000, &check_all), &f.display().to_string(), &mut s);
        }
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let batch = 64;
    let mut seed = 0u64;
    while s.programs < want {
        let outs: Vec<(u64, Outcome)> = std::thread::scope(|sc| {
            let hs: Vec<_> = (0..threads)
                .map(|k| {
                    sc.spawn(move || {
                        (k..batch)
                            .step_by(threads)
                            .map(|i| {
                                let sd = seed + i as u64;
                                (
                                    sd,
                                    pipeline(
                                        &gen_program(&GenConfig::new(sd)),
                                        cfg,
                                        PIPELINE_FUEL,
                                        &check_all,
                                    ),
                                )
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut v: Vec<_> = hs.into_iter().flat_map(|h| h.join().unwrap()).collect();
            v.sort_by_key(|(sd, _)| *sd);
            v
        });
        for (sd, o) in &outs {
            s.generated += 1;
            match o {
                Outcome::Checked { .. } => s.programs += 1,
                Outcome::OutOfFuel => s.out_of_fuel += 1,
                Outcome::Exhausted => s.exhausted += 1,
                Outcome::Rejected => {}
            }
            record(o, &format!("seed {sd}"), &mut s);
        }
        seed += batch as u64;
    }
    s
}

fn theorem_line(s: &Sweep, t: Theorem) -> Verdict {
    let base = format!(
        "{} corpus and {} generated traces ({} generated, {} out of fuel, {} exhausted), {} steps",
        s.corpus, s.programs, s.generated, s.out_of_fuel, s.exhausted, s.steps
    );
    match s.by_theorem.get(&t) {
        None => Ok(format!("{base}, 0 violations")),
        Some(v) => Err(format!("{base}, {} violations, first: {}", v.len(), v[0])),
    }
}

fn decomposition() -> Verdict {
    let terms = enumerate_terms(3);
    if terms.len() < 1000 {
        return Err(format!("only {} terms", terms.len()));
    }
    let bad: Vec<String> = terms
        .iter()
        .filter_map(|t| oracle::check(t, &decompose(t)).map(|m| format!("{}: {m}", pretty_print(t))))
        .collect();
    match bad.first() {
        None => Ok(format!("{} terms, 0 mismatches", terms.len())),
        Some(b) => Err(format!("{} of {} mismatched, first {b}", bad.len(), terms.len())),
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    results.push((1, "typing corpus", timed(Duration::from_secs(5), typing_corpus)));
    results.push((2, "reduction goldens", timed(Duration::from_secs(5), reduction_goldens)));
    let t = Instant::now();
    let s = sweep(500);
    let sr = theorem_line(&s, Theorem::SubjectReduction).and_then(|r| {
        let el = t.elapsed();
        if el > Duration::from_secs(180) {
            Err(format!("{r}, but took {el:.1?}"))
        } else {
            Ok(format!("{r}, {el:.1?}"))
        }
    });
    results.push((3, "subject reduction", sr));
    results.push((4, "progress", theorem_line(&s, Theorem::Progress)));
    results.push((5, "capsule theorem", theorem_line(&s, Theorem::Capsule)));
    results.push((6, "immutable theorem", theorem_line(&s, Theorem::Immutable)));
    results.push((7, "decomposition oracle", decomposition()));
    results.push((8, "canonical forms", theorem_line(&s, Theorem::CanonicalForms)));
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(m) => println!("criterion {n} ({name}): PASS: {m}"),
            Err(m) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {m}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
