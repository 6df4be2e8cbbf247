#[path = "support/oracle.rs"]
mod oracle;

use caps_core::gen::{enumerate_terms, gen_program, GenConfig};
use caps_core::parser::anf_program;
use caps_core::parser::pretty_print;
use caps_core::reduce::run;
use caps_core::reduce::{decompose, Decomposition};
use caps_core::typeck::typecheck_program;

#[test]
fn small_terms_decompose_uniquely() {
    let terms = enumerate_terms(3);
    assert!(terms.len() >= 1000);
    let bad: Vec<String> = terms
        .iter()
        .filter_map(|t| oracle::check(t, &decompose(t)).map(|m| format!("{}: {m}", pretty_print(t))))
        .collect();
    assert!(bad.is_empty(), "{} of {} mismatched, first: {}", bad.len(), terms.len(), bad[0]);
    let kinds: std::collections::BTreeSet<String> = terms
        .iter()
        .map(|t| match decompose(t) {
            Decomposition::Value => "value".to_string(),
            Decomposition::Stuck(_) => "stuck".to_string(),
            d => format!("{:?}", oracle::of_decomposition(&d).unwrap().1),
        })
        .collect();
    assert_eq!(kinds.len(), 8, "{kinds:?}");
}

#[test]
fn trace_terms_decompose_uniquely() {
    let mut deep = 0;
    for seed in 0..40 {
        let p = gen_program(&GenConfig::new(seed));
        if typecheck_program(&p).is_err() {
            continue;
        }
        let p = anf_program(&p).unwrap();
        let t = run(&p.main, &p.classes, 3000).unwrap();
        for s in &t.steps {
            let d = decompose(&s.term);
            if let Some(m) = oracle::check(&s.term, &d) {
                panic!("seed {seed}: {}: {m}", pretty_print(&s.term));
            }
            deep += usize::from(matches!(oracle::of_decomposition(&d), Some((p, _)) if p.len() >= 2));
        }
    }
    assert!(deep > 0);
}

#[test]
fn oracle_finds_body_assignment() {
    let ct = caps_core::parser::parse("class B { mut B f; } {0}").unwrap().classes;
    let e = caps_core::parser::parse_expr("{mut B x = new B(x); x.f = x}", &ct).unwrap();
    assert_eq!(oracle::splits(&e), vec![(vec![oracle::Step::Body], oracle::Kind::FieldAssign)]);
}
