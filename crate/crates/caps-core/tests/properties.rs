use std::collections::BTreeSet;

use caps_core::congruence::{alpha_equiv, normalize_value};
use caps_core::gen::{declaration_count, gen_program, shrink, GenConfig};
use caps_core::parser::{anf_program, parse, print_program};
use caps_core::reduce::run;
use caps_core::syntax::{free_vars, rename_apart, subtype, validate_wellformedness, Fresh};
use caps_core::typeck::{elaborate_program, replay, typecheck_expr, typecheck_program, TypeContext};
use caps_core::{Expr, ExprKind, Program, Qualifier, Type};
use proptest::prelude::*;

fn program(seed: u64) -> Program {
    gen_program(&GenConfig::new(seed))
}

/// Declarations of the main block with free variables in their
/// initialiser, each with the context of the enclosing declarations.
fn open_sites(p: &Program, split: &[usize]) -> Vec<(TypeContext, Expr, Type)> {
    let ExprKind::Block(ds, _) = &p.main.kind else { return Vec::new() };
    let mut ctx = TypeContext::empty();
    for d in ds {
        let t = d.ty.clone().expect("elaborated");
        let t = if t.qualifier() == Some(Qualifier::Lent) { t.with_qualifier(Qualifier::Mut) } else { t };
        ctx.gamma.insert(d.name.clone(), t);
    }
    let muts: Vec<_> =
        ds.iter().filter(|d| d.qualifier() == Some(Qualifier::Mut)).map(|d| d.name.clone()).collect();
    let mut groups = vec![BTreeSet::new(); 3];
    for (i, x) in muts.iter().enumerate() {
        if let Some(g) = split.get(i).copied().filter(|g| *g < 3) {
            groups[g].insert(x.clone());
        }
    }
    ctx.groups = groups.into_iter().filter(|g| !g.is_empty()).collect();
    ds.iter()
        .filter(|d| !free_vars(&d.init).is_empty())
        .map(|d| (ctx.clone(), d.init.clone(), d.ty.clone().unwrap()))
        .collect()
}

fn sup_types(t: &Type) -> Vec<Type> {
    match t {
        Type::Int => vec![Type::Int],
        Type::Class(_, c) => {
            Qualifier::ALL.iter().map(|q| Type::Class(*q, c.clone())).filter(|u| subtype(t, u)).collect()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn accepted_derivations_replay(seed in any::<u64>()) {
        let p = program(seed);
        if let Ok(t) = typecheck_program(&p) {
            prop_assert!(replay(&t.program.classes, &t.main.derivation).is_ok());
            for (_, j) in &t.methods {
                prop_assert!(replay(&t.program.classes, &j.derivation).is_ok());
            }
        }
    }

    #[test]
    fn group_order_does_not_matter(seed in any::<u64>(), split in prop::collection::vec(0usize..4, 8)) {
        let p = elaborate_program(&program(seed)).unwrap();
        for (ctx, e, goal) in open_sites(&p, &split) {
            let mut rev = ctx.clone();
            rev.groups.reverse();
            let mut rot = ctx.clone();
            let n = rot.groups.len();
            rot.groups.rotate_left(1.min(n));
            for g in [None, Some(&goal)] {
                let a = typecheck_expr(&p.classes, &ctx, &e, g).map(|j| j.result);
                for other in [&rev, &rot] {
                    let b = typecheck_expr(&p.classes, other, &e, g).map(|j| j.result);
                    prop_assert_eq!(a.is_ok(), b.is_ok());
                    if let (Ok(x), Ok(y)) = (&a, &b) {
                        prop_assert_eq!(x, y);
                    }
                }
            }
        }
    }

    #[test]
    fn derivable_types_are_up_closed(seed in any::<u64>(), split in prop::collection::vec(0usize..4, 8)) {
        let p = elaborate_program(&program(seed)).unwrap();
        let mut sites = open_sites(&p, &split);
        sites.push((TypeContext::empty(), p.main.clone(), Type::Int));
        for (ctx, e, _) in sites {
            let Ok(j) = typecheck_expr(&p.classes, &ctx, &e, None) else { continue };
            for u in sup_types(&j.result) {
                let k = typecheck_expr(&p.classes, &ctx, &e, Some(&u));
                prop_assert!(k.as_ref().is_ok_and(|k| k.result == u), "{} but not {}", j.result, u);
            }
        }
    }

    #[test]
    fn alpha_equivalence_is_an_equivalence(seed in any::<u64>()) {
        let e = program(seed).main;
        let mut fresh = Fresh::avoiding(&e);
        let e1 = rename_apart(&e, &mut fresh);
        let e2 = rename_apart(&e1, &mut fresh);
        prop_assert!(alpha_equiv(&e, &e));
        prop_assert!(alpha_equiv(&e, &e1) && alpha_equiv(&e1, &e));
        prop_assert!(alpha_equiv(&e1, &e2) && alpha_equiv(&e, &e2));
        let other = program(seed.wrapping_add(1)).main;
        prop_assert_eq!(alpha_equiv(&e, &other), alpha_equiv(&other, &e));
    }

    #[test]
    fn value_normalization_is_idempotent(seed in 0u64..10_000) {
        let p = program(seed);
        prop_assume!(typecheck_program(&p).is_ok());
        let a = anf_program(&p).unwrap();
        let t = run(&a.main, &a.classes, 2000).unwrap();
        for s in &t.steps {
            let ExprKind::Block(ds, _) = &s.term.kind else { continue };
            for d in ds.iter().filter(|d| d.init.is_value()) {
                let once = normalize_value(&d.init, &a.classes);
                let twice = normalize_value(&once, &a.classes);
                prop_assert!(alpha_equiv(&once, &twice));
            }
        }
    }

    #[test]
    fn shrunk_programs_stay_valid(seed in 0u64..10_000) {
        let p = program(seed);
        let has_capsule = |q: &Program| print_program(q).contains("capsule");
        prop_assume!(has_capsule(&p));
        let s = shrink(&p, has_capsule).unwrap();
        prop_assert!(validate_wellformedness(&s).is_empty());
        prop_assert!(has_capsule(&s));
        prop_assert!(declaration_count(&s) <= declaration_count(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn print_then_parse_round_trips(seed in any::<u64>()) {
        let p = program(seed);
        let q = parse(&print_program(&p)).unwrap();
        prop_assert!(alpha_equiv(&p.main, &q.main));
        prop_assert_eq!(print_program(&p), print_program(&q));
    }
}

#[test]
fn shrinking_a_large_program_does_not_grow_it() {
    let mut cfg = GenConfig::new(0);
    cfg.max_block_decls = 6;
    cfg.max_depth = 5;
    let p = (0..500)
        .map(|s| gen_program(&cfg.with_seed(s)))
        .find(|p| declaration_count(p) >= 20 && print_program(p).contains("capsule"))
        .expect("a program with 20 declarations");
    let s = shrink(&p, |q| print_program(q).contains("capsule")).unwrap();
    assert!(declaration_count(&s) <= declaration_count(&p));
    assert!(declaration_count(&s) < 20, "{}", print_program(&s));
    assert!(validate_wellformedness(&s).is_empty());
}

#[test]
fn generated_programs_have_open_sites_with_groups() {
    let split = [0, 1, 0, 2, 1, 0, 2, 1];
    let sites: Vec<_> =
        (0..50).flat_map(|s| open_sites(&elaborate_program(&program(s)).unwrap(), &split)).collect();
    assert!(sites.len() >= 50, "{}", sites.len());
    assert!(sites.iter().filter(|(c, _, _)| c.groups.len() >= 2).count() >= 10);
}
