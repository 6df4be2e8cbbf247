use caps_core::congruence::{alpha_equiv, wf_rightvalue};
use caps_core::parser::{anf_program, parse, parse_expr, pretty_print};
use caps_core::reduce::{run, ReductionTrace, RuleName};
use caps_core::syntax::free_vars;
use caps_core::{ClassTable, Expr, ExprKind, Name};

fn trace_of(src: &str) -> (ReductionTrace, ClassTable) {
    let p = anf_program(&parse(src).unwrap()).unwrap();
    let t = run(&p.main, &p.classes, 1000).unwrap_or_else(|e| panic!("{e}\n{}", e.trace));
    (t, p.classes)
}

/// The `new D(n)` bound to `x` in the outermost block.
fn int_field(e: &Expr, x: &str) -> Option<i64> {
    let ExprKind::Block(ds, _) = &e.kind else { return None };
    let d = ds.iter().find(|d| d.name.base() == x)?;
    match &d.init.kind {
        ExprKind::New(_, args) => match args[0].kind {
            ExprKind::Int(n) => Some(n),
            _ => None,
        },
        _ => None,
    }
}

#[test]
fn assignment_in_block_body() {
    let (t, ct) = trace_of("class B { mut B f; } {mut B x = new B(y); mut B y = new B(x); x.f = x}");
    assert_eq!(t.fuel_used(), 1);
    assert_eq!(t.steps[1].rule, Some(RuleName::FieldAssign));
    let want = parse_expr("{mut B x = new B(x); mut B y = new B(x); x}", &ct).unwrap();
    assert!(alpha_equiv(t.last().unwrap(), &want), "{t}");
}

#[test]
fn capsule_initializer_updates_outer_store() {
    let (t, _) = trace_of(
        "class D { int f; } class C { mut D f1; mut D f2; }
         {mut D y = new D(0); capsule C z = {mut D x = new D(y.f = y.f + 1); new C(x, x)}; y}",
    );
    let at_rv = t
        .steps
        .iter()
        .find_map(|s| {
            let ExprKind::Block(ds, _) = &s.term.kind else { return None };
            let z = ds.iter().find(|d| d.name.base() == "z")?;
            z.init.is_right_value().then(|| (s, z.init.clone()))
        })
        .unwrap_or_else(|| panic!("z never evaluated:\n{t}"));
    assert!(free_vars(&at_rv.1).is_empty(), "{}", pretty_print(&at_rv.1));
    assert!(wf_rightvalue(&at_rv.1));
    assert_eq!(int_field(&at_rv.0.term, "y"), Some(1), "{t}");
    assert_eq!(int_field(t.last().unwrap(), "y"), Some(1), "{t}");
    assert!(t.steps.iter().any(|s| s.rule == Some(RuleName::CapsuleElim)));
}

#[test]
fn scope_extrusion_moves_store_first() {
    let src = "class C { mut D f; } class D { int n; }
         {mut C x = new C(w); imm C z = {mut D y1 = new D(0); mut D y2 = x.f = y1; mut D y3 = new D(1); new C(y3)}; x}";
    let p = parse(src).unwrap();
    let t = run(&p.main, &p.classes, 2).unwrap_err().trace;
    assert_eq!(t.steps[1].rule, Some(RuleName::FieldAssignMove), "{t}");
    let moved = parse_expr(
        "{mut C x = new C(w); mut D y1 = new D(0);
          imm C z = {mut D y2 = x.f = y1; mut D y3 = new D(1); new C(y3)}; x}",
        &p.classes,
    )
    .unwrap();
    assert!(alpha_equiv(&t.steps[1].term, &moved), "{t}");
    assert_eq!(t.steps[2].rule, Some(RuleName::FieldAssign));
    let ExprKind::Block(ds, _) = &t.steps[2].term.kind else { panic!() };
    let ExprKind::New(_, args) = &ds[0].init.kind else { panic!() };
    assert_eq!(args[0].as_var().map(Name::base), Some("y1"));
}

#[test]
fn free_variables_never_grow() {
    let (t, _) = trace_of(
        "class D { int f; } class C { mut D f1; mut D f2; }
         {mut D y = new D(0); capsule C z = {mut D x = new D(y.f = y.f + 1); new C(x, x)}; imm C w = z; w}",
    );
    for s in &t.steps {
        assert!(free_vars(&s.term).is_empty(), "{}", pretty_print(&s.term));
    }
}
