use caps_core::meta::{check_all, check_subject_reduction, Theorem};
use caps_core::parser::{anf_program, parse, parse_expr, pretty_print};
use caps_core::reduce::{run, ReductionTrace};
use caps_core::typeck::typecheck_program;
use caps_core::{ClassTable, Type};

const DC: &str = "class D { int f; } class C { mut D f1; mut D f2; }";

fn nested(slot: &str) -> String {
    format!(
        "class A {{ mut A f; int v;
           mut A mix(mut, mut A a) {{ return this.f=a; }}
           capsule A clone(read) {{ return {{mut A x=new A(x, this.v); x}}; }}
           static mut A parse() {{ return {{mut A x=new A(x, 0); x}}; }} }}
         mut A a1=A.parse();
         capsule A outerA={{
           mut A a2=A.parse();
           capsule A nestedA={{ mut A a3=A.parse(); mut A res={slot}; res.mix(a3) }};
           nestedA.mix(a2) }};
         outerA"
    )
}

fn traced(src: &str) -> (ReductionTrace, ClassTable, Type) {
    let p = parse(src).unwrap_or_else(|e| panic!("parse: {e}"));
    let t = typecheck_program(&p).unwrap_or_else(|e| panic!("rejected: {e}\n{src}"));
    let p = anf_program(&p).unwrap();
    let tr = run(&p.main, &p.classes, 2000).unwrap_or_else(|e| panic!("{e}\n{}", e.trace));
    (tr, p.classes, t.main.result)
}

fn programs() -> Vec<String> {
    let mut v = vec![
        format!("{DC} mut D y=new D(0); capsule C z={{mut D x=new D(y.f); new C(x,x)}}; z"),
        format!("{DC} mut D y=new D(0); capsule C z={{mut D x=new D(y.f=y.f+1); new C(x,x)}}; z"),
        format!("{DC} mut D y=new D(0); imm C z={{lent D x=new D(y.f); new C(x,x)}}; z"),
        format!(
            "{DC} mut D z=new D(0); mut C x=new C(z,z);
             capsule C y={{lent D z1=new D(1); lent D z2=(x.f1=z1); mut D z3=new D(2); new C(z3,z3)}}; y"
        ),
        "class B { mut B f; } mut B x = new B(y); mut B y = new B(x); x.f = x".to_string(),
        "class C { int f; } mut C y = new C(0); imm C x = {mut C t = new C(2); t}; \
         mut C z = new C(y.f = 1); x"
            .to_string(),
    ];
    for slot in ["a3", "a1.clone()", "a2.clone()", "a2.mix(a2).clone()", "a1.mix(a1).clone()"] {
        v.push(nested(slot));
    }
    v
}

#[test]
fn well_typed_traces_satisfy_all_theorems() {
    for src in programs() {
        let (t, ct, ty) = traced(&src);
        let v = check_all(&t, &ct, &ty);
        assert!(v.is_empty(), "{src}\n{t}\n{}", v.iter().map(|v| format!("{v}\n")).collect::<String>());
    }
}

#[test]
fn retargeted_field_breaks_subject_reduction() {
    let src = "class B { mut B f; } class E { int n; }
               mut B x = new B(y); mut B y = new B(x); mut E e = new E(0); x.f = x";
    let (mut t, ct, ty) = traced(src);
    assert!(check_subject_reduction(&t, &ct, &ty).is_empty());
    let k = t.steps.len() - 1;
    let printed = pretty_print(&t.steps[k].term);
    let bad = printed.replacen("new B(y)", "new B(e)", 1);
    let bad = if bad != printed { bad } else { printed.replacen("new B(x)", "new B(e)", 1) };
    t.steps[k].term = parse_expr(&bad, &ct).unwrap();
    let v = check_subject_reduction(&t, &ct, &ty);
    assert_eq!(v.len(), 1, "{t}");
    assert_eq!((v[0].theorem, v[0].step), (Theorem::SubjectReduction, k));
}
