use caps_core::parser::parse;
use caps_core::typeck::{replay, typecheck_program, Rule, TypeErrorKind};

const DC: &str = "class D { int f; } class C { mut D f1; mut D f2; }";

fn accepts(src: &str) -> Vec<Rule> {
    let p = parse(src).unwrap_or_else(|e| panic!("parse: {e}"));
    let t = typecheck_program(&p).unwrap_or_else(|e| panic!("rejected: {e}\n{src}"));
    replay(&t.program.classes, &t.main.derivation).unwrap_or_else(|e| panic!("replay: {e}"));
    for (_, j) in &t.methods {
        replay(&t.program.classes, &j.derivation).unwrap();
    }
    t.main.rule_path
}

fn rejects(src: &str) -> caps_core::typeck::ProgramErrors {
    let p = parse(src).unwrap_or_else(|e| panic!("parse: {e}"));
    match typecheck_program(&p) {
        Ok(t) => panic!("accepted with {}:\n{src}", t.main.result),
        Err(e) => {
            assert!(e.errors.iter().all(|(_, e)| e.kind == TypeErrorKind::IllTyped), "{e}");
            e
        }
    }
}

#[test]
fn capsule_recovery_through_lent_y() {
    let path = accepts(&format!("{DC} mut D y=new D(0); capsule C z={{mut D x=new D(y.f); new C(x,x)}}; z"));
    assert!(path.contains(&Rule::Capsule));
}

#[test]
fn alias_blocks_capsule() {
    let e = rejects(&format!("{DC} mut D y=new D(0); capsule C z={{mut D x=y; new C(x,x)}}; z"));
    assert_eq!(e.errors[0].1.blocking.as_ref().map(|n| n.as_str()), Some("y"));
}

#[test]
fn swap_inside_recovery() {
    let path =
        accepts(&format!("{DC} mut D y=new D(0); capsule C z={{mut D x=new D(y.f=y.f+1); new C(x,x)}}; z"));
    assert!(path.contains(&Rule::Capsule) && path.contains(&Rule::Swap));
}

#[test]
fn imm_recovery_with_restriction() {
    let path = accepts(&format!("{DC} mut D y=new D(0); imm C z={{lent D x=new D(y.f); new C(x,x)}}; z"));
    assert!(path.contains(&Rule::Imm) && path.contains(&Rule::Unrst), "{path:?}");
}

#[test]
fn restricted_alias_blocks_imm() {
    rejects(&format!("{DC} mut D y=new D(0); imm C z={{lent D x=y; new C(x,x)}}; z"));
}

#[test]
fn swap_result_weakened() {
    rejects(
        "class A { int v; } class D { mut A f1; mut A f2; } class C { mut A f1; mut A f2; }
         mut D y=new D(x1,x2); mut A x1=new A(0); mut A x2=new A(1);
         capsule C z={mut A x=(y.f1=y.f2); new C(x,x)}; z",
    );
}

#[test]
fn lent_local_joins_outer_group() {
    accepts(&format!(
        "{DC} mut D z=new D(0); mut C x=new C(z,z);
         capsule C y={{lent D z1=new D(1); lent D z2=(x.f1=z1); mut D z3=new D(2); new C(z3,z3)}}; y"
    ));
}

#[test]
fn lent_local_in_result_rejected() {
    rejects(&format!(
        "{DC} mut D z=new D(0); mut C x=new C(z,z);
         capsule C y={{lent D z1=new D(1); lent D z2=(x.f1=z1); new C(z1,z1)}}; y"
    ));
}

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

#[test]
fn nested_recovery_slots() {
    for ok in ["a3", "a1.clone()", "a2.clone()", "a2.mix(a2).clone()", "a1.mix(a1).clone()"] {
        accepts(&nested(ok));
    }
    for bad in ["a1", "a2", "a2.mix(a1).clone()"] {
        rejects(&nested(bad));
    }
}
