use alloc::string::String;
use core::fmt::Write;

use crate::syntax::{Expr, ExprKind, Program, Receiver, Type};

pub fn print_type(t: &Type) -> String {
    alloc::format!("{}", t)
}

/// Single-line concrete syntax. Parsing the output gives back the same
/// term up to renaming of `e; e'` discard variables and spans.
pub fn pretty_print(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e);
    s
}

fn needs_parens_postfix(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::Assign(..) | ExprKind::Plus(..))
}

fn operand(s: &mut String, e: &Expr, parens: bool) {
    if parens {
        s.push('(');
        expr(s, e);
        s.push(')');
    } else {
        expr(s, e);
    }
}

fn list(s: &mut String, es: &[Expr]) {
    for (i, a) in es.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        expr(s, a);
    }
}

fn expr(s: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Var(x) => s.push_str(x.as_str()),
        ExprKind::Int(n) => {
            let _ = write!(s, "{}", n);
        }
        ExprKind::Field(r, f) => {
            operand(s, r, needs_parens_postfix(r));
            let _ = write!(s, ".{}", f);
        }
        ExprKind::Call(r, m, args) => {
            operand(s, r, needs_parens_postfix(r));
            let _ = write!(s, ".{}(", m);
            list(s, args);
            s.push(')');
        }
        ExprKind::StaticCall(c, m, args) => {
            let _ = write!(s, "{}.{}(", c, m);
            list(s, args);
            s.push(')');
        }
        ExprKind::Assign(r, f, rhs) => {
            operand(s, r, needs_parens_postfix(r));
            let _ = write!(s, ".{}=", f);
            expr(s, rhs);
        }
        ExprKind::New(c, args) => {
            let _ = write!(s, "new {}(", c);
            list(s, args);
            s.push(')');
        }
        ExprKind::Plus(a, b) => {
            operand(s, a, matches!(a.kind, ExprKind::Assign(..)));
            s.push('+');
            operand(s, b, needs_parens_postfix(b));
        }
        ExprKind::Block(ds, body) => {
            s.push('{');
            for d in ds {
                if let Some(t) = &d.ty {
                    let _ = write!(s, "{} {}=", t, d.name);
                }
                expr(s, &d.init);
                s.push_str("; ");
            }
            expr(s, body);
            s.push('}');
        }
    }
}

/// Multi-line rendering of a whole program.
pub fn print_program(p: &Program) -> String {
    let mut s = String::new();
    for c in p.classes.iter() {
        let _ = writeln!(s, "class {} {{", c.name);
        for f in &c.fields {
            let _ = writeln!(s, "  {} {};", f.ty, f.name);
        }
        for m in &c.methods {
            let recv = match m.receiver {
                Receiver::Static => String::from("static"),
                Receiver::Qual(q) => String::from(q.keyword()),
            };
            let _ = write!(s, "  {} {}({}", m.ret, m.name, recv);
            for prm in &m.params {
                let _ = write!(s, ", {} {}", prm.ty, prm.name);
            }
            let _ = writeln!(s, ") {{ return {}; }}", pretty_print(&m.body));
        }
        s.push_str("}\n");
    }
    s.push_str(&pretty_print(&p.main));
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, parse_expr};
    use crate::syntax::ClassTable;

    #[test]
    fn var_prints_bare() {
        assert_eq!(pretty_print(&Expr::var("x")), "x");
    }

    #[test]
    fn typing_one_block() {
        let e = parse_expr("{mut D x=new D(y.f); new C(x,x)}", &ClassTable::new()).unwrap();
        let out = pretty_print(&Expr::block(
            alloc::vec![crate::syntax::Decl::new(Type::class(crate::Qualifier::Capsule, "C"), "z", e)],
            Expr::var("z"),
        ));
        assert!(out.contains("capsule C z="));
        assert!(out.contains("{mut D x=new D(y.f); new C(x, x)}"));
    }

    #[test]
    fn program_round_trip() {
        let src = "class D { int f; mut D g(mut, int k) { return this; } }
                   mut D y=new D(0); (y.f=y.f+1)+{y.f}; y.g(3).f";
        let p = parse(src).unwrap();
        let q = parse(&print_program(&p)).unwrap();
        assert_eq!(p.classes, q.classes);
        assert_eq!(pretty_print(&p.main), pretty_print(&q.main));
    }
}
