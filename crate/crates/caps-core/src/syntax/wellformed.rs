use alloc::vec::Vec;
use core::fmt;

use super::{free_vars, occurrences, Expr, ExprKind, Name, Program, Qualifier, Receiver, Span, Type};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// A capsule variable occurs more than once in its scope.
    CapsuleReused {
        count: usize,
    },
    /// A declaration refers to itself or a later declaration, and one of
    /// the two is not evaluated.
    ForwardReference {
        target: Name,
    },
    DuplicateBinder,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub var: Name,
    pub span: Span,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::CapsuleReused { count } => {
                write!(f, "capsule variable {} used {} times", self.var, count)
            }
            ViolationKind::ForwardReference { target } => {
                write!(f, "declaration of {} refers to {} before it is evaluated", self.var, target)
            }
            ViolationKind::DuplicateBinder => write!(f, "{} declared twice in one block", self.var),
        }
    }
}

/// Checks capsule linearity and the forward-reference rule over the main
/// expression and every method body. All violations are collected.
pub fn validate_wellformedness(p: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in p.classes.iter() {
        for m in &c.methods {
            if m.receiver == Receiver::Qual(Qualifier::Capsule) {
                check_linear(&m.body, &Name::new("this"), m.span, &mut out);
            }
            for prm in &m.params {
                if matches!(prm.ty, Type::Class(Qualifier::Capsule, _)) {
                    check_linear(&m.body, &prm.name, m.span, &mut out);
                }
            }
            expr_violations_into(&m.body, &mut out);
        }
    }
    expr_violations_into(&p.main, &mut out);
    out
}

/// Violations inside one expression.
pub fn expr_violations(e: &Expr) -> Vec<Violation> {
    let mut out = Vec::new();
    expr_violations_into(e, &mut out);
    out
}

fn check_linear(scope: &Expr, x: &Name, span: Span, out: &mut Vec<Violation>) {
    let count = occurrences(scope, x);
    if count > 1 {
        out.push(Violation { kind: ViolationKind::CapsuleReused { count }, var: x.clone(), span });
    }
}

fn expr_violations_into(e: &Expr, out: &mut Vec<Violation>) {
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => {}
        ExprKind::Field(r, _) => expr_violations_into(r, out),
        ExprKind::Call(r, _, args) => {
            expr_violations_into(r, out);
            args.iter().for_each(|a| expr_violations_into(a, out));
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter().for_each(|a| expr_violations_into(a, out));
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
            expr_violations_into(a, out);
            expr_violations_into(b, out);
        }
        ExprKind::Block(ds, body) => {
            for (i, d) in ds.iter().enumerate() {
                if ds[..i].iter().any(|p| p.name == d.name) {
                    out.push(Violation {
                        kind: ViolationKind::DuplicateBinder,
                        var: d.name.clone(),
                        span: d.span,
                    });
                }
                if d.qualifier() == Some(Qualifier::Capsule) {
                    let count = occurrences(body, &d.name)
                        + ds.iter().map(|o| occurrences(&o.init, &d.name)).sum::<usize>();
                    if count > 1 {
                        out.push(Violation {
                            kind: ViolationKind::CapsuleReused { count },
                            var: d.name.clone(),
                            span: d.span,
                        });
                    }
                }
                let fv = free_vars(&d.init);
                for later in &ds[i..] {
                    if fv.contains(&later.name) && !(d.is_evaluated() && later.is_evaluated()) {
                        out.push(Violation {
                            kind: ViolationKind::ForwardReference { target: later.name.clone() },
                            var: d.name.clone(),
                            span: d.span,
                        });
                    }
                }
                expr_violations_into(&d.init, out);
            }
            expr_violations_into(body, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{ClassTable, Decl};

    fn mutc(c: &str) -> Type {
        Type::class(Qualifier::Mut, c)
    }

    fn prog(main: Expr) -> Program {
        Program { classes: ClassTable::new(), main }
    }

    #[test]
    fn capsule_used_twice() {
        let main = Expr::block(
            vec![
                Decl::new(Type::class(Qualifier::Capsule, "C"), "c", Expr::new_obj("C", vec![Expr::int(0)])),
                Decl::new(
                    Type::class(Qualifier::Capsule, "D"),
                    "d1",
                    Expr::new_obj("D", vec![Expr::var("c")]),
                ),
                Decl::new(Type::class(Qualifier::Imm, "D"), "d2", Expr::new_obj("D", vec![Expr::var("c")])),
            ],
            Expr::var("d2"),
        );
        let v = validate_wellformedness(&prog(main));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].var, Name::new("c"));
        assert_eq!(v[0].kind, ViolationKind::CapsuleReused { count: 2 });
    }

    #[test]
    fn cyclic_store_allowed() {
        let main = Expr::block(
            vec![
                Decl::new(mutc("C"), "y", Expr::new_obj("C", vec![Expr::var("x")])),
                Decl::new(mutc("C"), "x", Expr::new_obj("C", vec![Expr::var("y")])),
            ],
            Expr::var("x"),
        );
        assert!(validate_wellformedness(&prog(main)).is_empty());
    }

    #[test]
    fn forward_reference_to_unevaluated() {
        let main = Expr::block(
            vec![
                Decl::new(mutc("C"), "y", Expr::field(Expr::var("x"), "f")),
                Decl::new(mutc("C"), "x", Expr::new_obj("C", vec![Expr::var("y")])),
            ],
            Expr::var("x"),
        );
        let v = validate_wellformedness(&prog(main));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::ForwardReference { target: Name::new("x") });
    }

    #[test]
    fn self_reference_via_field() {
        let main =
            Expr::block(vec![Decl::new(mutc("C"), "x", Expr::field(Expr::var("x"), "f"))], Expr::var("x"));
        assert_eq!(validate_wellformedness(&prog(main)).len(), 1);
    }

    #[test]
    fn alias_cycle_rejected() {
        let main = Expr::block(
            vec![Decl::new(mutc("C"), "x", Expr::var("y")), Decl::new(mutc("C"), "y", Expr::var("x"))],
            Expr::var("x"),
        );
        assert!(!validate_wellformedness(&prog(main)).is_empty());
    }
}
