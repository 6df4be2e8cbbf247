//! Class-level checks that do not depend on qualifiers, plus filling in
//! the types of `e; e'` discard declarations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use super::{Rule, TypeError};
use crate::syntax::{ClassTable, Expr, ExprKind, Name, Program, Qualifier, Receiver, Type};

type Env = BTreeMap<Name, Type>;

fn ill(e: &Expr, rule: Rule, msg: String) -> TypeError {
    TypeError::ill(e.span, Some(rule), msg)
}

fn same_shape(a: &Option<Name>, t: &Type) -> bool {
    match (a, t) {
        (None, Type::Int) => true,
        (Some(c), Type::Class(_, d)) => c == d,
        _ => false,
    }
}

fn show(s: &Option<Name>) -> String {
    match s {
        None => String::from("int"),
        Some(c) => format!("class {}", c),
    }
}

fn check_args(
    ct: &ClassTable,
    env: &Env,
    at: &Expr,
    rule: Rule,
    args: &[Expr],
    want: &[Type],
) -> Result<(), TypeError> {
    if args.len() != want.len() {
        return Err(ill(at, rule, format!("expected {} arguments, found {}", want.len(), args.len())));
    }
    for (a, t) in args.iter().zip(want) {
        let s = class_of(ct, env, a)?;
        if !same_shape(&s, t) {
            return Err(ill(a, rule, format!("argument has {}, expected {}", show(&s), t)));
        }
    }
    Ok(())
}

/// The class of `e`, or `None` for `int`. Fails on unbound names, unknown
/// members and class mismatches.
pub fn class_of(ct: &ClassTable, env: &Env, e: &Expr) -> Result<Option<Name>, TypeError> {
    match &e.kind {
        ExprKind::Var(x) => match env.get(x) {
            Some(t) => Ok(t.class_name().cloned()),
            None => Err(ill(e, Rule::Var, format!("unbound variable {}", x))),
        },
        ExprKind::Int(_) => Ok(None),
        ExprKind::Plus(a, b) => {
            for o in [a, b] {
                if class_of(ct, env, o)?.is_some() {
                    return Err(ill(o, Rule::Plus, String::from("operand of + is not int")));
                }
            }
            Ok(None)
        }
        ExprKind::Field(r, f) => {
            let c = receiver_class(ct, env, r, Rule::FieldAccess)?;
            let fd = ct
                .fields(&c)
                .and_then(|fs| fs.iter().find(|d| &d.name == f))
                .ok_or_else(|| ill(e, Rule::FieldAccess, format!("class {} has no field {}", c, f)))?;
            Ok(fd.ty.class_name().cloned())
        }
        ExprKind::Assign(r, f, rhs) => {
            let c = receiver_class(ct, env, r, Rule::FieldAssign)?;
            let fd = ct
                .fields(&c)
                .and_then(|fs| fs.iter().find(|d| &d.name == f))
                .ok_or_else(|| ill(e, Rule::FieldAssign, format!("class {} has no field {}", c, f)))?;
            let s = class_of(ct, env, rhs)?;
            if !same_shape(&s, &fd.ty) {
                return Err(ill(
                    rhs,
                    Rule::FieldAssign,
                    format!("assigned value has {}, field is {}", show(&s), fd.ty),
                ));
            }
            Ok(fd.ty.class_name().cloned())
        }
        ExprKind::Call(r, m, args) => {
            let c = receiver_class(ct, env, r, Rule::MethCall)?;
            let md = ct
                .method(&c, m)
                .ok_or_else(|| ill(e, Rule::MethCall, format!("class {} has no method {}", c, m)))?;
            if md.receiver == Receiver::Static {
                return Err(ill(e, Rule::MethCall, format!("{}.{} is static", c, m)));
            }
            let want: alloc::vec::Vec<Type> = md.params.iter().map(|p| p.ty.clone()).collect();
            check_args(ct, env, e, Rule::MethCall, args, &want)?;
            Ok(md.ret.class_name().cloned())
        }
        ExprKind::StaticCall(c, m, args) => {
            let md = ct
                .method(c, m)
                .ok_or_else(|| ill(e, Rule::StaticCall, format!("class {} has no method {}", c, m)))?;
            if md.receiver != Receiver::Static {
                return Err(ill(e, Rule::StaticCall, format!("{}.{} needs a receiver", c, m)));
            }
            let want: alloc::vec::Vec<Type> = md.params.iter().map(|p| p.ty.clone()).collect();
            check_args(ct, env, e, Rule::StaticCall, args, &want)?;
            Ok(md.ret.class_name().cloned())
        }
        ExprKind::New(c, args) => {
            let fs = ct.fields(c).ok_or_else(|| ill(e, Rule::New, format!("unknown class {}", c)))?;
            let want: alloc::vec::Vec<Type> = fs.iter().map(|f| f.ty.clone()).collect();
            check_args(ct, env, e, Rule::New, args, &want)?;
            Ok(Some(c.clone()))
        }
        ExprKind::Block(ds, body) => {
            let mut inner = env.clone();
            for d in ds {
                if let Some(t) = &d.ty {
                    if let Some(c) = t.class_name() {
                        if !ct.contains(c) {
                            return Err(TypeError::ill(
                                d.span,
                                Some(Rule::Block),
                                format!("unknown class {}", c),
                            ));
                        }
                    }
                    inner.insert(d.name.clone(), t.clone());
                }
            }
            for d in ds {
                let s = class_of(ct, &inner, &d.init)?;
                if let Some(t) = &d.ty {
                    if !same_shape(&s, t) {
                        return Err(TypeError::ill(
                            d.span,
                            Some(Rule::Block),
                            format!("{} is declared {} but initialised with {}", d.name, t, show(&s)),
                        ));
                    }
                }
            }
            class_of(ct, &inner, body)
        }
    }
}

fn receiver_class(ct: &ClassTable, env: &Env, r: &Expr, rule: Rule) -> Result<Name, TypeError> {
    class_of(ct, env, r)?.ok_or_else(|| ill(r, rule, String::from("receiver is an int")))
}

/// Checks classes and gives each discard declaration the type `read C` or
/// `int` of its initialiser.
pub fn elaborate_expr(ct: &ClassTable, env: &Env, e: &mut Expr) -> Result<(), TypeError> {
    class_of(ct, env, e)?;
    fill(ct, env, e);
    Ok(())
}

fn fill(ct: &ClassTable, env: &Env, e: &mut Expr) {
    match &mut e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => {}
        ExprKind::Field(r, _) => fill(ct, env, r),
        ExprKind::Call(r, _, args) => {
            fill(ct, env, r);
            args.iter_mut().for_each(|a| fill(ct, env, a));
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter_mut().for_each(|a| fill(ct, env, a));
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
            fill(ct, env, a);
            fill(ct, env, b);
        }
        ExprKind::Block(ds, body) => {
            let mut inner = env.clone();
            for d in ds.iter() {
                if let Some(t) = &d.ty {
                    inner.insert(d.name.clone(), t.clone());
                }
            }
            for d in ds.iter_mut() {
                if d.ty.is_none() {
                    let t = match class_of(ct, &inner, &d.init) {
                        Ok(Some(c)) => Type::Class(Qualifier::Read, c),
                        _ => Type::Int,
                    };
                    d.ty = Some(t);
                }
                fill(ct, &inner, &mut d.init);
            }
            fill(ct, &inner, body);
        }
    }
}

/// Elaborates every method body and the main expression. The error names
/// the method (`C.m`) or `main`.
pub fn elaborate_program(p: &Program) -> Result<Program, (String, TypeError)> {
    let mut out = p.clone();
    for c in p.classes.iter() {
        for m in &c.methods {
            let ctx = super::method_context(&c.name, m);
            let mut body = m.body.clone();
            elaborate_expr(&p.classes, &ctx.gamma, &mut body)
                .map_err(|e| (format!("{}.{}", c.name, m.name), e))?;
            let rs = m.ret.class_name();
            let bs =
                class_of(&p.classes, &ctx.gamma, &body).map_err(|e| (format!("{}.{}", c.name, m.name), e))?;
            if rs != bs.as_ref() {
                return Err((
                    format!("{}.{}", c.name, m.name),
                    TypeError::ill(m.span, None, format!("body has {}, method returns {}", show(&bs), m.ret)),
                ));
            }
            out.classes.set_method_body(&c.name, &m.name, body);
        }
    }
    let mut main = p.main.clone();
    elaborate_expr(&p.classes, &Env::new(), &mut main).map_err(|e| (String::from("main"), e))?;
    out.main = main;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    #[test]
    fn discards_get_read_or_int() {
        let p = parse("class C { int f; } mut C c = new C(1); c.f=2; c; c.f").unwrap();
        let q = elaborate_program(&p).unwrap();
        let ExprKind::Block(ds, _) = &q.main.kind else { panic!() };
        assert_eq!(ds[1].ty, Some(Type::Int));
        assert_eq!(ds[2].ty, Some(Type::class(Qualifier::Read, "C")));
    }

    #[test]
    fn unknown_field() {
        let p = parse("class C { int f; } mut C c = new C(1); c.g").unwrap();
        let (w, e) = elaborate_program(&p).unwrap_err();
        assert_eq!(w, "main");
        assert!(e.explanation.contains("no field g"));
    }
}
