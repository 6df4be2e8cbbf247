//! Independent re-check of a derivation tree against the typing rules.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::context::{wf_context, TypeContext};
use super::{Derivation, Rule};
use crate::syntax::{subtype, ClassTable, Expr, ExprKind, Name, Qualifier, Receiver, Type};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayError {
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.message)
    }
}

fn fail<T>(d: &Derivation, msg: String) -> Result<T, ReplayError> {
    Err(ReplayError { rule: d.rule, message: format!("{} at {}", msg, crate::parser::pretty_print(&d.expr)) })
}

fn weaken(t: &Type) -> Type {
    match t {
        Type::Class(Qualifier::Mut, c) => Type::Class(Qualifier::Lent, c.clone()),
        t => t.clone(),
    }
}

fn field_ty(ct: &ClassTable, c: &Name, f: &Name) -> Option<Type> {
    ct.fields(c)?.iter().find(|d| &d.name == f).map(|d| d.ty.clone())
}

fn class_of(t: &Type) -> Option<&Name> {
    t.class_name()
}

/// `xss' xs'` is a partition of the `mut` variables of `gamma`, and the
/// old groups are each inside one new group with no two sharing.
fn refines(old: &[BTreeSet<Name>], new: &[BTreeSet<Name>]) -> bool {
    let mut used = BTreeSet::new();
    for g in old {
        if g.is_empty() {
            continue;
        }
        let Some(i) = new.iter().position(|h| g.is_subset(h)) else { return false };
        if !used.insert(i) {
            return false;
        }
    }
    true
}

pub fn replay(ct: &ClassTable, d: &Derivation) -> Result<(), ReplayError> {
    if !wf_context(&d.context) {
        return fail(d, format!("context not well formed: {}", d.context));
    }
    let ps = &d.premises;
    let same_expr = |p: &Derivation| p.expr == d.expr;
    let arity = |n: usize| -> Result<(), ReplayError> {
        if ps.len() != n {
            return fail(d, format!("expected {} premises, found {}", n, ps.len()));
        }
        Ok(())
    };
    match d.rule {
        Rule::Sub => {
            arity(1)?;
            if !same_expr(&ps[0]) || ps[0].context != d.context || !subtype(&ps[0].ty, &d.ty) {
                return fail(d, format!("{} is not a subtype step to {}", ps[0].ty, d.ty));
            }
        }
        Rule::Capsule | Rule::Imm => {
            arity(1)?;
            let (target, from, to) = if d.rule == Rule::Capsule {
                (d.context.recover_capsule(), Qualifier::Mut, Qualifier::Capsule)
            } else {
                (d.context.recover_imm(), Qualifier::Read, Qualifier::Imm)
            };
            let p = &ps[0];
            let ok = same_expr(p)
                && p.context.equivalent(&target)
                && p.ty.qualifier() == Some(from)
                && d.ty.qualifier() == Some(to)
                && class_of(&p.ty) == class_of(&d.ty);
            if !ok {
                return fail(d, format!("premise {} in {} does not recover {}", p.ty, p.context, d.ty));
            }
        }
        Rule::Swap => {
            arity(1)?;
            let p = &ps[0];
            let mut candidates: Vec<TypeContext> = d.context.swap(None).into_iter().collect();
            for g in &d.context.groups {
                if let Some(x) = g.iter().next() {
                    candidates.extend(d.context.swap(Some(x)));
                }
            }
            let ok =
                same_expr(p) && candidates.iter().any(|c| c.equivalent(&p.context)) && weaken(&p.ty) == d.ty;
            if !ok {
                return fail(d, format!("premise context {} is not a swap", p.context));
            }
        }
        Rule::Unrst => {
            arity(1)?;
            let p = &ps[0];
            let small = matches!(d.ty, Type::Int | Type::Class(Qualifier::Capsule | Qualifier::Imm, _));
            if !same_expr(p) || !p.context.equivalent(&d.context.unrestrict()) || p.ty != d.ty || !small {
                return fail(d, String::from("bad unrestriction"));
            }
        }
        Rule::Var => {
            arity(0)?;
            let ExprKind::Var(x) = &d.expr.kind else { return fail(d, String::from("not a variable")) };
            if d.context.lookup(x).as_ref() != Some(&d.ty) {
                return fail(d, format!("{} does not have type {}", x, d.ty));
            }
        }
        Rule::Int => {
            arity(0)?;
            if !matches!(d.expr.kind, ExprKind::Int(_)) || d.ty != Type::Int {
                return fail(d, String::from("not an int literal"));
            }
        }
        Rule::Plus => {
            arity(2)?;
            let ExprKind::Plus(a, b) = &d.expr.kind else { return fail(d, String::from("not a sum")) };
            check_premise(d, &ps[0], a, &Type::Int)?;
            check_premise(d, &ps[1], b, &Type::Int)?;
            if d.ty != Type::Int {
                return fail(d, String::from("sum is not int"));
            }
        }
        Rule::FieldAccess => {
            arity(1)?;
            let ExprKind::Field(r, f) = &d.expr.kind else {
                return fail(d, String::from("not a field access"));
            };
            let p = &ps[0];
            same_context(d, p, r)?;
            let Type::Class(q, c) = &p.ty else { return fail(d, String::from("receiver is int")) };
            let Some(ft) = field_ty(ct, c, f) else { return fail(d, format!("no field {}", f)) };
            let expect = match &ft {
                Type::Class(Qualifier::Mut, dc) => Type::Class(*q, dc.clone()),
                t => t.clone(),
            };
            if expect != d.ty {
                return fail(d, format!("field access gives {}, not {}", expect, d.ty));
            }
        }
        Rule::FieldAssign => {
            arity(2)?;
            let ExprKind::Assign(r, f, rhs) = &d.expr.kind else {
                return fail(d, String::from("not an assignment"));
            };
            let Some(c) = class_of(&ps[0].ty).cloned() else {
                return fail(d, String::from("receiver is int"));
            };
            check_premise(d, &ps[0], r, &Type::Class(Qualifier::Mut, c.clone()))?;
            let Some(ft) = field_ty(ct, &c, f) else { return fail(d, format!("no field {}", f)) };
            check_premise(d, &ps[1], rhs, &ft)?;
            if d.ty != ft {
                return fail(d, String::from("assignment type"));
            }
        }
        Rule::MethCall | Rule::StaticCall => {
            let (recv, c, m, args) = match &d.expr.kind {
                ExprKind::Call(r, m, args) if d.rule == Rule::MethCall => {
                    let Some(c) = ps.first().and_then(|p| class_of(&p.ty)).cloned() else {
                        return fail(d, String::from("missing receiver"));
                    };
                    (Some(&**r), c, m, args)
                }
                ExprKind::StaticCall(c, m, args) if d.rule == Rule::StaticCall => (None, c.clone(), m, args),
                _ => return fail(d, String::from("not a call")),
            };
            let Some(md) = ct.method(&c, m) else { return fail(d, format!("no method {}", m)) };
            arity(args.len() + usize::from(recv.is_some()))?;
            let mut i = 0;
            if let Some(r) = recv {
                let Receiver::Qual(q) = md.receiver else { return fail(d, String::from("static method")) };
                check_premise(d, &ps[0], r, &Type::Class(q, c.clone()))?;
                i = 1;
            }
            for (a, prm) in args.iter().zip(&md.params) {
                check_premise(d, &ps[i], a, &prm.ty)?;
                i += 1;
            }
            if d.ty != md.ret {
                return fail(d, String::from("call result type"));
            }
        }
        Rule::New => {
            let ExprKind::New(c, args) = &d.expr.kind else { return fail(d, String::from("not new")) };
            let Some(fs) = ct.fields(c) else { return fail(d, format!("no class {}", c)) };
            arity(fs.len())?;
            for ((a, fd), p) in args.iter().zip(fs).zip(ps) {
                check_premise(d, p, a, &fd.ty)?;
            }
            if d.ty != Type::Class(Qualifier::Mut, c.clone()) {
                return fail(d, String::from("new is mut"));
            }
        }
        Rule::Block => replay_block(d)?,
    }
    for p in ps {
        replay(ct, p)?;
    }
    Ok(())
}

fn same_context(d: &Derivation, p: &Derivation, e: &Expr) -> Result<(), ReplayError> {
    if &p.expr != e || p.context != d.context {
        return fail(d, String::from("premise is about another expression or context"));
    }
    Ok(())
}

fn check_premise(d: &Derivation, p: &Derivation, e: &Expr, t: &Type) -> Result<(), ReplayError> {
    same_context(d, p, e)?;
    if &p.ty != t {
        return fail(d, format!("premise has {}, rule needs {}", p.ty, t));
    }
    Ok(())
}

fn replay_block(d: &Derivation) -> Result<(), ReplayError> {
    let ExprKind::Block(ds, body) = &d.expr.kind else { return fail(d, String::from("not a block")) };
    let ps = &d.premises;
    if ps.len() != ds.len() + 1 {
        return fail(d, String::from("premise count"));
    }
    let names: BTreeSet<Name> = ds.iter().map(|x| x.name.clone()).collect();
    let outer = d.context.without(&names);
    let bp = &ps[ds.len()];
    let bc = &bp.context;
    if bp.expr != **body || bp.ty != d.ty {
        return fail(d, String::from("body premise"));
    }
    for (x, t) in &bc.gamma {
        let expect = match ds.iter().find(|dd| &dd.name == x) {
            Some(dd) => dd.ty.as_ref().map(super::infer::lent_to_mut),
            None => outer.gamma.get(x).cloned(),
        };
        if expect.as_ref() != Some(t) {
            return fail(d, format!("body context types {} wrongly", x));
        }
    }
    if bc.gamma.len() != outer.gamma.len() + ds.len() {
        return fail(d, String::from("body context domain"));
    }
    if bc.restricted != outer.restricted {
        return fail(d, String::from("body restricted set"));
    }
    if !refines(&outer.groups, &bc.groups) {
        return fail(d, String::from("body groups do not extend the outer groups"));
    }
    let bmut = bc.mutable_group();
    if !outer.mutable_group().is_subset(&bmut) {
        return fail(d, String::from("outer mutable group not kept mutable"));
    }
    for g in &bc.groups {
        if g.iter().any(|x| !names.contains(x) && outer.in_group(x).is_none()) {
            return fail(d, String::from("outer mutable variable moved to a lent group"));
        }
    }
    for dd in ds {
        if dd.qualifier() == Some(Qualifier::Lent) && bmut.contains(&dd.name) {
            return fail(d, format!("lent local {} in the mutable group", dd.name));
        }
    }
    for (dd, p) in ds.iter().zip(ps) {
        let t = dd.ty.as_ref().map(super::infer::lent_to_mut).unwrap_or(Type::Int);
        if p.expr != dd.init || p.ty != t {
            return fail(d, format!("premise for {}", dd.name));
        }
        let expect = if bc.is_mut(&dd.name) && bc.in_group(&dd.name).is_some() {
            bc.swap(Some(&dd.name))
        } else {
            Some(bc.clone())
        };
        if !expect.is_some_and(|c| c.equivalent(&p.context)) {
            return fail(d, format!("context for {}", dd.name));
        }
    }
    Ok(())
}
