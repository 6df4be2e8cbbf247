//! Brute-force decomposition: every subterm position whose path is an
//! evaluation context and whose subterm is a pre-redex, read directly off
//! the grammar.

use caps_core::congruence::wf_dv;
use caps_core::reduce::{Decomposition, Frame, PreRedex};
use caps_core::{Expr, ExprKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Decl(usize),
    Body,
    /// Any other child; never part of an evaluation context.
    Other(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    FieldAccess,
    MethodCall,
    StaticCall,
    FieldAssign,
    Plus,
    NonWfDecl,
}

/// `x | n | new C(atoms) | {dvs v}` with well-formed `dvs`.
fn normal_value(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => true,
        ExprKind::New(_, args) => args.iter().all(Expr::is_atom),
        ExprKind::Block(ds, body) => ds.iter().all(wf_dv) && normal_value(body),
        _ => false,
    }
}

fn pre_redex(e: &Expr) -> Option<Kind> {
    let vals = |xs: &[Expr]| xs.iter().all(Expr::is_value);
    match &e.kind {
        ExprKind::Field(v, _) if v.is_value() => Some(Kind::FieldAccess),
        ExprKind::Call(v, _, vs) if v.is_value() && vals(vs) => Some(Kind::MethodCall),
        ExprKind::StaticCall(_, _, vs) if vals(vs) => Some(Kind::StaticCall),
        ExprKind::Assign(v, _, u) if v.is_value() && u.is_value() => Some(Kind::FieldAssign),
        ExprKind::Plus(v, u) if v.is_value() && u.is_value() => Some(Kind::Plus),
        ExprKind::Block(ds, _) => {
            let i = ds.iter().position(|d| !wf_dv(d))?;
            (ds[i].init.is_value() && normal_value(&ds[i].init)).then_some(Kind::NonWfDecl)
        }
        _ => None,
    }
}

fn children(e: &Expr) -> Vec<(Step, &Expr)> {
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => vec![],
        ExprKind::Field(a, _) => vec![(Step::Other(0), &**a)],
        ExprKind::Call(a, _, args) => {
            core::iter::once(&**a).chain(args.iter()).enumerate().map(|(i, c)| (Step::Other(i), c)).collect()
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter().enumerate().map(|(i, c)| (Step::Other(i), c)).collect()
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
            vec![(Step::Other(0), &**a), (Step::Other(1), &**b)]
        }
        ExprKind::Block(ds, body) => ds
            .iter()
            .enumerate()
            .map(|(i, d)| (Step::Decl(i), &d.init))
            .chain(core::iter::once((Step::Body, &**body)))
            .collect(),
    }
}

/// Whether descending from `e` through `s` extends an evaluation context.
fn context_step(e: &Expr, s: Step) -> bool {
    let ExprKind::Block(ds, _) = &e.kind else { return false };
    match s {
        Step::Decl(i) => ds[..i].iter().all(wf_dv) && !wf_dv(&ds[i]),
        Step::Body => ds.iter().all(wf_dv),
        Step::Other(_) => false,
    }
}

fn positions<'a>(e: &'a Expr, path: &mut Vec<Step>, out: &mut Vec<(Vec<Step>, &'a Expr)>) {
    out.push((path.clone(), e));
    for (s, c) in children(e) {
        path.push(s);
        positions(c, path, out);
        path.pop();
    }
}

/// Every split of `e`. The root itself counts only when it is not a
/// value in normal form.
pub fn splits(e: &Expr) -> Vec<(Vec<Step>, Kind)> {
    let mut all = Vec::new();
    positions(e, &mut Vec::new(), &mut all);
    let mut out = Vec::new();
    for (path, sub) in all {
        let mut node = e;
        let mut is_ctx = true;
        for s in &path {
            if !context_step(node, *s) {
                is_ctx = false;
                break;
            }
            node = children(node).into_iter().find(|(t, _)| t == s).map(|(_, c)| c).unwrap();
        }
        if is_ctx {
            if let Some(k) = pre_redex(sub) {
                out.push((path, k));
            }
        }
    }
    out
}

pub fn is_normal_value(e: &Expr) -> bool {
    normal_value(e)
}

/// Path and kind of a decomposition returned by the implementation.
pub fn of_decomposition(d: &Decomposition) -> Option<(Vec<Step>, Kind)> {
    let Decomposition::Split(ctx, r) = d else { return None };
    let path = ctx
        .frames
        .iter()
        .map(|f| match f {
            Frame::Decl { dvs, .. } => Step::Decl(dvs.len()),
            Frame::Body { .. } => Step::Body,
        })
        .collect();
    let kind = match r {
        PreRedex::FieldAccess(..) => Kind::FieldAccess,
        PreRedex::MethodCall(..) => Kind::MethodCall,
        PreRedex::StaticCall(..) => Kind::StaticCall,
        PreRedex::FieldAssign(..) => Kind::FieldAssign,
        PreRedex::Plus(..) => Kind::Plus,
        PreRedex::NonWfDecl { .. } => Kind::NonWfDecl,
    };
    Some((path, kind))
}

/// Mismatch description, or `None` when the implementation agrees with
/// the enumeration and the split is unique.
pub fn check(e: &Expr, d: &Decomposition) -> Option<String> {
    let found = splits(e);
    if found.len() > 1 {
        return Some(format!("{} splits: {:?}", found.len(), found));
    }
    match (d, found.first()) {
        (Decomposition::Value, None) if is_normal_value(e) => None,
        (Decomposition::Value, _) => Some(format!("value, enumeration {:?}", found)),
        (Decomposition::Stuck(_), None) if !is_normal_value(e) => None,
        (Decomposition::Stuck(m), _) => Some(format!("stuck ({m}), enumeration {:?}", found)),
        (Decomposition::Split(..), Some(f)) if of_decomposition(d).as_ref() == Some(f) => None,
        (Decomposition::Split(..), _) => {
            Some(format!("split {:?}, enumeration {:?}", of_decomposition(d), found))
        }
    }
}
