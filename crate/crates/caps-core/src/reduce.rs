//! Small-step reduction over the store-as-blocks representation.
//!
//! A term is split into an evaluation context, a spine of block frames
//! listed outermost first, and a pre-redex in its hole. After each step the
//! term is put back into normal form by the value congruence.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use crate::congruence::connected_closure;
use crate::congruence::{canonical_display, normalize_value_with, wf_dv};
use crate::parser::pretty_print;
use crate::syntax::{
    free_vars, freshen, rename_apart, rename_free, substitute, ClassTable, Decl, Expr, ExprKind, Fresh, Name,
    Qualifier, Receiver, Span, Type,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleName {
    FieldAccess,
    Invk,
    FieldAssignProp,
    FieldAssign,
    FieldAssignMove,
    AliasElim,
    CapsuleElim,
    MutMove,
    ImmMove,
    Plus,
}

impl RuleName {
    pub const ALL: [RuleName; 10] = [
        RuleName::FieldAccess,
        RuleName::Invk,
        RuleName::FieldAssignProp,
        RuleName::FieldAssign,
        RuleName::FieldAssignMove,
        RuleName::AliasElim,
        RuleName::CapsuleElim,
        RuleName::MutMove,
        RuleName::ImmMove,
        RuleName::Plus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleName::FieldAccess => "field-access",
            RuleName::Invk => "invk",
            RuleName::FieldAssignProp => "field-assign-prop",
            RuleName::FieldAssign => "field-assign",
            RuleName::FieldAssignMove => "field-assign-move",
            RuleName::AliasElim => "alias-elim",
            RuleName::CapsuleElim => "capsule-elim",
            RuleName::MutMove => "mut-move",
            RuleName::ImmMove => "imm-move",
            RuleName::Plus => "plus",
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One block enclosing the hole.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    /// `{dvs T x = [] ds v}`.
    Decl {
        dvs: Vec<Decl>,
        ty: Option<Type>,
        name: Name,
        decl_span: Span,
        ds: Vec<Decl>,
        body: Expr,
        span: Span,
    },
    /// `{dvs []}`: a block whose store is evaluated and whose body is not.
    Body { dvs: Vec<Decl>, span: Span },
}

impl Frame {
    pub fn dvs(&self) -> &[Decl] {
        match self {
            Frame::Decl { dvs, .. } | Frame::Body { dvs, .. } => dvs,
        }
    }

    fn dvs_mut(&mut self) -> &mut Vec<Decl> {
        match self {
            Frame::Decl { dvs, .. } | Frame::Body { dvs, .. } => dvs,
        }
    }

    pub fn binders(&self) -> BTreeSet<Name> {
        let mut out: BTreeSet<Name> = self.dvs().iter().map(|d| d.name.clone()).collect();
        if let Frame::Decl { name, ds, .. } = self {
            out.insert(name.clone());
            out.extend(ds.iter().map(|d| d.name.clone()));
        }
        out
    }

    pub fn plug(&self, e: Expr) -> Expr {
        match self {
            Frame::Decl { dvs, ty, name, decl_span, ds, body, span } => {
                let mut all = dvs.clone();
                all.push(Decl { ty: ty.clone(), name: name.clone(), init: e, span: *decl_span });
                all.extend(ds.iter().cloned());
                Expr::with_span(ExprKind::Block(all, Box::new(body.clone())), *span)
            }
            Frame::Body { dvs, span } => Expr::with_span(ExprKind::Block(dvs.clone(), Box::new(e)), *span),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalContext {
    pub frames: Vec<Frame>,
}

impl EvalContext {
    pub fn plug(&self, e: Expr) -> Expr {
        self.frames.iter().rev().fold(e, |acc, f| f.plug(acc))
    }

    pub fn hole_binders(&self) -> BTreeSet<Name> {
        self.frames.iter().flat_map(Frame::binders).collect()
    }

    /// `dec(E, x)`: the nearest evaluated declaration of `x`.
    pub fn dec(&self, x: &Name) -> Option<&Decl> {
        self.frames.iter().rev().find_map(|f| f.dvs().iter().find(|d| &d.name == x))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PreRedex {
    FieldAccess(Expr, Name),
    MethodCall(Expr, Name, Vec<Expr>),
    StaticCall(Name, Name, Vec<Expr>),
    FieldAssign(Expr, Name, Expr),
    Plus(Expr, Expr),
    /// A block whose first declaration outside the store has a value that
    /// is itself in normal form.
    NonWfDecl {
        dvs: Vec<Decl>,
        decl: Decl,
        ds: Vec<Decl>,
        body: Expr,
        span: Span,
    },
}

impl PreRedex {
    pub fn to_expr(&self) -> Expr {
        let b = |e: &Expr| Box::new(e.clone());
        Expr::new(match self {
            PreRedex::FieldAccess(v, f) => ExprKind::Field(b(v), f.clone()),
            PreRedex::MethodCall(v, m, vs) => ExprKind::Call(b(v), m.clone(), vs.clone()),
            PreRedex::StaticCall(c, m, vs) => ExprKind::StaticCall(c.clone(), m.clone(), vs.clone()),
            PreRedex::FieldAssign(v, f, u) => ExprKind::Assign(b(v), f.clone(), b(u)),
            PreRedex::Plus(x, y) => ExprKind::Plus(b(x), b(y)),
            PreRedex::NonWfDecl { dvs, decl, ds, body, span } => {
                let mut all = dvs.clone();
                all.push(decl.clone());
                all.extend(ds.iter().cloned());
                return Expr::with_span(ExprKind::Block(all, b(body)), *span);
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Decomposition {
    Value,
    Split(EvalContext, PreRedex),
    Stuck(String),
}

/// A value with no redex left inside: a reference, a literal, an object
/// state over atoms, or a block with a well-formed store and such a body.
pub fn is_done(v: &Expr) -> bool {
    match &v.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => true,
        ExprKind::New(_, args) => args.iter().all(Expr::is_atom),
        ExprKind::Block(ds, body) => ds.iter().all(wf_dv) && is_done(body),
        _ => false,
    }
}

pub fn decompose(e: &Expr) -> Decomposition {
    let mut frames = Vec::new();
    let mut cur = e;
    loop {
        let redex = match &cur.kind {
            ExprKind::Var(_) | ExprKind::Int(_) | ExprKind::New(..) if frames.is_empty() && is_done(cur) => {
                return Decomposition::Value
            }
            ExprKind::Field(v, f) => PreRedex::FieldAccess((**v).clone(), f.clone()),
            ExprKind::Call(v, m, vs) => PreRedex::MethodCall((**v).clone(), m.clone(), vs.clone()),
            ExprKind::StaticCall(c, m, vs) => PreRedex::StaticCall(c.clone(), m.clone(), vs.clone()),
            ExprKind::Assign(v, f, u) => PreRedex::FieldAssign((**v).clone(), f.clone(), (**u).clone()),
            ExprKind::Plus(a, b) => PreRedex::Plus((**a).clone(), (**b).clone()),
            ExprKind::Block(ds, body) => match ds.iter().position(|d| !wf_dv(d)) {
                Some(i) => {
                    let d = &ds[i];
                    if d.init.is_value() && is_done(&d.init) {
                        PreRedex::NonWfDecl {
                            dvs: ds[..i].to_vec(),
                            decl: d.clone(),
                            ds: ds[i + 1..].to_vec(),
                            body: (**body).clone(),
                            span: cur.span,
                        }
                    } else {
                        frames.push(Frame::Decl {
                            dvs: ds[..i].to_vec(),
                            ty: d.ty.clone(),
                            name: d.name.clone(),
                            decl_span: d.span,
                            ds: ds[i + 1..].to_vec(),
                            body: (**body).clone(),
                            span: cur.span,
                        });
                        cur = &d.init;
                        continue;
                    }
                }
                None if is_done(body) => {
                    if frames.is_empty() {
                        return Decomposition::Value;
                    }
                    return Decomposition::Stuck(format!("no redex in {}", pretty_print(cur)));
                }
                None => {
                    frames.push(Frame::Body { dvs: ds.clone(), span: cur.span });
                    cur = body;
                    continue;
                }
            },
            _ => return Decomposition::Stuck(format!("no redex in {}", pretty_print(cur))),
        };
        let operands_ok = match &redex {
            PreRedex::FieldAccess(v, _) => v.is_value(),
            PreRedex::MethodCall(v, _, vs) => v.is_value() && vs.iter().all(Expr::is_value),
            PreRedex::StaticCall(_, _, vs) => vs.iter().all(Expr::is_value),
            PreRedex::FieldAssign(v, _, u) | PreRedex::Plus(v, u) => v.is_value() && u.is_value(),
            PreRedex::NonWfDecl { .. } => true,
        };
        if !operands_ok {
            return Decomposition::Stuck(format!("operand is not a value in {}", pretty_print(cur)));
        }
        return Decomposition::Split(EvalContext { frames }, redex);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepError {
    Stuck(String),
    UnboundReference(Name),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::Stuck(m) => write!(f, "stuck term: {}", m),
            StepError::UnboundReference(x) => write!(f, "unbound reference {}", x),
        }
    }
}

fn stuck<T>(msg: String) -> Result<T, StepError> {
    Err(StepError::Stuck(msg))
}

/// `typeOf(rv)`.
pub fn type_of(rv: &Expr) -> Option<Type> {
    match &rv.kind {
        ExprKind::New(c, _) => Some(Type::Class(Qualifier::Mut, c.clone())),
        ExprKind::Block(dvs, body) => match &body.kind {
            ExprKind::New(c, _) => Some(Type::Class(Qualifier::Mut, c.clone())),
            ExprKind::Var(x) => dvs.iter().find(|d| &d.name == x).and_then(|d| d.ty.clone()),
            _ => None,
        },
        _ => None,
    }
}

/// `fieldOf(rv, i)`, 0-based.
pub fn field_of(rv: &Expr, i: usize) -> Option<Expr> {
    match &rv.kind {
        ExprKind::New(_, args) => args.get(i).cloned(),
        ExprKind::Block(dvs, body) => {
            let inner = match &body.kind {
                ExprKind::New(_, args) => args.get(i).cloned()?,
                ExprKind::Var(x) => field_of(&dvs.iter().find(|d| &d.name == x)?.init, i)?,
                _ => return None,
            };
            Some(Expr::with_span(ExprKind::Block(dvs.clone(), Box::new(inner)), rv.span))
        }
        _ => None,
    }
}

/// `type(E, v)`.
pub fn context_type(ctx: &EvalContext, v: &Expr) -> Result<Type, StepError> {
    match &v.kind {
        ExprKind::Var(x) => {
            let d = ctx.dec(x).ok_or_else(|| StepError::UnboundReference(x.clone()))?;
            d.ty.clone().ok_or_else(|| StepError::Stuck(format!("{} has no type", x)))
        }
        _ => type_of(v).ok_or_else(|| StepError::Stuck(format!("{} is not a right-value", pretty_print(v)))),
    }
}

/// `get(E, v, i)`.
pub fn field_lookup(ctx: &EvalContext, v: &Expr, i: usize) -> Result<Expr, StepError> {
    let rv = match &v.kind {
        ExprKind::Var(x) => &ctx.dec(x).ok_or_else(|| StepError::UnboundReference(x.clone()))?.init,
        _ => v,
    };
    field_of(rv, i).ok_or_else(|| StepError::Stuck(format!("no field {} in {}", i, pretty_print(rv))))
}

fn field_index(ct: &ClassTable, t: &Type, f: &Name) -> Result<(Name, usize, Type), StepError> {
    let Some(c) = t.class_name() else { return stuck(format!("field {} of an int", f)) };
    let fs = ct.fields(c).ok_or_else(|| StepError::Stuck(format!("unknown class {}", c)))?;
    match fs.iter().position(|d| &d.name == f) {
        Some(i) => Ok((c.clone(), i, fs[i].ty.clone())),
        None => stuck(format!("class {} has no field {}", c, f)),
    }
}

fn var(x: &Name, span: Span) -> Expr {
    Expr::with_span(ExprKind::Var(x.clone()), span)
}

fn block(ds: Vec<Decl>, body: Expr, span: Span) -> Expr {
    Expr::with_span(ExprKind::Block(ds, Box::new(body)), span)
}

/// Performs one reduction step on a normalized term. `Ok(None)` means the
/// term is a value.
pub fn step(e: &Expr, ct: &ClassTable, fresh: &mut Fresh) -> Result<Option<(RuleName, Expr)>, StepError> {
    let (ctx, redex) = match decompose(e) {
        Decomposition::Value => return Ok(None),
        Decomposition::Stuck(m) => return stuck(m),
        Decomposition::Split(c, r) => (c, r),
    };
    let (rule, out) = contract(ctx, redex, ct, fresh)?;
    Ok(Some((rule, normalize_term(&out, ct, fresh))))
}

fn contract(
    ctx: EvalContext,
    redex: PreRedex,
    ct: &ClassTable,
    fresh: &mut Fresh,
) -> Result<(RuleName, Expr), StepError> {
    match redex {
        PreRedex::FieldAccess(v, f) => {
            let t = context_type(&ctx, &v)?;
            let (_, i, _) = field_index(ct, &t, &f)?;
            let got = field_lookup(&ctx, &v, i)?;
            Ok((RuleName::FieldAccess, ctx.plug(freshen(&got, fresh))))
        }
        PreRedex::MethodCall(v, m, vs) => {
            let t = context_type(&ctx, &v)?;
            let Some(c) = t.class_name() else { return stuck(format!("method {} of an int", m)) };
            let md = ct.method(c, &m).ok_or_else(|| StepError::Stuck(format!("no method {}.{}", c, m)))?;
            let Receiver::Qual(q) = md.receiver else { return stuck(format!("{}.{} is static", c, m)) };
            let this = Decl {
                ty: Some(Type::Class(q, c.clone())),
                name: Name::new("this"),
                init: v,
                span: Span::default(),
            };
            Ok((RuleName::Invk, ctx.plug(invoke(Some(this), md, vs, fresh))))
        }
        PreRedex::StaticCall(c, m, vs) => {
            let md = ct.method(&c, &m).ok_or_else(|| StepError::Stuck(format!("no method {}.{}", c, m)))?;
            Ok((RuleName::Invk, ctx.plug(invoke(None, md, vs, fresh))))
        }
        PreRedex::Plus(a, b) => match (&a.kind, &b.kind) {
            (ExprKind::Int(x), ExprKind::Int(y)) => {
                Ok((RuleName::Plus, ctx.plug(Expr::with_span(ExprKind::Int(x.wrapping_add(*y)), a.span))))
            }
            _ => stuck(format!("sum of non-literals {} + {}", pretty_print(&a), pretty_print(&b))),
        },
        PreRedex::FieldAssign(v, f, u) => field_assign(ctx, v, f, u, ct, fresh),
        PreRedex::NonWfDecl { dvs, decl, ds, body, span } => {
            let (rule, e) = eliminate(dvs, decl, ds, body, span)?;
            Ok((rule, ctx.plug(e)))
        }
    }
}

fn invoke(this: Option<Decl>, md: &crate::syntax::MethodDef, vs: Vec<Expr>, fresh: &mut Fresh) -> Expr {
    let mut body = md.body.clone();
    let mut ds = Vec::new();
    if let Some(mut d) = this {
        let x = fresh.name("this");
        body = rename_free(&body, &d.name, &x);
        d.name = x;
        ds.push(d);
    }
    for (p, v) in md.params.iter().zip(vs) {
        let x = fresh.name(p.name.as_str());
        body = rename_free(&body, &p.name, &x);
        ds.push(Decl { ty: Some(p.ty.clone()), name: x, init: v, span: Span::default() });
    }
    let z = fresh.name("z");
    let span = body.span;
    ds.push(Decl { ty: Some(md.ret.clone()), name: z.clone(), init: freshen(&body, fresh), span });
    block(ds, var(&z, span), span)
}

fn field_assign(
    mut ctx: EvalContext,
    v: Expr,
    f: Name,
    u: Expr,
    ct: &ClassTable,
    fresh: &mut Fresh,
) -> Result<(RuleName, Expr), StepError> {
    let span = v.span;
    let ExprKind::Var(x) = &v.kind else {
        let t = type_of(&v)
            .ok_or_else(|| StepError::Stuck(format!("{} is not a right-value", pretty_print(&v))))?;
        let (_, _, ft) = field_index(ct, &t, &f)?;
        let (r, z) = (fresh.name("r"), fresh.name("z"));
        let assign = Expr::with_span(ExprKind::Assign(Box::new(var(&r, span)), f, Box::new(u)), span);
        let e = block(
            alloc::vec![
                Decl { ty: Some(t), name: r, init: v, span },
                Decl { ty: Some(ft), name: z.clone(), init: assign, span },
            ],
            var(&z, span),
            span,
        );
        return Ok((RuleName::FieldAssignProp, ctx.plug(e)));
    };
    let Some(j) = ctx.frames.iter().rposition(|fr| fr.binders().contains(x)) else {
        return Err(StepError::UnboundReference(x.clone()));
    };
    let Some(k) = ctx.frames[j].dvs().iter().position(|d| &d.name == x) else {
        return stuck(format!("{} is assigned before its declaration is evaluated", x));
    };
    let fu = free_vars(&u);
    let inner: BTreeSet<Name> = ctx.frames[j + 1..].iter().flat_map(Frame::binders).collect();
    if fu.is_disjoint(&inner) {
        let d = &ctx.frames[j].dvs()[k];
        let ok_q = d.qualifier().is_some_and(|q| Qualifier::Mut.leq(q));
        let ExprKind::New(c, args) = &d.init.kind else {
            return stuck(format!("{} is not bound to an object state", x));
        };
        if !ok_q {
            return stuck(format!(
                "assignment through {} reference {}",
                d.qualifier().map_or("int", |q| q.keyword()),
                x
            ));
        }
        let (_, i, _) = field_index(ct, &Type::Class(Qualifier::Mut, c.clone()), &f)?;
        let mut args = args.clone();
        let Some(slot) = args.get_mut(i) else { return stuck(format!("arity of {}", c)) };
        *slot = if u.is_atom() { u.clone() } else { freshen(&u, fresh) };
        let init = Expr::with_span(ExprKind::New(c.clone(), args), d.init.span);
        ctx.frames[j].dvs_mut()[k].init = init;
        return Ok((RuleName::FieldAssign, ctx.plug(u)));
    }
    // Innermost frame binding a free variable of `u`; its store moves out.
    let Some(m) = ctx.frames.iter().rposition(|fr| !fr.binders().is_disjoint(&fu)) else { unreachable!() };
    let fr = &ctx.frames[m];
    let local: BTreeSet<Name> = fr.dvs().iter().map(|d| d.name.clone()).collect();
    let xs: BTreeSet<Name> = fu.intersection(&local).cloned().collect();
    if xs.len() < fu.intersection(&fr.binders()).count() {
        return stuck(format!("{} refers to a declaration not yet evaluated", pretty_print(&u)));
    }
    let moved = connected_closure(fr.dvs(), &xs);
    let names: BTreeSet<Name> = moved.iter().map(|d| d.name.clone()).collect();
    let needs: BTreeSet<Name> = moved.iter().flat_map(|d| free_vars(&d.init)).collect();
    if !needs.is_disjoint(&fr.binders().difference(&local).cloned().collect()) {
        return stuck(format!("store for {} depends on unevaluated declarations", pretty_print(&u)));
    }
    ctx.frames[m].dvs_mut().retain(|d| !names.contains(&d.name));
    ctx.frames[m - 1].dvs_mut().extend(moved);
    let assign = Expr::with_span(ExprKind::Assign(Box::new(v), f, Box::new(u)), span);
    Ok((RuleName::FieldAssignMove, ctx.plug(assign)))
}

fn eliminate(
    dvs: Vec<Decl>,
    decl: Decl,
    ds: Vec<Decl>,
    body: Expr,
    span: Span,
) -> Result<(RuleName, Expr), StepError> {
    let rest = |dvs: Vec<Decl>, ds: Vec<Decl>| {
        let mut all = dvs;
        all.extend(ds);
        all
    };
    let q = decl.qualifier();
    if q == Some(Qualifier::Capsule) || decl.init.is_atom() {
        let rule = if q == Some(Qualifier::Capsule) { RuleName::CapsuleElim } else { RuleName::AliasElim };
        let e = substitute(&block(rest(dvs, ds), body, span), &decl.init, &decl.name);
        return Ok((rule, e));
    }
    let ExprKind::Block(inner, v) = &decl.init.kind else {
        return stuck(format!("declaration {} is not well formed", decl.name));
    };
    let q = q.ok_or_else(|| StepError::Stuck(format!("int {} bound to a block", decl.name)))?;
    let (rule, moved, kept): (RuleName, Vec<Decl>, Vec<Decl>) = if Qualifier::Mut.leq(q) {
        (RuleName::MutMove, inner.clone(), Vec::new())
    } else if q == Qualifier::Imm {
        // Largest set of imm declarations not referring to the rest.
        let mut moved: Vec<Decl> =
            inner.iter().filter(|d| d.qualifier() == Some(Qualifier::Imm)).cloned().collect();
        loop {
            let names: BTreeSet<Name> = moved.iter().map(|d| d.name.clone()).collect();
            let kept: BTreeSet<Name> =
                inner.iter().filter(|d| !names.contains(&d.name)).map(|d| d.name.clone()).collect();
            let before = moved.len();
            moved.retain(|d| free_vars(&d.init).is_disjoint(&kept));
            if moved.len() == before {
                break;
            }
        }
        if moved.is_empty() {
            return stuck(format!("imm store of {} cannot be flattened", decl.name));
        }
        let names: BTreeSet<Name> = moved.iter().map(|d| d.name.clone()).collect();
        let kept = inner.iter().filter(|d| !names.contains(&d.name)).cloned().collect();
        (RuleName::ImmMove, moved, kept)
    } else {
        return stuck(format!("declaration {} is not well formed", decl.name));
    };
    let init = block(kept, (**v).clone(), decl.init.span);
    let mut all = dvs;
    all.extend(moved);
    all.push(Decl { init, ..decl });
    all.extend(ds);
    Ok((rule, block(all, body, span)))
}

/// Normalizes every value subterm below the root. The root's own store is
/// kept, so unreferenced declarations stay visible.
pub fn normalize_term(e: &Expr, ct: &ClassTable, fresh: &mut Fresh) -> Expr {
    match &e.kind {
        ExprKind::Block(..) => norm_children(e, ct, fresh),
        _ if e.is_value() => normalize_value_with(e, ct, fresh),
        _ => norm_children(e, ct, fresh),
    }
}

fn norm_sub(e: &Expr, ct: &ClassTable, fresh: &mut Fresh) -> Expr {
    if e.is_value() {
        normalize_value_with(e, ct, fresh)
    } else {
        norm_children(e, ct, fresh)
    }
}

fn norm_children(e: &Expr, ct: &ClassTable, fresh: &mut Fresh) -> Expr {
    let mut go = |x: &Expr| Box::new(norm_sub(x, ct, fresh));
    let kind = match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => return e.clone(),
        ExprKind::Field(r, f) => ExprKind::Field(go(r), f.clone()),
        ExprKind::Call(r, m, args) => {
            let r = go(r);
            ExprKind::Call(r, m.clone(), args.iter().map(|a| *go(a)).collect())
        }
        ExprKind::StaticCall(c, m, args) => {
            ExprKind::StaticCall(c.clone(), m.clone(), args.iter().map(|a| *go(a)).collect())
        }
        ExprKind::New(c, args) => ExprKind::New(c.clone(), args.iter().map(|a| *go(a)).collect()),
        ExprKind::Assign(a, f, b) => {
            let a = go(a);
            ExprKind::Assign(a, f.clone(), go(b))
        }
        ExprKind::Plus(a, b) => {
            let a = go(a);
            ExprKind::Plus(a, go(b))
        }
        ExprKind::Block(ds, body) => {
            let ds = ds.iter().map(|d| Decl { init: *go(&d.init), ..d.clone() }).collect();
            ExprKind::Block(ds, go(body))
        }
    };
    Expr { kind, span: e.span }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub rule: Option<RuleName>,
    pub term: Expr,
}

impl TraceStep {
    pub fn canonical(&self) -> Expr {
        canonical_display(&self.term)
    }
}

/// The initial term followed by one entry per step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReductionTrace {
    pub steps: Vec<TraceStep>,
}

impl ReductionTrace {
    pub fn fuel_used(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<&Expr> {
        self.steps.last().map(|s| &s.term)
    }
}

impl fmt::Display for ReductionTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, s) in self.steps.iter().enumerate() {
            let rule = s.rule.map_or("start", RuleName::as_str);
            writeln!(f, "#{} [{}] {}", n, rule, pretty_print(&s.canonical()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunErrorKind {
    OutOfFuel,
    Step(StepError),
    NotSimplified,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunError {
    pub kind: RunErrorKind,
    pub trace: ReductionTrace,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RunErrorKind::OutOfFuel => write!(f, "out of fuel after {} steps", self.trace.fuel_used()),
            RunErrorKind::Step(e) => write!(f, "{} after {} steps", e, self.trace.fuel_used()),
            RunErrorKind::NotSimplified => f.write_str("term is not in simplified form"),
        }
    }
}

/// Renames binders apart and normalizes; the result can be stepped.
/// A name supply avoiding `e` and every method body, which invk copies
/// into the term.
pub fn fresh_for(e: &Expr, ct: &ClassTable) -> Fresh {
    let mut fresh = Fresh::avoiding(e);
    for c in ct.iter() {
        for m in &c.methods {
            fresh.skip_past(&m.body);
        }
    }
    fresh
}

pub fn prepare(e: &Expr, ct: &ClassTable) -> (Expr, Fresh) {
    let mut fresh = fresh_for(e, ct);
    let e = rename_apart(e, &mut fresh);
    let e = normalize_term(&e, ct, &mut fresh);
    (e, fresh)
}

pub fn run(e: &Expr, ct: &ClassTable, fuel: usize) -> Result<ReductionTrace, RunError> {
    let mut trace = ReductionTrace::default();
    if !e.is_simplified() {
        return Err(RunError { kind: RunErrorKind::NotSimplified, trace });
    }
    let (mut cur, mut fresh) = prepare(e, ct);
    trace.steps.push(TraceStep { rule: None, term: cur.clone() });
    loop {
        let next = match step(&cur, ct, &mut fresh) {
            Ok(next) => next,
            Err(err) => return Err(RunError { kind: RunErrorKind::Step(err), trace }),
        };
        let Some((rule, next)) = next else { return Ok(trace) };
        if trace.fuel_used() == fuel {
            return Err(RunError { kind: RunErrorKind::OutOfFuel, trace });
        }
        trace.steps.push(TraceStep { rule: Some(rule), term: next.clone() });
        cur = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::alpha_equiv;
    use crate::parser::{parse, parse_expr};

    const B: &str = "class B { mut B f; }";

    fn prog(src: &str) -> (Expr, ClassTable) {
        let p = parse(src).unwrap();
        (p.main, p.classes)
    }

    #[test]
    fn body_assignment_is_the_redex() {
        let (e, _) = prog(&format!("{B} {{mut B x = new B(y); mut B y = new B(x); x.f = x}}"));
        match decompose(&e) {
            Decomposition::Split(ctx, PreRedex::FieldAssign(..)) => {
                assert!(matches!(ctx.frames.as_slice(), [Frame::Body { .. }]));
            }
            d => panic!("{:?}", d),
        }
    }

    #[test]
    fn object_state_is_a_value() {
        let (e, _) = prog(&format!("{B} new B(z)"));
        assert_eq!(decompose(&e), Decomposition::Value);
    }

    #[test]
    fn first_reduction_example() {
        let (e, ct) = prog(&format!("{B} {{mut B x = new B(y); mut B y = new B(x); x.f = x}}"));
        let t = run(&e, &ct, 10).unwrap();
        assert_eq!(t.fuel_used(), 1);
        assert_eq!(t.steps[1].rule, Some(RuleName::FieldAssign));
        let want = parse_expr("{mut B x = new B(x); mut B y = new B(x); x}", &ct).unwrap();
        assert!(alpha_equiv(t.last().unwrap(), &want), "{}", t);
    }

    #[test]
    fn zero_fuel_runs_out() {
        let (e, ct) = prog(&format!("{B} {{mut B x = new B(x); x.f = x}}"));
        let err = run(&e, &ct, 0).unwrap_err();
        assert_eq!(err.kind, RunErrorKind::OutOfFuel);
    }

    #[test]
    fn field_of_copies_local_store() {
        let (v, _) = prog(
            "class C { mut C f1; mut D f2; imm C f3; } class D { int n; }
             {mut C x = new C(x, y, z); mut D y = new D(0); new C(x, y, z)}",
        );
        let ct = parse("class C { mut C f1; mut D f2; imm C f3; } class D { int n; } {0}").unwrap().classes;
        let one = parse_expr("{mut C x = new C(x, y, z); mut D y = new D(0); x}", &ct).unwrap();
        let two = parse_expr("{mut D y = new D(0); y}", &ct).unwrap();
        assert!(alpha_equiv(&field_of(&v, 0).unwrap(), &one));
        let mut fresh = Fresh::avoiding(&v);
        let n2 = normalize_value_with(&field_of(&v, 1).unwrap(), &ct, &mut fresh);
        assert!(alpha_equiv(&n2, &two));
        let n3 = normalize_value_with(&field_of(&v, 2).unwrap(), &ct, &mut fresh);
        assert_eq!(n3, Expr::var("z"));
    }

    #[test]
    fn dec_prefers_the_nearest_frame() {
        let outer =
            Decl::new(Type::class(Qualifier::Mut, "B"), "x", Expr::new_obj("B", alloc::vec![Expr::var("o")]));
        let inner =
            Decl::new(Type::class(Qualifier::Mut, "B"), "x", Expr::new_obj("B", alloc::vec![Expr::var("i")]));
        let ctx = EvalContext {
            frames: alloc::vec![
                Frame::Body { dvs: alloc::vec![outer], span: Span::default() },
                Frame::Body { dvs: alloc::vec![inner.clone()], span: Span::default() },
            ],
        };
        assert_eq!(ctx.dec(&Name::new("x")), Some(&inner));
        assert_eq!(ctx.dec(&Name::new("q")), None);
    }
}
