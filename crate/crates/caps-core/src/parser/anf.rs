//! Hoists compound operands into fresh locals so that every operand of a
//! field access, call, assignment, constructor or sum is a reference or a
//! literal. The result is in simplified form. Each hoisted local gets the
//! type its position needs in the typing derivation.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{ClassTable, Decl, Expr, ExprKind, Name, Program};
use crate::typeck::{self, Derivation, TypeContext, TypeError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnfError {
    Type(TypeError),
    /// The derivation does not follow the shape of the term.
    Shape,
}

impl fmt::Display for AnfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnfError::Type(e) => write!(f, "cannot translate ill-typed term: {}", e),
            AnfError::Shape => f.write_str("derivation does not match the term"),
        }
    }
}

impl From<TypeError> for AnfError {
    fn from(e: TypeError) -> Self {
        AnfError::Type(e)
    }
}

struct Fresh(usize);

impl Fresh {
    fn next(&mut self) -> Name {
        self.0 += 1;
        Name::from(format!("a#{}", self.0))
    }
}

/// Translates a closed, elaborated term.
pub fn anf_translate(e: &Expr, ct: &ClassTable) -> Result<Expr, AnfError> {
    anf_in(e, ct, &TypeContext::empty())
}

pub fn anf_in(e: &Expr, ct: &ClassTable, ctx: &TypeContext) -> Result<Expr, AnfError> {
    if is_anf(e) {
        return Ok(e.clone());
    }
    let j = typeck::typecheck_expr(ct, ctx, e, None)?;
    tr(&j.derivation, &mut Fresh(0))
}

/// Elaborates, then translates every method body and the main expression.
pub fn anf_program(p: &Program) -> Result<Program, AnfError> {
    let mut q = typeck::elaborate_program(p).map_err(|(_, e)| AnfError::Type(e))?;
    let bodies: Vec<(Name, Name, Expr, TypeContext, crate::syntax::Type)> = q
        .classes
        .iter()
        .flat_map(|c| {
            c.methods.iter().map(|m| {
                (
                    c.name.clone(),
                    m.name.clone(),
                    m.body.clone(),
                    typeck::method_context(&c.name, m),
                    m.ret.clone(),
                )
            })
        })
        .collect();
    for (c, m, body, ctx, ret) in bodies {
        if is_anf(&body) {
            continue;
        }
        let j = typeck::typecheck_expr(&q.classes, &ctx, &body, Some(&ret))?;
        let nb = tr(&j.derivation, &mut Fresh(0))?;
        q.classes.set_method_body(&c, &m, nb);
    }
    q.main = anf_translate(&q.main, &q.classes)?;
    Ok(q)
}

/// Operands are atoms everywhere and declarations are typed.
pub fn is_anf(e: &Expr) -> bool {
    let atoms = |xs: &[Expr]| xs.iter().all(Expr::is_atom);
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => true,
        ExprKind::Field(r, _) => r.is_atom(),
        ExprKind::Call(r, _, args) => r.is_atom() && atoms(args),
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => atoms(args),
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => a.is_atom() && b.is_atom(),
        ExprKind::Block(ds, body) => ds.iter().all(|d| d.ty.is_some() && is_anf(&d.init)) && is_anf(body),
    }
}

fn structural(d: &Derivation) -> &Derivation {
    let mut n = d;
    while !n.rule.is_structural() {
        match n.premises.first() {
            Some(p) => n = p,
            None => break,
        }
    }
    n
}

fn operand(p: &Derivation, hoist: &mut Vec<Decl>, fresh: &mut Fresh) -> Result<Expr, AnfError> {
    let s = tr(p, fresh)?;
    if s.is_atom() {
        return Ok(s);
    }
    let z = fresh.next();
    hoist.push(Decl { ty: Some(p.ty.clone()), name: z.clone(), init: s, span: p.expr.span });
    Ok(Expr::with_span(ExprKind::Var(z), p.expr.span))
}

fn tr(d: &Derivation, fresh: &mut Fresh) -> Result<Expr, AnfError> {
    let n = structural(d);
    let ps = &n.premises;
    let span = n.expr.span;
    let mut hoist = Vec::new();
    let kind = match &n.expr.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => return Ok(n.expr.clone()),
        ExprKind::Field(_, f) => {
            let r = operand(ps.first().ok_or(AnfError::Shape)?, &mut hoist, fresh)?;
            ExprKind::Field(Box::new(r), f.clone())
        }
        ExprKind::Assign(_, f, _) => {
            if ps.len() != 2 {
                return Err(AnfError::Shape);
            }
            let r = operand(&ps[0], &mut hoist, fresh)?;
            let v = operand(&ps[1], &mut hoist, fresh)?;
            ExprKind::Assign(Box::new(r), f.clone(), Box::new(v))
        }
        ExprKind::Plus(..) => {
            if ps.len() != 2 {
                return Err(AnfError::Shape);
            }
            let a = operand(&ps[0], &mut hoist, fresh)?;
            let b = operand(&ps[1], &mut hoist, fresh)?;
            ExprKind::Plus(Box::new(a), Box::new(b))
        }
        ExprKind::Call(_, m, _) => {
            let (r, args) = ps.split_first().ok_or(AnfError::Shape)?;
            let r = operand(r, &mut hoist, fresh)?;
            let args = args.iter().map(|a| operand(a, &mut hoist, fresh)).collect::<Result<_, _>>()?;
            ExprKind::Call(Box::new(r), m.clone(), args)
        }
        ExprKind::StaticCall(c, m, _) => {
            let args = ps.iter().map(|a| operand(a, &mut hoist, fresh)).collect::<Result<_, _>>()?;
            ExprKind::StaticCall(c.clone(), m.clone(), args)
        }
        ExprKind::New(c, _) => {
            let args = ps.iter().map(|a| operand(a, &mut hoist, fresh)).collect::<Result<_, _>>()?;
            ExprKind::New(c.clone(), args)
        }
        ExprKind::Block(ds, _) => {
            if ps.len() != ds.len() + 1 {
                return Err(AnfError::Shape);
            }
            let mut nds = Vec::new();
            for (dd, p) in ds.iter().zip(ps) {
                nds.push(Decl {
                    ty: dd.ty.clone(),
                    name: dd.name.clone(),
                    init: tr(p, fresh)?,
                    span: dd.span,
                });
            }
            let body = tr(&ps[ds.len()], fresh)?;
            return Ok(Expr::with_span(ExprKind::Block(nds, Box::new(body)), span));
        }
    };
    let e = Expr::with_span(kind, span);
    if hoist.is_empty() {
        Ok(e)
    } else {
        Ok(Expr::with_span(ExprKind::Block(hoist, Box::new(e)), span))
    }
}
