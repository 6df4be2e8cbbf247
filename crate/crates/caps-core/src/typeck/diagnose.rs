//! Best-effort explanations for failed judgments. The search follows the
//! default group choice and reports the innermost premise that fails.

use alloc::format;
use alloc::string::String;

use super::context::TypeContext;
use super::infer::{bit_of, block_body_context, has, type_of, Checker, CAPSULE, IMM, INT, MUT, READ};
use super::{Rule, TypeError, TypeErrorKind};
use crate::syntax::{Expr, ExprKind, Name, Qualifier, Span, Type};

struct Diag {
    rule: Rule,
    var: Option<Name>,
    span: Span,
    msg: String,
}

impl Diag {
    fn prefixed(mut self, p: &str) -> Diag {
        self.msg = format!("{}{}", p, self.msg);
        self
    }
}

impl Checker<'_> {
    pub(crate) fn diagnose(&mut self, ctx: &TypeContext, e: &Expr, b: usize) -> TypeError {
        match self.diag(ctx, e, b) {
            Ok(d) => TypeError {
                kind: TypeErrorKind::IllTyped,
                span: d.span,
                rule: Some(d.rule),
                blocking: d.var,
                explanation: d.msg,
            },
            Err(err) => err,
        }
    }

    fn want(&mut self, ctx: &TypeContext, e: &Expr, b: usize) -> Result<Type, TypeError> {
        let en = self.entry_full(ctx, e)?;
        Ok(type_of(&en.shape, b))
    }

    /// First premise among `(expr, bit)` pairs that is not derivable.
    fn first_failing<'e>(
        &mut self,
        ctx: &TypeContext,
        pairs: impl IntoIterator<Item = (&'e Expr, usize)>,
    ) -> Result<Option<(&'e Expr, usize)>, TypeError> {
        for (x, b) in pairs {
            if !self.derivable_in(ctx, x, b)? {
                return Ok(Some((x, b)));
            }
        }
        Ok(None)
    }

    fn diag(&mut self, ctx: &TypeContext, e: &Expr, b: usize) -> Result<Diag, TypeError> {
        let want = self.want(ctx, e, b)?;
        let mismatch = |rule: Rule, have: String| Diag {
            rule,
            var: None,
            span: e.span,
            msg: format!("{} has type {}, needs {}", crate::parser::pretty_print(e), have, want),
        };
        if let ExprKind::Var(x) = &e.kind {
            let msg = if ctx.restricted.contains(x) {
                format!("{} is restricted", x)
            } else if let Some(g) = ctx.in_group(x).filter(|_| ctx.is_mut(x)) {
                let members: alloc::vec::Vec<&str> = ctx.groups[g].iter().map(Name::as_str).collect();
                format!("{} is lent (group {{{}}}), needs {}", x, members.join(","), want)
            } else {
                let t = ctx.gamma.get(x).map(|t| format!("{}", t)).unwrap_or_default();
                format!("{} has type {}, needs {}", x, t, want)
            };
            return Ok(Diag { rule: Rule::Var, var: Some(x.clone()), span: e.span, msg });
        }
        if b == CAPSULE {
            let cc = ctx.recover_capsule();
            if !self.derivable_in(&cc, e, MUT)? {
                return Ok(self.diag(&cc, e, MUT)?.prefixed("t-capsule: "));
            }
        }
        if b == IMM {
            let ic = ctx.recover_imm();
            if !self.derivable_in(&ic, e, READ)? {
                return Ok(self.diag(&ic, e, READ)?.prefixed("t-imm: "));
            }
        }
        match &e.kind {
            ExprKind::Var(_) => unreachable!(),
            ExprKind::Int(_) => Ok(mismatch(Rule::Int, String::from("int"))),
            ExprKind::Plus(l, r) => match self.first_failing(ctx, [(&**l, INT), (&**r, INT)])? {
                Some((x, xb)) => self.diag(ctx, x, xb),
                None => Ok(mismatch(Rule::Plus, String::from("int"))),
            },
            ExprKind::Field(r, f) => {
                let rc = self.entry_full(ctx, r)?;
                let Some(c) = rc.shape.clone() else {
                    return Ok(mismatch(Rule::FieldAccess, String::from("?")));
                };
                let fd = self.ct.fields(&c).and_then(|fs| fs.iter().find(|d| &d.name == f)).cloned();
                match fd.map(|d| d.ty) {
                    Some(Type::Class(Qualifier::Mut, _)) if b != INT && !has(rc.mask, b) => {
                        Ok(self.diag(ctx, r, b)?.prefixed("field receiver: "))
                    }
                    Some(t) if rc.mask == 0 => {
                        Ok(self.diag(ctx, r, READ)?.prefixed(&format!("field {} of type {}: ", f, t)))
                    }
                    Some(t) => Ok(mismatch(Rule::FieldAccess, format!("{}", t))),
                    None => Ok(mismatch(Rule::FieldAccess, String::from("?"))),
                }
            }
            ExprKind::Assign(r, f, rhs) => {
                let rc = self.entry_full(ctx, r)?;
                let c = rc.shape.clone().unwrap_or_else(|| Name::new("?"));
                let ft = self
                    .ct
                    .fields(&c)
                    .and_then(|fs| fs.iter().find(|d| &d.name == f))
                    .map(|d| d.ty.clone())
                    .unwrap_or(Type::Int);
                match self.first_failing(ctx, [(&**r, MUT), (&**rhs, bit_of(&ft))])? {
                    Some((x, xb)) if core::ptr::eq(x, &**r) => {
                        Ok(self.diag(ctx, x, xb)?.prefixed("assignment receiver: "))
                    }
                    Some((x, xb)) => Ok(self.diag(ctx, x, xb)?.prefixed("assigned value: ")),
                    None => Ok(mismatch(Rule::FieldAssign, format!("{}", ft))),
                }
            }
            ExprKind::Call(r, m, args) => {
                let rc = self.entry_full(ctx, r)?;
                let c = rc.shape.clone().unwrap_or_else(|| Name::new("?"));
                let Some(md) = self.ct.method(&c, m).cloned() else {
                    return Ok(mismatch(Rule::MethCall, String::from("?")));
                };
                let rb = match md.receiver {
                    crate::syntax::Receiver::Qual(q) => q as usize,
                    crate::syntax::Receiver::Static => READ,
                };
                let pairs = core::iter::once((&**r, rb))
                    .chain(args.iter().zip(&md.params).map(|(a, p)| (a, bit_of(&p.ty))));
                match self.first_failing(ctx, pairs)? {
                    Some((x, xb)) => Ok(self.diag(ctx, x, xb)?.prefixed(&format!("call of {}: ", m))),
                    None => Ok(mismatch(Rule::MethCall, format!("{}", md.ret))),
                }
            }
            ExprKind::StaticCall(c, m, args) => {
                let Some(md) = self.ct.method(c, m).cloned() else {
                    return Ok(mismatch(Rule::StaticCall, String::from("?")));
                };
                match self.first_failing(ctx, args.iter().zip(&md.params).map(|(a, p)| (a, bit_of(&p.ty))))? {
                    Some((x, xb)) => Ok(self.diag(ctx, x, xb)?.prefixed(&format!("call of {}: ", m))),
                    None => Ok(mismatch(Rule::StaticCall, format!("{}", md.ret))),
                }
            }
            ExprKind::New(c, args) => {
                let fts: alloc::vec::Vec<Type> =
                    self.ct.fields(c).unwrap_or(&[]).iter().map(|f| f.ty.clone()).collect();
                match self.first_failing(ctx, args.iter().zip(&fts).map(|(a, t)| (a, bit_of(t))))? {
                    Some((x, xb)) => Ok(self.diag(ctx, x, xb)?.prefixed(&format!("argument of new {}: ", c))),
                    None => Ok(mismatch(Rule::New, format!("mut {}", c))),
                }
            }
            ExprKind::Block(ds, body) => {
                let Some(bctx) = block_body_context(ctx, ds, &[]) else {
                    return Ok(mismatch(Rule::Block, String::from("?")));
                };
                for d in ds {
                    let Some(t) = d.ty.as_ref() else { continue };
                    let tb = bit_of(&super::infer::lent_to_mut(t));
                    if !self.derivable_in(&bctx, &d.init, tb)? {
                        return Ok(self
                            .diag(&bctx, &d.init, tb)?
                            .prefixed(&format!("declaration {}: ", d.name)));
                    }
                }
                if !self.derivable_in(&bctx, body, b)? {
                    return Ok(self.diag(&bctx, body, b)?.prefixed("block body: "));
                }
                Ok(Diag {
                    rule: Rule::Block,
                    var: None,
                    span: e.span,
                    msg: format!("no grouping of the block locals gives {}", want),
                })
            }
        }
    }
}
