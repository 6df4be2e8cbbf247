//! Typechecking with capsule and immutability recovery.
//!
//! The checker computes, for every subterm and context, the up-closed set
//! of derivable types. Non-structural rules are solved as a least fixpoint
//! over the finitely many contexts reachable by swapping, recovering and
//! unrestricting; lent-group choices for block locals are searched per
//! connected component. A derivation tree is rebuilt from the recorded
//! justifications and can be re-checked by [`replay`].

mod context;
mod diagnose;
mod elaborate;
mod infer;
mod replay;

pub use context::{wf_context, TypeContext};
pub use elaborate::{class_of, elaborate_expr, elaborate_program};
pub use infer::{Checker, Config};
pub use replay::{replay, ReplayError};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{Expr, Name, Program, Qualifier, Receiver, Span, Type};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Rule {
    Var,
    Int,
    FieldAccess,
    MethCall,
    StaticCall,
    FieldAssign,
    New,
    Plus,
    Block,
    Capsule,
    Imm,
    Swap,
    Unrst,
    Sub,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Var => "t-var",
            Rule::Int => "t-int",
            Rule::FieldAccess => "t-field-access",
            Rule::MethCall => "t-meth-call",
            Rule::StaticCall => "t-static-call",
            Rule::FieldAssign => "t-field-assign",
            Rule::New => "t-new",
            Rule::Plus => "t-plus",
            Rule::Block => "t-block",
            Rule::Capsule => "t-capsule",
            Rule::Imm => "t-imm",
            Rule::Swap => "t-swap",
            Rule::Unrst => "t-unrst",
            Rule::Sub => "t-sub",
        }
    }

    pub fn from_name(s: &str) -> Option<Rule> {
        const ALL: [Rule; 14] = [
            Rule::Var,
            Rule::Int,
            Rule::FieldAccess,
            Rule::MethCall,
            Rule::StaticCall,
            Rule::FieldAssign,
            Rule::New,
            Rule::Plus,
            Rule::Block,
            Rule::Capsule,
            Rule::Imm,
            Rule::Swap,
            Rule::Unrst,
            Rule::Sub,
        ];
        ALL.into_iter().find(|r| r.name() == s)
    }

    pub fn is_structural(self) -> bool {
        !matches!(self, Rule::Capsule | Rule::Imm | Rule::Swap | Rule::Unrst | Rule::Sub)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One node of a derivation tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub rule: Rule,
    pub context: TypeContext,
    pub expr: Expr,
    pub ty: Type,
    pub premises: Vec<Derivation>,
}

impl Derivation {
    /// Rule names in pre-order.
    pub fn rule_path(&self) -> Vec<Rule> {
        let mut out = Vec::new();
        self.walk(&mut |d| out.push(d.rule));
        out
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Derivation)) {
        f(self);
        for p in &self.premises {
            p.walk(f);
        }
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Judgment {
    pub context: TypeContext,
    pub expr: Expr,
    pub result: Type,
    pub rule_path: Vec<Rule>,
    pub derivation: Derivation,
}

impl Judgment {
    pub fn uses(&self, r: Rule) -> bool {
        self.rule_path.contains(&r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeErrorKind {
    IllTyped,
    SearchExhausted,
    MalformedContext,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub span: Span,
    /// Rule at which the failure was located.
    pub rule: Option<Rule>,
    /// Variable or group member responsible, when there is one.
    pub blocking: Option<Name>,
    pub explanation: String,
}

impl TypeError {
    pub(crate) fn ill(span: Span, rule: Option<Rule>, explanation: String) -> TypeError {
        TypeError { kind: TypeErrorKind::IllTyped, span, rule, blocking: None, explanation }
    }

    pub(crate) fn exhausted(span: Span, explanation: String) -> TypeError {
        TypeError { kind: TypeErrorKind::SearchExhausted, span, rule: None, blocking: None, explanation }
    }
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            TypeErrorKind::IllTyped => "ill-typed",
            TypeErrorKind::SearchExhausted => "search exhausted",
            TypeErrorKind::MalformedContext => "malformed context",
        };
        write!(f, "{}:{}: {}", self.span.line, self.span.col, kind)?;
        if let Some(r) = self.rule {
            write!(f, " [{}]", r)?;
        }
        write!(f, ": {}", self.explanation)
    }
}

/// Checks `e` in `ctx`. With a goal, the result is the goal itself when it
/// is derivable; without one, it is the least derivable type, preferring a
/// structurally derived one when several are minimal.
pub fn typecheck_expr(
    ct: &crate::syntax::ClassTable,
    ctx: &TypeContext,
    e: &Expr,
    goal: Option<&Type>,
) -> Result<Judgment, TypeError> {
    Checker::new(ct, Config::default()).judge(ctx, e, goal)
}

/// Block entry point; the same as [`typecheck_expr`] on the block.
pub fn typecheck_block(
    ct: &crate::syntax::ClassTable,
    ctx: &TypeContext,
    block: &Expr,
    goal: Option<&Type>,
) -> Result<Judgment, TypeError> {
    typecheck_expr(ct, ctx, block, goal)
}

/// Context for a method body: `this` and the parameters, with `lent`
/// ones stored as `mut` and each placed in its own group.
pub fn method_context(c: &Name, m: &crate::syntax::MethodDef) -> TypeContext {
    let mut ctx = TypeContext::empty();
    let mut add = |x: &Name, t: &Type| match t {
        Type::Class(Qualifier::Lent, d) => {
            ctx.gamma.insert(x.clone(), Type::Class(Qualifier::Mut, d.clone()));
            ctx.groups.push(core::iter::once(x.clone()).collect());
        }
        t => {
            ctx.gamma.insert(x.clone(), t.clone());
        }
    };
    if let Receiver::Qual(q) = m.receiver {
        add(&Name::new("this"), &Type::Class(q, c.clone()));
    }
    for p in &m.params {
        add(&p.name, &p.ty);
    }
    ctx
}

pub fn typecheck_method(ct: &crate::syntax::ClassTable, c: &Name, m: &Name) -> Result<Judgment, TypeError> {
    let md = ct
        .method(c, m)
        .ok_or_else(|| TypeError::ill(Span::default(), None, alloc::format!("no method {}.{}", c, m)))?;
    let ctx = method_context(c, md);
    let mut body = md.body.clone();
    elaborate_expr(ct, &ctx.gamma, &mut body)?;
    Checker::new(ct, Config::default()).judge(&ctx, &body, Some(&md.ret))
}

/// Judgments for every method and for the main expression.
#[derive(Clone, Debug)]
pub struct ProgramTyping {
    pub program: Program,
    pub methods: Vec<((Name, Name), Judgment)>,
    pub main: Judgment,
}

#[derive(Clone, Debug)]
pub struct ProgramErrors {
    pub errors: Vec<(String, TypeError)>,
}

impl fmt::Display for ProgramErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (w, e)) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", w, e)?;
        }
        Ok(())
    }
}

impl ProgramErrors {
    pub fn any_exhausted(&self) -> bool {
        self.errors.iter().any(|(_, e)| e.kind == TypeErrorKind::SearchExhausted)
    }
}

/// Elaborates and typechecks all methods and the main expression, which
/// is checked in the empty context. Errors are collected.
pub fn typecheck_program(p: &Program) -> Result<ProgramTyping, ProgramErrors> {
    typecheck_program_with(p, Config::default())
}

pub fn typecheck_program_with(p: &Program, cfg: Config) -> Result<ProgramTyping, ProgramErrors> {
    let mut errors = Vec::new();
    let program = match elaborate_program(p) {
        Ok(q) => q,
        Err((w, e)) => return Err(ProgramErrors { errors: alloc::vec![(w, e)] }),
    };
    let mut methods = Vec::new();
    for c in program.classes.iter() {
        for m in &c.methods {
            let ctx = method_context(&c.name, m);
            match Checker::new(&program.classes, cfg).judge(&ctx, &m.body, Some(&m.ret)) {
                Ok(j) => methods.push(((c.name.clone(), m.name.clone()), j)),
                Err(e) => errors.push((alloc::format!("{}.{}", c.name, m.name), e)),
            }
        }
    }
    let main = Checker::new(&program.classes, cfg).judge(&TypeContext::empty(), &program.main, None);
    match main {
        Ok(j) if errors.is_empty() => Ok(ProgramTyping { program, methods, main: j }),
        Ok(_) => Err(ProgramErrors { errors }),
        Err(e) => {
            errors.push((String::from("main"), e));
            Err(ProgramErrors { errors })
        }
    }
}

/// Methods keyed by class and name, for quick lookups in callers.
pub type MethodJudgments = BTreeMap<(Name, Name), Judgment>;
