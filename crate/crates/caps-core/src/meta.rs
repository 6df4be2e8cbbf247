//! Runtime checkers for the soundness theorems, run over reduction traces.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::congruence::{canonical, normalize_value, wf_dv, wf_rightvalue, wf_store, CanonicalTerm};
use crate::parser::pretty_print;
use crate::reduce::{decompose, fresh_for, step, type_of, Decomposition, ReductionTrace};
use crate::syntax::{free_vars, ClassTable, Decl, Expr, ExprKind, Name, Qualifier, Type};
use crate::typeck::{typecheck_expr, TypeContext, TypeErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Theorem {
    SubjectReduction,
    Progress,
    CanonicalForms,
    Capsule,
    Immutable,
}

impl Theorem {
    pub fn as_str(self) -> &'static str {
        match self {
            Theorem::SubjectReduction => "subject-reduction",
            Theorem::Progress => "progress",
            Theorem::CanonicalForms => "canonical-forms",
            Theorem::Capsule => "capsule",
            Theorem::Immutable => "immutable",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaViolation {
    pub theorem: Theorem,
    pub step: usize,
    pub binder: Option<Name>,
    pub message: String,
    pub term: String,
}

impl fmt::Display for MetaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at step {}", self.theorem, self.step)?;
        if let Some(x) = &self.binder {
            write!(f, " ({})", x)?;
        }
        write!(f, ": {}", self.message)
    }
}

fn violation(
    theorem: Theorem,
    step: usize,
    binder: Option<&Name>,
    message: String,
    term: &Expr,
) -> MetaViolation {
    MetaViolation { theorem, step, binder: binder.cloned(), message, term: pretty_print(term) }
}

/// Every trace term typechecks at the type of the initial term.
pub fn check_subject_reduction(trace: &ReductionTrace, ct: &ClassTable, ty: &Type) -> Vec<MetaViolation> {
    let mut out = Vec::new();
    for (n, s) in trace.steps.iter().enumerate() {
        match typecheck_expr(ct, &TypeContext::empty(), &s.term, Some(ty)) {
            Ok(_) => {}
            Err(e) => {
                let why = if e.kind == TypeErrorKind::SearchExhausted {
                    format!("search exhausted while checking {}", ty)
                } else {
                    format!("not typable as {}: {}", ty, e.explanation)
                };
                out.push(violation(Theorem::SubjectReduction, n, None, why, &s.term));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// A well-formed value.
    Done,
    Steps,
    Stuck(String),
    IllFormedValue(String),
}

pub fn check_progress(e: &Expr, ct: &ClassTable) -> Verdict {
    match decompose(e) {
        Decomposition::Value => {
            let v = normalize_value(e, ct);
            match &v.kind {
                ExprKind::Var(_) | ExprKind::Int(_) => Verdict::Done,
                ExprKind::Block(ds, _) if wf_rightvalue(&v) && wf_store(ds) => Verdict::Done,
                ExprKind::New(..) if wf_rightvalue(&v) => Verdict::Done,
                _ => Verdict::IllFormedValue(format!("{} is not a well-formed value", pretty_print(&v))),
            }
        }
        _ => match step(e, ct, &mut fresh_for(e, ct)) {
            Ok(_) => Verdict::Steps,
            Err(err) => Verdict::Stuck(format!("{}", err)),
        },
    }
}

pub fn check_progress_trace(trace: &ReductionTrace, ct: &ClassTable) -> Vec<MetaViolation> {
    let mut out = Vec::new();
    for (n, s) in trace.steps.iter().enumerate() {
        match check_progress(&s.term, ct) {
            Verdict::Done | Verdict::Steps => {}
            Verdict::Stuck(m) | Verdict::IllFormedValue(m) => {
                out.push(violation(Theorem::Progress, n, None, m, &s.term));
            }
        }
    }
    out
}

/// A declaration together with every declaration in scope at it.
struct Site<'a> {
    decl: &'a Decl,
    scope: Vec<&'a Decl>,
}

fn sites(e: &Expr) -> Vec<Site<'_>> {
    fn walk<'a>(e: &'a Expr, scope: &mut Vec<&'a Decl>, out: &mut Vec<Site<'a>>) {
        match &e.kind {
            ExprKind::Var(_) | ExprKind::Int(_) => {}
            ExprKind::Field(r, _) => walk(r, scope, out),
            ExprKind::Call(r, _, args) => {
                walk(r, scope, out);
                args.iter().for_each(|a| walk(a, scope, out));
            }
            ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
                args.iter().for_each(|a| walk(a, scope, out))
            }
            ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
                walk(a, scope, out);
                walk(b, scope, out);
            }
            ExprKind::Block(ds, body) => {
                let mark = scope.len();
                scope.extend(ds.iter());
                for d in ds {
                    out.push(Site { decl: d, scope: scope.clone() });
                    walk(&d.init, scope, out);
                }
                walk(body, scope, out);
                scope.truncate(mark);
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &mut Vec::new(), &mut out);
    out
}

fn lookup<'a>(scope: &[&'a Decl], x: &Name) -> Option<&'a Decl> {
    scope.iter().rev().find(|d| &d.name == x).copied()
}

/// Free variables of `rv` not declared `imm` or `capsule` in scope. Int
/// variables are skipped.
fn not_imm_closed(rv: &Expr, scope: &[&Decl]) -> Vec<Name> {
    free_vars(rv)
        .into_iter()
        .filter(|y| match lookup(scope, y) {
            None => true,
            Some(d) => match d.ty {
                Some(Type::Int) => false,
                Some(Type::Class(q, _)) => !q.leq(Qualifier::Imm),
                None => true,
            },
        })
        .collect()
}

fn names(xs: &[Name]) -> String {
    xs.iter().map(Name::as_str).collect::<Vec<_>>().join(", ")
}

/// `mut` or `capsule`, the types a fresh object state can have.
fn is_mut_type(t: Option<Type>) -> bool {
    t.and_then(|t| t.qualifier()).is_some_and(|q| q.leq(Qualifier::Mut))
}

pub fn check_capsule_theorem(trace: &ReductionTrace) -> Vec<MetaViolation> {
    let mut out = Vec::new();
    for (n, s) in trace.steps.iter().enumerate() {
        for site in sites(&s.term) {
            let d = site.decl;
            if d.qualifier() != Some(Qualifier::Capsule) || !d.init.is_right_value() {
                continue;
            }
            if !is_mut_type(type_of(&d.init)) {
                let msg = format!("right-value {} is not mut", pretty_print(&d.init));
                out.push(violation(Theorem::Capsule, n, Some(&d.name), msg, &s.term));
            }
            let bad = not_imm_closed(&d.init, &site.scope);
            if !bad.is_empty() {
                let msg = format!("right-value reaches non-imm references {}", names(&bad));
                out.push(violation(Theorem::Capsule, n, Some(&d.name), msg, &s.term));
            }
        }
    }
    out
}

/// Right-value of an `imm` binder at each step, with every store entry it
/// reaches, flattened and in canonical form. `None` until the binder and
/// everything it reaches are well-formed store entries, and once it is
/// out of scope.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TracedDeclaration {
    pub binder: Name,
    pub qualifier: Option<Qualifier>,
    pub snapshots: Vec<Option<CanonicalTerm>>,
}

fn flatten(d: &Decl, out: &mut Vec<Decl>) {
    match &d.init.kind {
        ExprKind::Block(dvs, v) => {
            for dv in dvs {
                flatten(dv, out);
            }
            out.push(Decl { init: (**v).clone(), ..d.clone() });
        }
        _ => out.push(d.clone()),
    }
}

fn snapshot(site: &Site<'_>) -> Option<CanonicalTerm> {
    let d = site.decl;
    if !wf_dv(d) {
        return None;
    }
    let mut seen = BTreeSet::from([d.name.clone()]);
    let mut todo: Vec<Name> = free_vars(&d.init).into_iter().collect();
    let mut reached = alloc::vec![d.clone()];
    while let Some(y) = todo.pop() {
        if !seen.insert(y.clone()) {
            continue;
        }
        let e = lookup(&site.scope, &y)?;
        if !wf_dv(e) {
            return None;
        }
        todo.extend(free_vars(&e.init));
        reached.push(e.clone());
    }
    let mut flat = Vec::new();
    reached.iter().for_each(|r| flatten(r, &mut flat));
    let var = Expr::with_span(ExprKind::Var(d.name.clone()), d.span);
    Some(canonical(&Expr::new(ExprKind::Block(flat, alloc::boxed::Box::new(var)))))
}

pub fn trace_declarations(trace: &ReductionTrace, q: Qualifier) -> Vec<TracedDeclaration> {
    let mut out: Vec<TracedDeclaration> = Vec::new();
    let len = trace.steps.len();
    for (n, s) in trace.steps.iter().enumerate() {
        for site in sites(&s.term) {
            if site.decl.qualifier() != Some(q) {
                continue;
            }
            let i = match out.iter().position(|t| t.binder == site.decl.name) {
                Some(i) => i,
                None => {
                    out.push(TracedDeclaration {
                        binder: site.decl.name.clone(),
                        qualifier: Some(q),
                        snapshots: alloc::vec![None; len],
                    });
                    out.len() - 1
                }
            };
            out[i].snapshots[n] = snapshot(&site);
        }
    }
    out
}

pub fn check_imm_theorem(trace: &ReductionTrace) -> Vec<MetaViolation> {
    let mut out = Vec::new();
    for t in trace_declarations(trace, Qualifier::Imm) {
        let mut first: Option<(usize, &CanonicalTerm)> = None;
        for (n, snap) in t.snapshots.iter().enumerate() {
            let Some(snap) = snap else { continue };
            match first {
                None => first = Some((n, snap)),
                Some((k, rv)) if rv != snap => {
                    let msg = format!(
                        "right-value changed since step {}: {} became {}",
                        k,
                        pretty_print(rv.expr()),
                        pretty_print(snap.expr())
                    );
                    out.push(violation(Theorem::Immutable, n, Some(&t.binder), msg, &trace.steps[n].term));
                }
                Some(_) => {}
            }
        }
    }
    for (n, s) in trace.steps.iter().enumerate() {
        for site in sites(&s.term) {
            let d = site.decl;
            if d.qualifier() != Some(Qualifier::Imm) || !d.init.is_right_value() {
                continue;
            }
            let bad = not_imm_closed(&d.init, &site.scope);
            if !bad.is_empty() {
                let msg = format!("right-value reaches non-imm references {}", names(&bad));
                out.push(violation(Theorem::Immutable, n, Some(&d.name), msg, &s.term));
            }
        }
    }
    out
}

/// Clause of the canonical forms theorem for the declared qualifier of
/// `d`, given the declarations in scope. The clause of the qualifier a
/// derivation actually gives implies the declared one.
fn canonical_form_error(d: &Decl, scope: &[&Decl]) -> Option<String> {
    let q = d.qualifier()?;
    let ty = type_of(&d.init);
    let declared = |y: &Name| lookup(scope, y).and_then(|e| e.ty.clone());
    let fv: Vec<Name> = free_vars(&d.init).into_iter().filter(|y| declared(y) != Some(Type::Int)).collect();
    let type_ok = match q {
        Qualifier::Capsule | Qualifier::Mut => is_mut_type(ty.clone()),
        Qualifier::Lent => ty.as_ref().and_then(Type::qualifier).is_some_and(|m| m.leq(Qualifier::Lent)),
        Qualifier::Imm | Qualifier::Read => true,
    };
    if !type_ok {
        return Some(format!(
            "typeOf is {} for a {} reference",
            ty.map_or(String::from("?"), |t| format!("{}", t)),
            q
        ));
    }
    let bad: Vec<Name> = match q {
        Qualifier::Capsule | Qualifier::Imm => fv
            .into_iter()
            .filter(|y| !declared(y).and_then(|t| t.qualifier()).is_some_and(|m| m.leq(Qualifier::Imm)))
            .collect(),
        Qualifier::Mut => fv
            .into_iter()
            .filter(|y| declared(y).and_then(|t| t.qualifier()) == Some(Qualifier::Read))
            .collect(),
        Qualifier::Lent | Qualifier::Read => Vec::new(),
    };
    if bad.is_empty() {
        None
    } else {
        Some(format!("free references {} violate the {} clause", names(&bad), q))
    }
}

pub fn check_canonical_forms(rv: &Expr, d: &Decl, scope: &[&Decl]) -> Vec<MetaViolation> {
    let probe = Decl { init: rv.clone(), ..d.clone() };
    canonical_form_error(&probe, scope)
        .map(|m| violation(Theorem::CanonicalForms, 0, Some(&d.name), m, rv))
        .into_iter()
        .collect()
}

pub fn check_canonical_forms_trace(trace: &ReductionTrace) -> Vec<MetaViolation> {
    let mut out = Vec::new();
    for (n, s) in trace.steps.iter().enumerate() {
        for site in sites(&s.term) {
            if !site.decl.is_evaluated() {
                continue;
            }
            if let Some(m) = canonical_form_error(site.decl, &site.scope) {
                out.push(violation(Theorem::CanonicalForms, n, Some(&site.decl.name), m, &s.term));
            }
        }
    }
    out
}

/// All checkers over one trace.
pub fn check_all(trace: &ReductionTrace, ct: &ClassTable, ty: &Type) -> Vec<MetaViolation> {
    let mut out = check_subject_reduction(trace, ct, ty);
    out.extend(check_progress_trace(trace, ct));
    out.extend(check_canonical_forms_trace(trace));
    out.extend(check_capsule_theorem(trace));
    out.extend(check_imm_theorem(trace));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{anf_program, parse};
    use crate::reduce::run;

    fn traced(src: &str) -> (ReductionTrace, ClassTable, Type) {
        let p = anf_program(&parse(src).unwrap()).unwrap();
        let ty = typecheck_expr(&p.classes, &TypeContext::empty(), &p.main, None).unwrap().result;
        (run(&p.main, &p.classes, 500).unwrap(), p.classes, ty)
    }

    #[test]
    fn cyclic_store_satisfies_everything() {
        let (t, ct, ty) = traced("class B { mut B f; } {mut B x = new B(y); mut B y = new B(x); x.f = x}");
        assert_eq!(check_all(&t, &ct, &ty), Vec::new());
    }

    #[test]
    fn imm_snapshot_survives_neighbour_mutation() {
        let (t, ct, ty) = traced(
            "class C { int f; } {mut C y = new C(0); imm C x = new C(7); mut C z = new C(y.f = 1); x}",
        );
        assert_eq!(check_all(&t, &ct, &ty), Vec::new());
        let x = trace_declarations(&t, Qualifier::Imm).into_iter().find(|d| d.binder.base() == "x").unwrap();
        let snaps: Vec<&CanonicalTerm> = x.snapshots.iter().flatten().collect();
        assert!(snaps.len() >= 2 && snaps.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn mutated_imm_right_value_is_reported() {
        let (mut t, _, _) = traced(
            "class C { int f; } {mut C y = new C(0); imm C x = new C(7); mut C z = new C(y.f = 1); x}",
        );
        let last = t.steps.last().unwrap().term.clone();
        let src = pretty_print(&last).replace("new C(7)", "new C(8)");
        let ct = parse("class C { int f; } {0}").unwrap().classes;
        let bad = crate::parser::parse_expr(&src, &ct).unwrap();
        t.steps.push(crate::reduce::TraceStep { rule: None, term: bad });
        let v = check_imm_theorem(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].step, t.steps.len() - 1);
    }

    #[test]
    fn closed_capsule_and_mut_object_states() {
        let ct = parse("class D { int f; } class C { mut D f1; mut D f2; } {0}").unwrap().classes;
        let rv = crate::parser::parse_expr("{mut D x = new D(1); new C(x, x)}", &ct).unwrap();
        let d = Decl::new(Type::class(Qualifier::Capsule, "C"), "z", rv.clone());
        assert!(check_canonical_forms(&rv, &d, &[]).is_empty());
        let y =
            Decl::new(Type::class(Qualifier::Mut, "D"), "y", Expr::new_obj("D", alloc::vec![Expr::int(0)]));
        let rv = Expr::new_obj("C", alloc::vec![Expr::var("y"), Expr::var("y")]);
        let m = Decl::new(Type::class(Qualifier::Mut, "C"), "m", rv.clone());
        assert!(check_canonical_forms(&rv, &m, &[&y]).is_empty());
        let c = Decl::new(Type::class(Qualifier::Imm, "C"), "m", rv.clone());
        assert_eq!(check_canonical_forms(&rv, &c, &[&y]).len(), 1);
    }
}
