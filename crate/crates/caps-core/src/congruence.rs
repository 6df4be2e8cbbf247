//! Congruence on terms: alpha-renaming and reordering of evaluated
//! declarations, value normalization, and well-formedness of right-values
//! and stores.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::parser::pretty_print;
use crate::syntax::{
    bound_names, free_vars, rename_free, ClassTable, Decl, Expr, ExprKind, Fresh, Name, Qualifier, Type,
};

/// A term with its evaluated declarations in a fixed order and every bound
/// name replaced by `#k`. Equal canonical terms are alpha/reorder
/// equivalent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalTerm(pub Expr);

impl CanonicalTerm {
    pub fn expr(&self) -> &Expr {
        &self.0
    }
}

pub fn canonical(e: &Expr) -> CanonicalTerm {
    let (ordered, _) = reorder(e);
    CanonicalTerm(renumber(&ordered, &mut 0, &mut Vec::new(), &|_, k| Name::from(format!("#{}", k))))
}

/// Canonical ordering with readable binder names `base_k`. For display.
pub fn canonical_display(e: &Expr) -> Expr {
    let (ordered, _) = reorder(e);
    renumber(&ordered, &mut 0, &mut Vec::new(), &|x, k| Name::from(format!("{}_{}", x.base(), k)))
}

pub fn alpha_equiv(e1: &Expr, e2: &Expr) -> bool {
    canonical(e1) == canonical(e2)
}

/// Free occurrences of `e` in left-to-right order, with duplicates.
fn occ_list(e: &Expr, out: &mut Vec<Name>) {
    match &e.kind {
        ExprKind::Var(x) => out.push(x.clone()),
        ExprKind::Int(_) => {}
        ExprKind::Field(r, _) => occ_list(r, out),
        ExprKind::Call(r, _, args) => {
            occ_list(r, out);
            args.iter().for_each(|a| occ_list(a, out));
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter().for_each(|a| occ_list(a, out))
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
            occ_list(a, out);
            occ_list(b, out);
        }
        ExprKind::Block(ds, body) => {
            let bound: BTreeSet<&Name> = ds.iter().map(|d| &d.name).collect();
            let mut inner = Vec::new();
            ds.iter().for_each(|d| occ_list(&d.init, &mut inner));
            occ_list(body, &mut inner);
            out.extend(inner.into_iter().filter(|x| !bound.contains(x)));
        }
    }
}

/// Puts every block in canonical declaration order. Returns the rebuilt
/// term with its free occurrences in order.
fn reorder(e: &Expr) -> (Expr, Vec<Name>) {
    let map = |args: &[Expr]| -> Vec<Expr> { args.iter().map(|a| reorder(a).0).collect() };
    let kind = match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => e.kind.clone(),
        ExprKind::Field(r, f) => ExprKind::Field(Box::new(reorder(r).0), f.clone()),
        ExprKind::Call(r, m, args) => ExprKind::Call(Box::new(reorder(r).0), m.clone(), map(args)),
        ExprKind::StaticCall(c, m, args) => ExprKind::StaticCall(c.clone(), m.clone(), map(args)),
        ExprKind::New(c, args) => ExprKind::New(c.clone(), map(args)),
        ExprKind::Assign(a, f, b) => {
            ExprKind::Assign(Box::new(reorder(a).0), f.clone(), Box::new(reorder(b).0))
        }
        ExprKind::Plus(a, b) => ExprKind::Plus(Box::new(reorder(a).0), Box::new(reorder(b).0)),
        ExprKind::Block(ds, body) => {
            let inits: Vec<(Decl, Vec<Name>)> = ds
                .iter()
                .map(|d| {
                    let (init, occ) = reorder(&d.init);
                    (Decl { init, ..d.clone() }, occ)
                })
                .collect();
            let (body, body_occ) = reorder(body);
            ExprKind::Block(order_decls(inits, &body_occ), Box::new(body))
        }
    };
    let out = Expr { kind, span: e.span };
    let mut occ = Vec::new();
    occ_list(&out, &mut occ);
    (out, occ)
}

fn order_decls(ds: Vec<(Decl, Vec<Name>)>, body_occ: &[Name]) -> Vec<Decl> {
    let index: BTreeMap<Name, usize> = ds
        .iter()
        .enumerate()
        .filter(|(_, (d, _))| d.is_evaluated())
        .map(|(i, (d, _))| (d.name.clone(), i))
        .collect();
    let mut seen = Vec::new();
    let mut visited = BTreeSet::new();
    fn visit(
        x: &Name,
        ds: &[(Decl, Vec<Name>)],
        index: &BTreeMap<Name, usize>,
        visited: &mut BTreeSet<usize>,
        seen: &mut Vec<usize>,
    ) {
        let Some(&i) = index.get(x) else { return };
        if !visited.insert(i) {
            return;
        }
        seen.push(i);
        for y in &ds[i].1 {
            visit(y, ds, index, visited, seen);
        }
    }
    let roots: Vec<Name> = ds
        .iter()
        .filter(|(d, _)| !d.is_evaluated())
        .flat_map(|(_, occ)| occ.iter().cloned())
        .chain(body_occ.iter().cloned())
        .collect();
    for x in &roots {
        visit(x, &ds, &index, &mut visited, &mut seen);
    }
    // Unreachable store: pick by shape, then follow its references.
    loop {
        let mut left: Vec<(String, usize)> = index
            .values()
            .filter(|i| !visited.contains(i))
            .map(|&i| (shape_key(&ds[i].0, &index), i))
            .collect();
        if left.is_empty() {
            break;
        }
        left.sort();
        let x = ds[left[0].1].0.name.clone();
        visit(&x, &ds, &index, &mut visited, &mut seen);
    }
    let mut out: Vec<Decl> = seen.iter().map(|&i| ds[i].0.clone()).collect();
    out.extend(ds.into_iter().filter(|(d, _)| !d.is_evaluated()).map(|(d, _)| d));
    out
}

fn shape_key(d: &Decl, local: &BTreeMap<Name, usize>) -> String {
    let mut init = d.init.clone();
    for x in local.keys() {
        init = rename_free(&init, x, &Name::new("_"));
    }
    let ty = d.ty.as_ref().map(|t| format!("{}", t)).unwrap_or_default();
    let shown = renumber(&init, &mut 0, &mut Vec::new(), &|_, k| Name::from(format!("#{}", k)));
    format!("{} {}", ty, pretty_print(&shown))
}

fn renumber(
    e: &Expr,
    k: &mut usize,
    env: &mut Vec<(Name, Name)>,
    name: &dyn Fn(&Name, usize) -> Name,
) -> Expr {
    let go = |x: &Expr, k: &mut usize, env: &mut Vec<(Name, Name)>| renumber(x, k, env, name);
    let kind = match &e.kind {
        ExprKind::Var(x) => ExprKind::Var(
            env.iter().rev().find(|(a, _)| a == x).map(|(_, b)| b.clone()).unwrap_or_else(|| x.clone()),
        ),
        ExprKind::Int(n) => ExprKind::Int(*n),
        ExprKind::Field(r, f) => ExprKind::Field(Box::new(go(r, k, env)), f.clone()),
        ExprKind::Call(r, m, args) => {
            let r = go(r, k, env);
            ExprKind::Call(Box::new(r), m.clone(), args.iter().map(|a| go(a, k, env)).collect())
        }
        ExprKind::StaticCall(c, m, args) => {
            ExprKind::StaticCall(c.clone(), m.clone(), args.iter().map(|a| go(a, k, env)).collect())
        }
        ExprKind::New(c, args) => ExprKind::New(c.clone(), args.iter().map(|a| go(a, k, env)).collect()),
        ExprKind::Assign(a, f, b) => {
            let a = go(a, k, env);
            ExprKind::Assign(Box::new(a), f.clone(), Box::new(go(b, k, env)))
        }
        ExprKind::Plus(a, b) => {
            let a = go(a, k, env);
            ExprKind::Plus(Box::new(a), Box::new(go(b, k, env)))
        }
        ExprKind::Block(ds, body) => {
            let mark = env.len();
            let names: Vec<Name> = ds
                .iter()
                .map(|d| {
                    let n = name(&d.name, *k);
                    *k += 1;
                    env.push((d.name.clone(), n.clone()));
                    n
                })
                .collect();
            let ds = ds
                .iter()
                .zip(names)
                .map(|(d, n)| Decl { ty: d.ty.clone(), name: n, init: go(&d.init, k, env), span: d.span })
                .collect();
            let body = go(body, k, env);
            env.truncate(mark);
            ExprKind::Block(ds, Box::new(body))
        }
    };
    Expr { kind, span: e.span }
}

/// `ds|X`: the declarations transitively used by `xs`.
pub fn connected_closure(ds: &[Decl], xs: &BTreeSet<Name>) -> Vec<Decl> {
    let mut reach = xs.clone();
    loop {
        let before = reach.len();
        for d in ds {
            if reach.contains(&d.name) {
                reach.extend(free_vars(&d.init));
            }
        }
        if reach.len() == before {
            break;
        }
    }
    ds.iter().filter(|d| reach.contains(&d.name)).cloned().collect()
}

fn all_atoms(args: &[Expr]) -> bool {
    args.iter().all(Expr::is_atom)
}

pub fn wf_rightvalue(rv: &Expr) -> bool {
    match &rv.kind {
        ExprKind::New(_, args) => all_atoms(args),
        ExprKind::Block(dvs, body) => {
            let body_ok = match &body.kind {
                ExprKind::Var(_) => true,
                ExprKind::New(_, args) => all_atoms(args),
                _ => false,
            };
            body_ok
                && !dvs.is_empty()
                && dvs.iter().all(|d| d.ty.is_some() && d.is_evaluated() && wf_rightvalue(&d.init))
                && connected_closure(dvs, &free_vars(body)).len() == dvs.len()
        }
        _ => false,
    }
}

pub fn wf_dv(d: &Decl) -> bool {
    let Some(Type::Class(q, c)) = &d.ty else { return false };
    match &d.init.kind {
        ExprKind::New(k, args) => *q != Qualifier::Capsule && k == c && all_atoms(args),
        ExprKind::Block(dvs, _) => {
            *q == Qualifier::Imm
                && wf_rightvalue(&d.init)
                && wf_store(dvs)
                && dvs.iter().all(|x| x.qualifier().is_some_and(|m| Qualifier::Mut.leq(m)))
        }
        _ => false,
    }
}

pub fn wf_store(dvs: &[Decl]) -> bool {
    dvs.iter().all(wf_dv)
}

/// Applies rules new, body, garbage and block-elim bottom-up to a
/// fixpoint.
pub fn normalize_value(v: &Expr, ct: &ClassTable) -> Expr {
    normalize_value_with(v, ct, &mut Fresh::avoiding(v))
}

pub fn normalize_value_with(v: &Expr, ct: &ClassTable, fresh: &mut Fresh) -> Expr {
    match &v.kind {
        ExprKind::New(c, args) => {
            let args: Vec<Expr> = args.iter().map(|a| normalize_value_with(a, ct, fresh)).collect();
            if all_atoms(&args) {
                return Expr { kind: ExprKind::New(c.clone(), args), span: v.span };
            }
            let fields = ct.fields(c).unwrap_or(&[]);
            let mut hoisted = Vec::new();
            let mut atoms = Vec::new();
            for (i, a) in args.into_iter().enumerate() {
                if a.is_atom() {
                    atoms.push(a);
                    continue;
                }
                let ty = fields.get(i).map(|f| f.ty.clone()).unwrap_or(Type::Int);
                let x = fresh.name("a");
                hoisted.push(Decl { ty: Some(ty), name: x.clone(), init: a, span: v.span });
                atoms.push(Expr::with_span(ExprKind::Var(x), v.span));
            }
            let body = Expr { kind: ExprKind::New(c.clone(), atoms), span: v.span };
            simplify_block(hoisted, body, v.span, fresh)
        }
        ExprKind::Block(ds, body) => {
            let ds = ds
                .iter()
                .map(|d| Decl { init: normalize_value_with(&d.init, ct, fresh), ..d.clone() })
                .collect();
            let body = normalize_value_with(body, ct, fresh);
            simplify_block(ds, body, v.span, fresh)
        }
        _ => v.clone(),
    }
}

/// Rules body, garbage, block-elim on a block whose parts are normal.
fn simplify_block(mut ds: Vec<Decl>, mut body: Expr, span: crate::syntax::Span, fresh: &mut Fresh) -> Expr {
    loop {
        let all_dv = ds.iter().all(Decl::is_evaluated);
        if all_dv {
            if let ExprKind::Block(inner, b) = &body.kind {
                if inner.iter().all(Decl::is_evaluated) {
                    let (inner, b) = avoid_capture(inner, b, &ds, fresh);
                    ds.extend(inner);
                    body = b;
                    continue;
                }
            }
            let kept = connected_closure(&ds, &free_vars(&body));
            if kept.len() < ds.len() {
                ds = kept;
                continue;
            }
        }
        if ds.is_empty() {
            return body;
        }
        return Expr { kind: ExprKind::Block(ds, Box::new(body)), span };
    }
}

/// Renames binders of the inner block that would capture or clash with
/// the outer declarations.
fn avoid_capture(inner: &[Decl], body: &Expr, outer: &[Decl], fresh: &mut Fresh) -> (Vec<Decl>, Expr) {
    let mut taken: BTreeSet<Name> = outer.iter().map(|d| d.name.clone()).collect();
    for d in outer {
        taken.extend(free_vars(&d.init));
        taken.extend(bound_names(&d.init));
    }
    let mut ds = inner.to_vec();
    let mut body = body.clone();
    for i in 0..ds.len() {
        if !taken.contains(&ds[i].name) {
            continue;
        }
        let old = ds[i].name.clone();
        let new = fresh.name(old.base());
        for d in ds.iter_mut() {
            d.init = rename_free(&d.init, &old, &new);
        }
        body = rename_free(&body, &old, &new);
        ds[i].name = new;
    }
    (ds, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn ct() -> ClassTable {
        parse("class C { mut D f; mut D g; imm C h; } class D { int n; } {0}").unwrap().classes
    }

    fn e(src: &str) -> Expr {
        let p =
            parse(&format!("class C {{ mut D f; mut D g; imm C h; }} class D {{ int n; }} {}", src)).unwrap();
        p.main
    }

    #[test]
    fn renaming_is_equivalent() {
        assert!(alpha_equiv(&e("{mut C x = new C(x, x, x); x}"), &e("{mut C w = new C(w, w, w); w}")));
    }

    #[test]
    fn evaluated_declarations_reorder() {
        let a = e("{mut D x = new D(0); mut D y = new D(1); new C(x, y, z)}");
        let b = e("{mut D y = new D(1); mut D x = new D(0); new C(x, y, z)}");
        assert!(alpha_equiv(&a, &b));
        let c = e("{mut D y = new D(0); mut D x = new D(1); new C(x, y, z)}");
        assert!(!alpha_equiv(&a, &c));
    }

    #[test]
    fn unevaluated_declarations_keep_order() {
        let a = e("{mut D x = z.f; mut D y = z.g; x}");
        let b = e("{mut D y = z.g; mut D x = z.f; x}");
        assert!(!alpha_equiv(&a, &b));
    }

    #[test]
    fn garbage_then_block_elim() {
        let ct = ct();
        let v = e("{mut C x = new C(x, y, z); mut D y = new D(0); y}");
        assert!(alpha_equiv(&normalize_value(&v, &ct), &e("{mut D y = new D(0); y}")));
        let v = e("{mut C x = new C(x, y, z); mut D y = new D(0); z}");
        assert_eq!(normalize_value(&v, &ct), Expr::var("z"));
        assert_eq!(normalize_value(&Expr::block(Vec::new(), Expr::var("v")), &ct), Expr::var("v"));
    }

    #[test]
    fn new_hoists_arguments() {
        let ct = ct();
        let v = e("new C(x, {mut D y = new D(0); y}, z)");
        let n = normalize_value(&v, &ct);
        let want = e("{mut D a = {mut D y = new D(0); y}; new C(x, a, z)}");
        assert!(alpha_equiv(&n, &want), "{}", pretty_print(&n));
        // Store in a declaration's right-hand side needs mut-move.
        let ExprKind::Block(ds, _) = &n.kind else { panic!() };
        assert!(!wf_store(ds));
        let v = e("new C(x, y, {mut D a = new D(0); mut D b = new D(1); new C(a, b, z)})");
        let n = normalize_value(&v, &ct);
        let ExprKind::Block(ds, _) = &n.kind else { panic!() };
        assert!(wf_rightvalue(&n) && wf_store(ds), "{}", pretty_print(&n));
    }

    #[test]
    fn two_level_store_is_well_formed() {
        let b = e("{mut D x = new D(0); imm D y = new D(1); \
                   imm C z = {mut D x = new D(0); mut D y = new D(1); new C(x, y, z)}; x}");
        let ExprKind::Block(ds, _) = &b.kind else { panic!() };
        assert!(wf_store(ds));
    }

    #[test]
    fn store_rejects_capsules_and_imm_locals() {
        let b = e("{capsule D x = new D(0); imm C z = {imm D a = new D(0); new C(a, a, z)}; x}");
        let ExprKind::Block(ds, _) = &b.kind else { panic!() };
        assert!(!wf_dv(&ds[0]));
        assert!(!wf_dv(&ds[1]));
    }

    #[test]
    fn closure_examples() {
        let b = e("{mut D x = new D(y); mut D y = new D(0); mut D w = new D(1); x}");
        let ExprKind::Block(ds, _) = &b.kind else { panic!() };
        let names = |v: Vec<Decl>| v.into_iter().map(|d| d.name).collect::<Vec<_>>();
        let one = BTreeSet::from([Name::new("x")]);
        assert_eq!(names(connected_closure(ds, &one)), [Name::new("x"), Name::new("y")]);
        assert!(connected_closure(ds, &BTreeSet::new()).is_empty());
        let all = ds.iter().map(|d| d.name.clone()).collect();
        assert_eq!(connected_closure(ds, &all).len(), 3);
    }
}
