use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{Decl, Expr, ExprKind, Name};

/// Free variables. Block binders are removed from both the body and every
/// declaration right-hand side.
pub fn free_vars(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    collect_free(e, &mut out);
    out
}

fn collect_free(e: &Expr, out: &mut BTreeSet<Name>) {
    match &e.kind {
        ExprKind::Var(x) => {
            out.insert(x.clone());
        }
        ExprKind::Int(_) => {}
        ExprKind::Field(r, _) => collect_free(r, out),
        ExprKind::Call(r, _, args) => {
            collect_free(r, out);
            args.iter().for_each(|a| collect_free(a, out));
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter().for_each(|a| collect_free(a, out));
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
            collect_free(a, out);
            collect_free(b, out);
        }
        ExprKind::Block(ds, body) => {
            let mut inner = BTreeSet::new();
            for d in ds {
                collect_free(&d.init, &mut inner);
            }
            collect_free(body, &mut inner);
            for d in ds {
                inner.remove(&d.name);
            }
            out.extend(inner);
        }
    }
}

/// Number of free occurrences of `x`.
pub fn occurrences(e: &Expr, x: &Name) -> usize {
    match &e.kind {
        ExprKind::Var(y) => usize::from(y == x),
        ExprKind::Int(_) => 0,
        ExprKind::Field(r, _) => occurrences(r, x),
        ExprKind::Call(r, _, args) => {
            occurrences(r, x) + args.iter().map(|a| occurrences(a, x)).sum::<usize>()
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter().map(|a| occurrences(a, x)).sum()
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => occurrences(a, x) + occurrences(b, x),
        ExprKind::Block(ds, body) => {
            if ds.iter().any(|d| &d.name == x) {
                0
            } else {
                occurrences(body, x) + ds.iter().map(|d| occurrences(&d.init, x)).sum::<usize>()
            }
        }
    }
}

/// Every name bound by some block inside `e`.
pub fn bound_names(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    collect_bound(e, &mut out);
    out
}

fn collect_bound(e: &Expr, out: &mut BTreeSet<Name>) {
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => {}
        ExprKind::Field(r, _) => collect_bound(r, out),
        ExprKind::Call(r, _, args) => {
            collect_bound(r, out);
            args.iter().for_each(|a| collect_bound(a, out));
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter().for_each(|a| collect_bound(a, out));
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
            collect_bound(a, out);
            collect_bound(b, out);
        }
        ExprKind::Block(ds, body) => {
            for d in ds {
                out.insert(d.name.clone());
                collect_bound(&d.init, out);
            }
            collect_bound(body, out);
        }
    }
}

/// `e[v/x]`. Blocks that declare `x` are left untouched; capture is the
/// caller's responsibility.
pub fn substitute(e: &Expr, v: &Expr, x: &Name) -> Expr {
    let kind = match &e.kind {
        ExprKind::Var(y) if y == x => return v.clone(),
        ExprKind::Var(_) | ExprKind::Int(_) => return e.clone(),
        ExprKind::Field(r, f) => ExprKind::Field(sub_box(r, v, x), f.clone()),
        ExprKind::Call(r, m, args) => ExprKind::Call(sub_box(r, v, x), m.clone(), sub_all(args, v, x)),
        ExprKind::StaticCall(c, m, args) => ExprKind::StaticCall(c.clone(), m.clone(), sub_all(args, v, x)),
        ExprKind::Assign(a, f, b) => ExprKind::Assign(sub_box(a, v, x), f.clone(), sub_box(b, v, x)),
        ExprKind::New(c, args) => ExprKind::New(c.clone(), sub_all(args, v, x)),
        ExprKind::Plus(a, b) => ExprKind::Plus(sub_box(a, v, x), sub_box(b, v, x)),
        ExprKind::Block(ds, body) => {
            if ds.iter().any(|d| &d.name == x) {
                return e.clone();
            }
            let ds = ds.iter().map(|d| Decl { init: substitute(&d.init, v, x), ..d.clone() }).collect();
            ExprKind::Block(ds, sub_box(body, v, x))
        }
    };
    Expr { kind, span: e.span }
}

fn sub_box(e: &Expr, v: &Expr, x: &Name) -> Box<Expr> {
    Box::new(substitute(e, v, x))
}

fn sub_all(es: &[Expr], v: &Expr, x: &Name) -> Vec<Expr> {
    es.iter().map(|a| substitute(a, v, x)).collect()
}

/// Renames free occurrences of `from` to `to`.
pub fn rename_free(e: &Expr, from: &Name, to: &Name) -> Expr {
    substitute(e, &Expr::with_span(ExprKind::Var(to.clone()), e.span), from)
}

/// Supply of `base#N` names. Source identifiers cannot contain `#`, so
/// these never clash with user names.
#[derive(Clone, Debug, Default)]
pub struct Fresh {
    next: usize,
}

impl Fresh {
    pub fn new() -> Fresh {
        Fresh::default()
    }

    /// A supply whose names all differ from those already in `e`.
    pub fn avoiding(e: &Expr) -> Fresh {
        let mut f = Fresh::new();
        f.skip_past(e);
        f
    }

    pub fn skip_past(&mut self, e: &Expr) {
        for x in free_vars(e).iter().chain(bound_names(e).iter()) {
            if let Some(n) = x.as_str().rsplit_once('#').and_then(|(_, k)| k.parse::<usize>().ok()) {
                self.next = self.next.max(n + 1);
            }
        }
    }

    pub fn name(&mut self, base: &str) -> Name {
        let n = self.next;
        self.next += 1;
        Name::from(alloc::format!("{}#{}", base, n))
    }
}

/// Alpha-renames every binder in `e` to a fresh name.
pub fn freshen(e: &Expr, fresh: &mut Fresh) -> Expr {
    let kind = match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => return e.clone(),
        ExprKind::Field(r, f) => ExprKind::Field(Box::new(freshen(r, fresh)), f.clone()),
        ExprKind::Call(r, m, args) => ExprKind::Call(
            Box::new(freshen(r, fresh)),
            m.clone(),
            args.iter().map(|a| freshen(a, fresh)).collect(),
        ),
        ExprKind::StaticCall(c, m, args) => {
            ExprKind::StaticCall(c.clone(), m.clone(), args.iter().map(|a| freshen(a, fresh)).collect())
        }
        ExprKind::New(c, args) => ExprKind::New(c.clone(), args.iter().map(|a| freshen(a, fresh)).collect()),
        ExprKind::Assign(a, f, b) => {
            ExprKind::Assign(Box::new(freshen(a, fresh)), f.clone(), Box::new(freshen(b, fresh)))
        }
        ExprKind::Plus(a, b) => ExprKind::Plus(Box::new(freshen(a, fresh)), Box::new(freshen(b, fresh))),
        ExprKind::Block(ds, body) => {
            let mut ds = ds.clone();
            let mut body = (**body).clone();
            for i in 0..ds.len() {
                let old = ds[i].name.clone();
                let new = fresh.name(old.base());
                for d in ds.iter_mut() {
                    d.init = rename_free(&d.init, &old, &new);
                }
                body = rename_free(&body, &old, &new);
                ds[i].name = new;
            }
            let ds = ds.into_iter().map(|d| Decl { init: freshen(&d.init, fresh), ..d }).collect();
            ExprKind::Block(ds, Box::new(freshen(&body, fresh)))
        }
    };
    Expr { kind, span: e.span }
}

/// Renames binders so that no name is bound twice in `e` or bound and
/// also free. The first binding of each name keeps it.
pub fn rename_apart(e: &Expr, fresh: &mut Fresh) -> Expr {
    let mut seen = free_vars(e);
    apart(e, fresh, &mut seen)
}

fn apart(e: &Expr, fresh: &mut Fresh, seen: &mut BTreeSet<Name>) -> Expr {
    let kind = match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => return e.clone(),
        ExprKind::Field(r, f) => ExprKind::Field(Box::new(apart(r, fresh, seen)), f.clone()),
        ExprKind::Call(r, m, args) => {
            let r = apart(r, fresh, seen);
            ExprKind::Call(Box::new(r), m.clone(), args.iter().map(|a| apart(a, fresh, seen)).collect())
        }
        ExprKind::StaticCall(c, m, args) => {
            ExprKind::StaticCall(c.clone(), m.clone(), args.iter().map(|a| apart(a, fresh, seen)).collect())
        }
        ExprKind::New(c, args) => {
            ExprKind::New(c.clone(), args.iter().map(|a| apart(a, fresh, seen)).collect())
        }
        ExprKind::Assign(a, f, b) => {
            let a = apart(a, fresh, seen);
            ExprKind::Assign(Box::new(a), f.clone(), Box::new(apart(b, fresh, seen)))
        }
        ExprKind::Plus(a, b) => {
            let a = apart(a, fresh, seen);
            ExprKind::Plus(Box::new(a), Box::new(apart(b, fresh, seen)))
        }
        ExprKind::Block(ds, body) => {
            let mut ds = ds.clone();
            let mut body = (**body).clone();
            for i in 0..ds.len() {
                let old = ds[i].name.clone();
                if seen.insert(old.clone()) {
                    continue;
                }
                let new = fresh.name(old.base());
                seen.insert(new.clone());
                for d in ds.iter_mut() {
                    d.init = rename_free(&d.init, &old, &new);
                }
                body = rename_free(&body, &old, &new);
                ds[i].name = new;
            }
            let ds = ds.into_iter().map(|d| Decl { init: apart(&d.init, fresh, seen), ..d }).collect();
            ExprKind::Block(ds, Box::new(apart(&body, fresh, seen)))
        }
    };
    Expr { kind, span: e.span }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{Qualifier, Type};

    fn n(s: &str) -> Name {
        Name::new(s)
    }

    fn set(xs: &[&str]) -> BTreeSet<Name> {
        xs.iter().map(|s| n(s)).collect()
    }

    #[test]
    fn fv_of_block_removes_binders() {
        let e = Expr::block(
            vec![Decl::new(
                Type::class(Qualifier::Mut, "D"),
                "x",
                Expr::new_obj("D", vec![Expr::field(Expr::var("y"), "f")]),
            )],
            Expr::new_obj("C", vec![Expr::var("x"), Expr::var("x")]),
        );
        assert_eq!(free_vars(&e), set(&["y"]));
    }

    #[test]
    fn fv_self_reference_is_closed() {
        let e = Expr::block(
            vec![Decl::new(Type::class(Qualifier::Mut, "C"), "x", Expr::new_obj("C", vec![Expr::var("x")]))],
            Expr::var("x"),
        );
        assert!(free_vars(&e).is_empty());
        assert_eq!(free_vars(&Expr::var("x")), set(&["x"]));
    }

    #[test]
    fn substitute_respects_shadowing() {
        let e = Expr::new_obj("C", vec![Expr::var("x"), Expr::var("x")]);
        assert_eq!(
            substitute(&e, &Expr::var("y"), &n("x")),
            Expr::new_obj("C", vec![Expr::var("y"), Expr::var("y")])
        );
        let b = Expr::block(
            vec![Decl::new(Type::class(Qualifier::Mut, "C"), "x", Expr::new_obj("C", vec![Expr::var("z")]))],
            Expr::var("x"),
        );
        assert_eq!(substitute(&b, &Expr::var("y"), &n("x")), b);
    }

    #[test]
    fn substitute_block_value_into_assignment() {
        let v = Expr::block(
            vec![Decl::new(Type::class(Qualifier::Imm, "D"), "u", Expr::new_obj("D", vec![Expr::int(0)]))],
            Expr::var("u"),
        );
        let e = Expr::assign(Expr::var("x"), "f", Expr::var("w"));
        assert_eq!(substitute(&e, &v, &n("w")), Expr::assign(Expr::var("x"), "f", v.clone()));
    }

    #[test]
    fn occurrence_count() {
        let e = Expr::new_obj("C", vec![Expr::var("x"), Expr::field(Expr::var("x"), "f")]);
        assert_eq!(occurrences(&e, &n("x")), 2);
        assert_eq!(occurrences(&e, &n("y")), 0);
    }
}
