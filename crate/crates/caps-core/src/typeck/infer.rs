//! Up-set inference.
//!
//! For an expression `e` and a context, `D(ctx, e)` is the set of types
//! derivable for `e`. It is up-closed under subtyping, so a bitmask over
//! the five qualifiers (or one bit for `int`) represents it once the class
//! is known. Contexts are cut down to the free variables of `e` before
//! memoisation; a group keeps the names of its restricted members that
//! fell outside, since those still forbid swapping it in.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::context::TypeContext;
use super::elaborate::class_of;
use super::{wf_context, Derivation, Judgment, Rule, TypeError, TypeErrorKind};
use crate::syntax::{free_vars, ClassTable, Decl, Expr, ExprKind, FieldDecl, Name, Qualifier, Type};

pub(crate) const CAPSULE: usize = 0;
pub(crate) const MUT: usize = 1;
pub(crate) const IMM: usize = 2;
pub(crate) const LENT: usize = 3;
pub(crate) const READ: usize = 4;
pub(crate) const INT: usize = 5;

pub(crate) fn bit_of(t: &Type) -> usize {
    match t {
        Type::Int => INT,
        Type::Class(q, _) => *q as usize,
    }
}

pub(crate) fn type_of(shape: &Option<Name>, b: usize) -> Type {
    match shape {
        None => Type::Int,
        Some(c) => Type::Class(Qualifier::ALL[b], c.clone()),
    }
}

pub(crate) fn has(mask: u8, b: usize) -> bool {
    mask & (1 << b) != 0
}

fn bits(mask: u8) -> impl Iterator<Item = usize> {
    (0..6).filter(move |b| has(mask, *b))
}

fn below(a: usize, b: usize) -> bool {
    a < INT && b < INT && Qualifier::ALL[a].leq(Qualifier::ALL[b])
}

pub(crate) fn lent_to_mut(t: &Type) -> Type {
    match t {
        Type::Class(Qualifier::Lent, c) => Type::Class(Qualifier::Mut, c.clone()),
        t => t.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Config {
    /// Upper bound on (expression, context) pairs solved per query.
    pub budget: usize,
    /// Upper bound on block locals with a real group choice in one
    /// connected component.
    pub max_lent_locals: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config { budget: 100_000, max_lent_locals: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Group {
    pub(crate) vars: BTreeSet<Name>,
    /// Restricted members not in view. `?` stands for unknown ones.
    pub(crate) hidden: BTreeSet<Name>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct ICtx {
    pub(crate) gamma: BTreeMap<Name, Type>,
    pub(crate) lent: Vec<Group>,
    pub(crate) mutable: BTreeSet<Name>,
    pub(crate) ys: BTreeSet<Name>,
}

impl ICtx {
    pub(crate) fn from_full(c: &TypeContext) -> ICtx {
        ICtx {
            gamma: c.gamma.clone(),
            lent: c.groups.iter().map(|g| Group { vars: g.clone(), hidden: BTreeSet::new() }).collect(),
            mutable: c.mutable_group(),
            ys: c.restricted.clone(),
        }
        .normalized()
    }

    fn normalized(mut self) -> ICtx {
        self.lent.retain(|g| !g.vars.is_empty());
        self.lent.sort();
        self
    }

    pub(crate) fn restrict(&self, fv: &BTreeSet<Name>) -> ICtx {
        ICtx {
            gamma: self
                .gamma
                .iter()
                .filter(|(x, _)| fv.contains(*x))
                .map(|(x, t)| (x.clone(), t.clone()))
                .collect(),
            lent: self
                .lent
                .iter()
                .map(|g| {
                    let mut hidden = g.hidden.clone();
                    hidden
                        .extend(g.vars.iter().filter(|x| !fv.contains(*x) && self.ys.contains(*x)).cloned());
                    Group { vars: g.vars.intersection(fv).cloned().collect(), hidden }
                })
                .collect(),
            mutable: self.mutable.intersection(fv).cloned().collect(),
            ys: self.ys.intersection(fv).cloned().collect(),
        }
        .normalized()
    }

    fn blocked(&self, g: &Group) -> bool {
        !g.hidden.is_empty() || g.vars.iter().any(|x| self.ys.contains(x))
    }

    fn capsule(&self) -> ICtx {
        let mut c = self.clone();
        let old = core::mem::take(&mut c.mutable);
        if !old.is_empty() {
            c.lent.push(Group { vars: old, hidden: BTreeSet::new() });
        }
        c.normalized()
    }

    fn imm(&self) -> ICtx {
        let mut c = self.capsule();
        c.ys = c
            .gamma
            .iter()
            .filter(|(_, t)| t.qualifier().is_some_and(|q| Qualifier::Mut.leq(q)))
            .map(|(x, _)| x.clone())
            .collect();
        for g in &mut c.lent {
            g.hidden.insert(Name::new("?"));
        }
        c
    }

    fn swap(&self, j: usize) -> ICtx {
        let mut c = self.clone();
        let g = c.lent.remove(j);
        let old = core::mem::replace(&mut c.mutable, g.vars);
        if !old.is_empty() {
            c.lent.push(Group { vars: old, hidden: BTreeSet::new() });
        }
        c.normalized()
    }

    fn unrst(&self) -> ICtx {
        let mut c = self.clone();
        c.ys.clear();
        for g in &mut c.lent {
            g.hidden.clear();
        }
        c
    }

    fn anything_restricted(&self) -> bool {
        !self.ys.is_empty() || self.lent.iter().any(|g| !g.hidden.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Choice {
    Mutable,
    /// Joins the lent group with these visible members.
    Join(BTreeSet<Name>),
    /// Joins the new group opened by this local.
    Fresh(Name),
}

#[derive(Clone, Debug)]
pub(crate) enum Just {
    Struct(Option<Vec<(Name, Choice)>>),
    Sub(usize),
    Capsule,
    Imm,
    /// Swapped-in group (by visible members, `None` for the empty group)
    /// and the premise type bit.
    Swap(Option<BTreeSet<Name>>, usize),
    Unrst,
}

#[derive(Clone, Debug)]
pub(crate) struct Entry {
    pub(crate) shape: Option<Name>,
    pub(crate) mask: u8,
    pub(crate) just: [Option<Just>; 6],
}

impl Entry {
    fn new(shape: Option<Name>) -> Entry {
        Entry { shape, mask: 0, just: Default::default() }
    }

    /// Adds `b` and everything above it. Returns whether anything changed.
    fn add(&mut self, b: usize, j: Just) -> bool {
        if has(self.mask, b) {
            return false;
        }
        self.mask |= 1 << b;
        self.just[b] = Some(j);
        for up in 0..INT {
            if up != b && below(b, up) && !has(self.mask, up) {
                self.mask |= 1 << up;
                self.just[up] = Some(Just::Sub(b));
            }
        }
        true
    }
}

#[derive(Clone, Debug)]
enum Edge {
    Capsule,
    Imm,
    Swap(Option<BTreeSet<Name>>),
    Unrst,
}

fn transitions(c: &ICtx, class: bool) -> Vec<(Edge, ICtx)> {
    let mut out = Vec::new();
    if class {
        out.push((Edge::Capsule, c.capsule()));
        out.push((Edge::Imm, c.imm()));
    }
    for (j, g) in c.lent.iter().enumerate() {
        if !c.blocked(g) {
            out.push((Edge::Swap(Some(g.vars.clone())), c.swap(j)));
        }
    }
    if !c.mutable.is_empty() {
        out.push((Edge::Swap(None), c.capsule()));
    }
    if c.anything_restricted() {
        out.push((Edge::Unrst, c.unrst()));
    }
    out
}

fn key(e: &Expr) -> usize {
    e as *const Expr as usize
}

pub struct Checker<'a> {
    pub(crate) ct: &'a ClassTable,
    cfg: Config,
    memo: BTreeMap<usize, BTreeMap<ICtx, Entry>>,
    fvs: BTreeMap<usize, BTreeSet<Name>>,
    work: usize,
}

impl<'a> Checker<'a> {
    pub fn new(ct: &'a ClassTable, cfg: Config) -> Self {
        Checker { ct, cfg, memo: BTreeMap::new(), fvs: BTreeMap::new(), work: 0 }
    }

    /// Memo entries are keyed by node address, so they are dropped before
    /// every query.
    fn reset(&mut self) {
        self.memo.clear();
        self.fvs.clear();
        self.work = 0;
    }

    pub(crate) fn fv(&mut self, e: &Expr) -> BTreeSet<Name> {
        self.fvs.entry(key(e)).or_insert_with(|| free_vars(e)).clone()
    }

    fn prepare(&mut self, ctx: &TypeContext, e: &Expr) -> Result<(), TypeError> {
        self.reset();
        if !wf_context(ctx) {
            return Err(TypeError {
                kind: TypeErrorKind::MalformedContext,
                span: e.span,
                rule: None,
                blocking: None,
                explanation: format!("context is not well formed: {}", ctx),
            });
        }
        class_of(self.ct, &ctx.gamma, e)?;
        Ok(())
    }

    /// All derivable types of `e` in `ctx`.
    pub fn derivable(&mut self, ctx: &TypeContext, e: &Expr) -> Result<Vec<Type>, TypeError> {
        self.prepare(ctx, e)?;
        let en = self.entry_full(ctx, e)?;
        Ok(bits(en.mask).map(|b| type_of(&en.shape, b)).collect())
    }

    /// Least derivable types; several when they are incomparable.
    pub fn minimal_types(&mut self, ctx: &TypeContext, e: &Expr) -> Result<Vec<Type>, TypeError> {
        self.prepare(ctx, e)?;
        let en = self.entry_full(ctx, e)?;
        Ok(minimal_bits(en.mask).into_iter().map(|b| type_of(&en.shape, b)).collect())
    }

    pub fn check(&mut self, ctx: &TypeContext, e: &Expr, t: &Type) -> Result<bool, TypeError> {
        self.prepare(ctx, e)?;
        let en = self.entry_full(ctx, e)?;
        Ok(t.class_name() == en.shape.as_ref() && has(en.mask, bit_of(t)))
    }

    pub fn judge(&mut self, ctx: &TypeContext, e: &Expr, goal: Option<&Type>) -> Result<Judgment, TypeError> {
        self.prepare(ctx, e)?;
        let en = self.entry_full(ctx, e)?;
        let b = match goal {
            Some(t) => {
                if t.class_name() != en.shape.as_ref() {
                    return Err(TypeError::ill(
                        e.span,
                        None,
                        format!("expression has class {}, expected {}", show_shape(&en.shape), t),
                    ));
                }
                let b = bit_of(t);
                if !has(en.mask, b) {
                    return Err(self.diagnose(ctx, e, b));
                }
                b
            }
            None => {
                if en.mask == 0 {
                    let b = if en.shape.is_some() { READ } else { INT };
                    return Err(self.diagnose(ctx, e, b));
                }
                let mins = minimal_bits(en.mask);
                *mins.iter().find(|b| matches!(en.just[**b], Some(Just::Struct(_)))).unwrap_or(&mins[0])
            }
        };
        let d = self.build(ctx, e, b)?;
        Ok(Judgment {
            context: ctx.clone(),
            expr: e.clone(),
            result: d.ty.clone(),
            rule_path: d.rule_path(),
            derivation: d,
        })
    }

    pub(crate) fn entry_full(&mut self, ctx: &TypeContext, e: &Expr) -> Result<Entry, TypeError> {
        let fv = self.fv(e);
        let c = ICtx::from_full(ctx).restrict(&fv);
        self.solve(e, &c)?;
        Ok(self.memo[&key(e)][&c].clone())
    }

    pub(crate) fn derivable_in(&mut self, ctx: &TypeContext, e: &Expr, b: usize) -> Result<bool, TypeError> {
        Ok(has(self.entry_full(ctx, e)?.mask, b))
    }

    fn infer(&mut self, c: &ICtx, e: &Expr) -> Result<(Option<Name>, u8), TypeError> {
        let fv = self.fv(e);
        let r = c.restrict(&fv);
        self.solve(e, &r)?;
        let en = &self.memo[&key(e)][&r];
        Ok((en.shape.clone(), en.mask))
    }

    fn solve(&mut self, e: &Expr, c0: &ICtx) -> Result<(), TypeError> {
        let k = key(e);
        if self.memo.get(&k).is_some_and(|m| m.contains_key(c0)) {
            return Ok(());
        }
        let mut states = vec![c0.clone()];
        let mut idx = BTreeMap::new();
        idx.insert(c0.clone(), 0usize);
        let mut entries: Vec<Entry> = Vec::new();
        let mut fixed = Vec::new();
        let mut edges: Vec<Vec<(Edge, usize)>> = Vec::new();
        let mut i = 0;
        while i < states.len() {
            let s = states[i].clone();
            if let Some(en) = self.memo.get(&k).and_then(|m| m.get(&s)) {
                entries.push(en.clone());
                fixed.push(true);
                edges.push(Vec::new());
            } else {
                self.work += 1;
                if self.work > self.cfg.budget {
                    return Err(TypeError::exhausted(
                        e.span,
                        format!("more than {} expression/context pairs", self.cfg.budget),
                    ));
                }
                let en = self.structural(e, &s)?;
                let mut es = Vec::new();
                for (edge, t) in transitions(&s, en.shape.is_some()) {
                    let j = match idx.get(&t) {
                        Some(j) => *j,
                        None => {
                            states.push(t.clone());
                            idx.insert(t, states.len() - 1);
                            states.len() - 1
                        }
                    };
                    es.push((edge, j));
                }
                entries.push(en);
                fixed.push(false);
                edges.push(es);
            }
            i += 1;
        }
        loop {
            let mut changed = false;
            for s in 0..states.len() {
                if fixed[s] {
                    continue;
                }
                for (edge, t) in edges[s].clone() {
                    let tm = entries[t].mask;
                    let adds: Vec<(usize, Just)> = match edge {
                        Edge::Capsule if has(tm, MUT) => vec![(CAPSULE, Just::Capsule)],
                        Edge::Imm if has(tm, READ) => vec![(IMM, Just::Imm)],
                        Edge::Capsule | Edge::Imm => Vec::new(),
                        Edge::Swap(g) => bits(tm)
                            .map(|b| (if b == MUT { LENT } else { b }, Just::Swap(g.clone(), b)))
                            .collect(),
                        Edge::Unrst => bits(tm)
                            .filter(|b| matches!(*b, CAPSULE | IMM | INT))
                            .map(|b| (b, Just::Unrst))
                            .collect(),
                    };
                    for (b, j) in adds {
                        changed |= entries[s].add(b, j);
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let m = self.memo.entry(k).or_default();
        for ((s, en), f) in states.into_iter().zip(entries).zip(fixed) {
            if !f {
                m.insert(s, en);
            }
        }
        Ok(())
    }

    fn field(&self, c: &Name, f: &Name, at: &Expr) -> Result<FieldDecl, TypeError> {
        self.ct.fields(c).and_then(|fs| fs.iter().find(|d| &d.name == f)).cloned().ok_or_else(|| {
            TypeError::ill(at.span, Some(Rule::FieldAccess), format!("class {} has no field {}", c, f))
        })
    }

    fn receiver(&mut self, s: &ICtx, r: &Expr) -> Result<(Name, u8), TypeError> {
        let (shape, m) = self.infer(s, r)?;
        let c = shape.ok_or_else(|| TypeError::ill(r.span, None, String::from("receiver is an int")))?;
        Ok((c, m))
    }

    fn args_ok(&mut self, s: &ICtx, args: &[Expr], want: &[Type]) -> Result<bool, TypeError> {
        let mut ok = true;
        for (a, t) in args.iter().zip(want) {
            let (_, m) = self.infer(s, a)?;
            ok &= has(m, bit_of(t));
        }
        Ok(ok)
    }

    fn method_sig(
        &self,
        c: &Name,
        m: &Name,
        at: &Expr,
    ) -> Result<(Option<Qualifier>, Vec<Type>, Type), TypeError> {
        let md = self.ct.method(c, m).ok_or_else(|| {
            TypeError::ill(at.span, Some(Rule::MethCall), format!("class {} has no method {}", c, m))
        })?;
        let recv = match md.receiver {
            crate::syntax::Receiver::Qual(q) => Some(q),
            crate::syntax::Receiver::Static => None,
        };
        Ok((recv, md.params.iter().map(|p| p.ty.clone()).collect(), md.ret.clone()))
    }

    fn structural(&mut self, e: &Expr, s: &ICtx) -> Result<Entry, TypeError> {
        let (shape, adds): (Option<Name>, Vec<(usize, Just)>) = match &e.kind {
            ExprKind::Var(x) => {
                let t = s.gamma.get(x).ok_or_else(|| {
                    TypeError::ill(e.span, Some(Rule::Var), format!("unbound variable {}", x))
                })?;
                let shape = t.class_name().cloned();
                if s.ys.contains(x) {
                    (shape, Vec::new())
                } else {
                    let b = match t {
                        Type::Class(Qualifier::Mut, _) if s.lent.iter().any(|g| g.vars.contains(x)) => LENT,
                        t => bit_of(t),
                    };
                    (shape, vec![(b, Just::Struct(None))])
                }
            }
            ExprKind::Int(_) => (None, vec![(INT, Just::Struct(None))]),
            ExprKind::Plus(a, b) => {
                let (_, ma) = self.infer(s, a)?;
                let (_, mb) = self.infer(s, b)?;
                let ok = has(ma, INT) && has(mb, INT);
                (None, if ok { vec![(INT, Just::Struct(None))] } else { Vec::new() })
            }
            ExprKind::Field(r, f) => {
                let (c, rm) = self.receiver(s, r)?;
                let fd = self.field(&c, f, e)?;
                let shape = fd.ty.class_name().cloned();
                let adds = match &fd.ty {
                    Type::Class(Qualifier::Mut, _) => bits(rm).map(|b| (b, Just::Struct(None))).collect(),
                    t if rm != 0 => vec![(bit_of(t), Just::Struct(None))],
                    _ => Vec::new(),
                };
                (shape, adds)
            }
            ExprKind::Assign(r, f, rhs) => {
                let (c, rm) = self.receiver(s, r)?;
                let fd = self.field(&c, f, e)?;
                let (_, vm) = self.infer(s, rhs)?;
                let ok = has(rm, MUT) && has(vm, bit_of(&fd.ty));
                (
                    fd.ty.class_name().cloned(),
                    if ok { vec![(bit_of(&fd.ty), Just::Struct(None))] } else { Vec::new() },
                )
            }
            ExprKind::Call(r, m, args) => {
                let (c, rm) = self.receiver(s, r)?;
                let (recv, params, ret) = self.method_sig(&c, m, e)?;
                let recv = recv.ok_or_else(|| {
                    TypeError::ill(e.span, Some(Rule::MethCall), format!("{}.{} is static", c, m))
                })?;
                let ok = has(rm, recv as usize) & self.args_ok(s, args, &params)?;
                (
                    ret.class_name().cloned(),
                    if ok { vec![(bit_of(&ret), Just::Struct(None))] } else { Vec::new() },
                )
            }
            ExprKind::StaticCall(c, m, args) => {
                let (_, params, ret) = self.method_sig(c, m, e)?;
                let ok = self.args_ok(s, args, &params)?;
                (
                    ret.class_name().cloned(),
                    if ok { vec![(bit_of(&ret), Just::Struct(None))] } else { Vec::new() },
                )
            }
            ExprKind::New(c, args) => {
                let want: Vec<Type> = self
                    .ct
                    .fields(c)
                    .ok_or_else(|| TypeError::ill(e.span, Some(Rule::New), format!("unknown class {}", c)))?
                    .iter()
                    .map(|f| f.ty.clone())
                    .collect();
                let ok = args.len() == want.len() && self.args_ok(s, args, &want)?;
                (Some(c.clone()), if ok { vec![(MUT, Just::Struct(None))] } else { Vec::new() })
            }
            ExprKind::Block(ds, body) => self.block(s, ds, body)?,
        };
        let mut en = Entry::new(shape);
        for (b, j) in adds {
            en.add(b, j);
        }
        Ok(en)
    }

    fn block(&mut self, s: &ICtx, ds: &[Decl], body: &Expr) -> Result<BlockGrouping, TypeError> {
        let names: BTreeSet<Name> = ds.iter().map(|d| d.name.clone()).collect();
        let mut base = s.clone();
        for g in &mut base.lent {
            g.hidden.retain(|x| !names.contains(x));
        }
        let mut tys = Vec::new();
        for d in ds {
            let t = d.ty.as_ref().ok_or_else(|| {
                TypeError::ill(d.span, Some(Rule::Block), format!("declaration {} has no type", d.name))
            })?;
            let t = lent_to_mut(t);
            base.gamma.insert(d.name.clone(), t.clone());
            tys.push(t);
        }
        let locals: Vec<usize> =
            (0..ds.len()).filter(|i| matches!(tys[*i], Type::Class(Qualifier::Mut, _))).collect();
        let pos: BTreeMap<Name, usize> =
            locals.iter().enumerate().map(|(p, i)| (ds[*i].name.clone(), p)).collect();
        let fvs: Vec<BTreeSet<Name>> = ds.iter().map(|d| self.fv(&d.init)).collect();
        let fvb = self.fv(body);
        let lent_decl = |p: usize| ds[locals[p]].qualifier() == Some(Qualifier::Lent);

        // Every expression of the block, with its own binder for declarations.
        let scopes: Vec<BTreeSet<Name>> = (0..ds.len())
            .map(|k| {
                let mut sc = fvs[k].clone();
                sc.insert(ds[k].name.clone());
                sc
            })
            .chain(core::iter::once(fvb.clone()))
            .collect();

        let dedges: Vec<Vec<usize>> = scopes[..ds.len()]
            .iter()
            .map(|sc| sc.iter().filter_map(|y| pos.get(y).copied()).collect())
            .collect();
        let vb: Vec<usize> = fvb.iter().filter_map(|y| pos.get(y).copied()).collect();

        let mut uf: Vec<usize> = (0..locals.len()).collect();
        fn find(uf: &mut [usize], mut a: usize) -> usize {
            while uf[a] != a {
                uf[a] = uf[uf[a]];
                a = uf[a];
            }
            a
        }
        for ed in dedges.iter().chain(core::iter::once(&vb)) {
            for w in ed.windows(2) {
                let (a, b) = (find(&mut uf, w[0]), find(&mut uf, w[1]));
                uf[a] = b;
            }
        }
        let roots: Vec<usize> = (0..locals.len()).map(|p| find(&mut uf, p)).collect();
        // `mut` locals may stay mutable; `lent` ones need a lent group. Both
        // may join an outer group the component touches, or a fresh group
        // opened by a lent local of the component.
        let comp_scopes = |p: usize| -> Vec<&BTreeSet<Name>> {
            scopes
                .iter()
                .filter(|sc| sc.iter().any(|y| pos.get(y).is_some_and(|q| roots[*q] == roots[p])))
                .collect()
        };
        let mut cands: Vec<Vec<Cand>> = Vec::new();
        for p in 0..locals.len() {
            let mine = comp_scopes(p);
            let mut c = vec![if lent_decl(p) { Cand::New(p) } else { Cand::Mutable }];
            for (j, g) in base.lent.iter().enumerate() {
                if !base.blocked(g) && mine.iter().any(|sc| sc.iter().any(|y| g.vars.contains(y))) {
                    c.push(Cand::Group(j));
                }
            }
            for q in 0..locals.len() {
                if q != p && lent_decl(q) && roots[q] == roots[p] {
                    c.push(Cand::New(q));
                }
            }
            cands.push(c);
        }

        let body_root = vb.first().map(|p| roots[*p]);

        let mut assign: Vec<Cand> = cands.iter().map(|c| c[0]).collect();
        let ctxs = BlockCtx { base: &base, ds, locals: &locals, pos: &pos };

        // The body shape is needed even when no assignment works.
        let (shape, _) = self.infer(&ctxs.body(&assign), body)?;

        for (k, es) in dedges.iter().enumerate() {
            if es.is_empty() && !self.decl_ok(&ctxs, &tys, k, &assign)? {
                return Ok((shape, Vec::new()));
            }
        }

        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (p, r) in roots.iter().enumerate() {
            comps.entry(*r).or_default().push(p);
        }
        let decls_of = |r: usize| -> Vec<usize> {
            (0..ds.len()).filter(|k| dedges[*k].first().is_some_and(|p| roots[*p] == r)).collect()
        };
        for (r, members) in &comps {
            if Some(*r) == body_root {
                continue;
            }
            let decls = decls_of(*r);
            let found = self.solve_component(
                &ctxs,
                &tys,
                members,
                &cands,
                &decls,
                &mut assign,
                body,
                &mut |_, _| Ok(true),
            )?;
            if !found {
                return Ok((shape, Vec::new()));
            }
        }

        let full: u8 = if shape.is_some() { 1 << CAPSULE } else { 1 << INT };
        let mut mask = 0u8;
        let mut adds = Vec::new();
        let body_members = body_root.map(|r| comps[&r].clone()).unwrap_or_default();
        let decls = body_root.map(decls_of).unwrap_or_default();
        let mut on_solution = |me: &mut Self, assign: &[Cand]| -> Result<bool, TypeError> {
            let (_, bm) = me.infer(&ctxs.body(assign), body)?;
            let fresh = bm & !mask;
            if fresh != 0 {
                let snap: Vec<(Name, Choice)> = locals
                    .iter()
                    .zip(assign)
                    .map(|(i, a)| {
                        let ch = match a {
                            Cand::Mutable => Choice::Mutable,
                            Cand::Group(j) => Choice::Join(base.lent[*j].vars.clone()),
                            Cand::New(o) => Choice::Fresh(ds[locals[*o]].name.clone()),
                        };
                        (ds[*i].name.clone(), ch)
                    })
                    .collect();
                for b in bits(fresh) {
                    adds.push((b, Just::Struct(Some(snap.clone()))));
                }
                mask |= bm;
            }
            Ok(mask & full != 0)
        };
        self.solve_component(
            &ctxs,
            &tys,
            &body_members,
            &cands,
            &decls,
            &mut assign,
            body,
            &mut on_solution,
        )?;
        Ok((shape, adds))
    }

    /// Backtracking over the group choices of `members`, lent locals
    /// first so that joining a fresh group can be checked against its
    /// owner at once. Each declaration is checked as soon as its locals
    /// are assigned. `on_solution` returns true to stop; the result is
    /// whether some assignment satisfied every declaration.
    #[allow(clippy::too_many_arguments)]
    fn solve_component(
        &mut self,
        bc: &BlockCtx<'_>,
        tys: &[Type],
        members: &[usize],
        cands: &[Vec<Cand>],
        decls: &[usize],
        assign: &mut [Cand],
        at: &Expr,
        on_solution: &mut OnSolution<'_, Self>,
    ) -> Result<bool, TypeError> {
        let is_lent = |m: &usize| cands[*m][0] == Cand::New(*m);
        let lent = members.iter().filter(|m| is_lent(m)).count();
        if lent > self.cfg.max_lent_locals {
            return Err(TypeError::exhausted(
                at.span,
                format!("{} lent block locals in one component, limit {}", lent, self.cfg.max_lent_locals),
            ));
        }
        let mut order: Vec<usize> = members.iter().copied().filter(|m| is_lent(m)).collect();
        order.extend(members.iter().copied().filter(|m| !is_lent(m)));
        let rank: BTreeMap<usize, usize> = order.iter().enumerate().map(|(r, m)| (*m, r)).collect();
        let mut ready: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
        for &k in decls {
            let mut involved: Vec<usize> =
                self.fv(&bc.ds[k].init).iter().filter_map(|y| bc.pos.get(y).copied()).collect();
            involved.extend(bc.pos.get(&bc.ds[k].name).copied());
            if let Some(r) = involved.iter().filter_map(|p| rank.get(p)).max() {
                ready[*r].push(k);
            }
        }
        let mut found = false;
        self.backtrack(bc, tys, &order, 0, cands, &ready, assign, on_solution, &mut found)?;
        Ok(found)
    }

    /// Returns true once `on_solution` asks to stop.
    #[allow(clippy::too_many_arguments)]
    fn backtrack(
        &mut self,
        bc: &BlockCtx<'_>,
        tys: &[Type],
        order: &[usize],
        i: usize,
        cands: &[Vec<Cand>],
        ready: &[Vec<usize>],
        assign: &mut [Cand],
        on_solution: &mut OnSolution<'_, Self>,
        found: &mut bool,
    ) -> Result<bool, TypeError> {
        if i == order.len() {
            *found = true;
            return on_solution(self, assign);
        }
        let m = order[i];
        for c in &cands[m] {
            if matches!(c, Cand::New(o) if *o != m && assign[*o] != Cand::New(*o)) {
                continue;
            }
            self.work += 1;
            if self.work > self.cfg.budget {
                return Err(TypeError::exhausted(
                    bc.ds[bc.locals[m]].span,
                    format!("more than {} search steps", self.cfg.budget),
                ));
            }
            assign[m] = *c;
            let mut ok = true;
            for &k in &ready[i] {
                if !self.decl_ok(bc, tys, k, assign)? {
                    ok = false;
                    break;
                }
            }
            if ok && self.backtrack(bc, tys, order, i + 1, cands, ready, assign, on_solution, found)? {
                return Ok(true);
            }
        }
        assign[m] = cands[m][0];
        Ok(false)
    }

    fn decl_ok(
        &mut self,
        bc: &BlockCtx<'_>,
        tys: &[Type],
        k: usize,
        assign: &[Cand],
    ) -> Result<bool, TypeError> {
        let c = bc.decl(k, assign);
        let (_, m) = self.infer(&c, &bc.ds[k].init)?;
        Ok(has(m, bit_of(&tys[k])))
    }

    /// Rebuilds the recorded derivation of type bit `b` for `e` in `full`.
    pub(crate) fn build(&mut self, full: &TypeContext, e: &Expr, b: usize) -> Result<Derivation, TypeError> {
        let en = self.entry_full(full, e)?;
        let internal = || TypeError::ill(e.span, None, String::from("internal: missing justification"));
        let just = en.just[b].clone().ok_or_else(internal)?;
        let ty = type_of(&en.shape, b);
        let node = |rule: Rule, premises: Vec<Derivation>| Derivation {
            rule,
            context: full.clone(),
            expr: e.clone(),
            ty: ty.clone(),
            premises,
        };
        Ok(match just {
            Just::Sub(b0) => node(Rule::Sub, vec![self.build(full, e, b0)?]),
            Just::Capsule => node(Rule::Capsule, vec![self.build(&full.recover_capsule(), e, MUT)?]),
            Just::Imm => node(Rule::Imm, vec![self.build(&full.recover_imm(), e, READ)?]),
            Just::Unrst => node(Rule::Unrst, vec![self.build(&full.unrestrict(), e, b)?]),
            Just::Swap(g, b0) => {
                let member = g.as_ref().and_then(|g| g.iter().next());
                let swapped = full.swap(member).ok_or_else(internal)?;
                node(Rule::Swap, vec![self.build(&swapped, e, b0)?])
            }
            Just::Struct(assign) => self.build_struct(full, e, b, assign, node)?,
        })
    }

    fn build_struct(
        &mut self,
        full: &TypeContext,
        e: &Expr,
        b: usize,
        assign: Option<Vec<(Name, Choice)>>,
        node: impl Fn(Rule, Vec<Derivation>) -> Derivation,
    ) -> Result<Derivation, TypeError> {
        Ok(match &e.kind {
            ExprKind::Var(_) => node(Rule::Var, Vec::new()),
            ExprKind::Int(_) => node(Rule::Int, Vec::new()),
            ExprKind::Plus(l, r) => {
                node(Rule::Plus, vec![self.build(full, l, INT)?, self.build(full, r, INT)?])
            }
            ExprKind::Field(r, f) => {
                let rc = self.entry_full(full, r)?;
                let c = rc.shape.clone().unwrap_or_else(|| Name::new("?"));
                let fd = self.field(&c, f, e)?;
                let rb = match fd.ty {
                    Type::Class(Qualifier::Mut, _) => b,
                    _ => bits(rc.mask).next().unwrap_or(READ),
                };
                node(Rule::FieldAccess, vec![self.build(full, r, rb)?])
            }
            ExprKind::Assign(r, f, rhs) => {
                let rc = self.entry_full(full, r)?;
                let c = rc.shape.clone().unwrap_or_else(|| Name::new("?"));
                let fd = self.field(&c, f, e)?;
                node(
                    Rule::FieldAssign,
                    vec![self.build(full, r, MUT)?, self.build(full, rhs, bit_of(&fd.ty))?],
                )
            }
            ExprKind::Call(r, m, args) => {
                let rc = self.entry_full(full, r)?;
                let c = rc.shape.clone().unwrap_or_else(|| Name::new("?"));
                let (recv, params, _) = self.method_sig(&c, m, e)?;
                let mut ps = vec![self.build(full, r, recv.map_or(READ, |q| q as usize))?];
                for (a, t) in args.iter().zip(&params) {
                    ps.push(self.build(full, a, bit_of(t))?);
                }
                node(Rule::MethCall, ps)
            }
            ExprKind::StaticCall(c, m, args) => {
                let (_, params, _) = self.method_sig(c, m, e)?;
                let mut ps = Vec::new();
                for (a, t) in args.iter().zip(&params) {
                    ps.push(self.build(full, a, bit_of(t))?);
                }
                node(Rule::StaticCall, ps)
            }
            ExprKind::New(c, args) => {
                let want: Vec<Type> = self.ct.fields(c).unwrap_or(&[]).iter().map(|f| f.ty.clone()).collect();
                let mut ps = Vec::new();
                for (a, t) in args.iter().zip(&want) {
                    ps.push(self.build(full, a, bit_of(t))?);
                }
                node(Rule::New, ps)
            }
            ExprKind::Block(ds, body) => {
                let assign = assign.unwrap_or_default();
                let bctx = block_body_context(full, ds, &assign)
                    .ok_or_else(|| TypeError::ill(e.span, None, String::from("internal: lost group")))?;
                let mut ps = Vec::new();
                for d in ds {
                    let t = lent_to_mut(d.ty.as_ref().unwrap_or(&Type::Int));
                    let dctx = if bctx.is_mut(&d.name) && bctx.in_group(&d.name).is_some() {
                        bctx.swap(Some(&d.name))
                            .ok_or_else(|| TypeError::ill(d.span, None, String::from("internal: swap")))?
                    } else {
                        bctx.clone()
                    };
                    ps.push(self.build(&dctx, &d.init, bit_of(&t))?);
                }
                ps.push(self.build(&bctx, body, b)?);
                node(Rule::Block, ps)
            }
        })
    }
}

/// The context in which a block body is checked, given group choices for
/// its `mut` locals. Missing `mut` locals stay mutable, missing `lent`
/// ones get a group of their own.
pub(crate) fn block_body_context(
    full: &TypeContext,
    ds: &[Decl],
    assign: &[(Name, Choice)],
) -> Option<TypeContext> {
    let names: BTreeSet<Name> = ds.iter().map(|d| d.name.clone()).collect();
    let mut c = full.without(&names);
    for d in ds {
        c.gamma.insert(d.name.clone(), lent_to_mut(d.ty.as_ref().unwrap_or(&Type::Int)));
    }
    for d in ds {
        if !c.is_mut(&d.name) {
            continue;
        }
        let ch = match assign.iter().find(|(x, _)| x == &d.name) {
            Some((_, ch)) => ch.clone(),
            None if d.qualifier() == Some(Qualifier::Lent) => Choice::Fresh(d.name.clone()),
            None => Choice::Mutable,
        };
        match ch {
            Choice::Mutable => {}
            Choice::Join(vars) => {
                let gi = c.in_group(vars.iter().next()?)?;
                c.groups[gi].insert(d.name.clone());
            }
            Choice::Fresh(o) => match c.in_group(&o) {
                Some(gi) => {
                    c.groups[gi].insert(d.name.clone());
                }
                None => c.groups.push([o, d.name.clone()].into_iter().collect()),
            },
        }
    }
    Some(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cand {
    Mutable,
    /// Index into the lent groups of the enclosing context.
    Group(usize),
    /// The fresh group opened by the local at this position.
    New(usize),
}

/// Called on each complete group assignment; `Ok(true)` stops the search.
/// The body shape and per-declaration derivations of a block.
type BlockGrouping = (Option<Name>, Vec<(usize, Just)>);

type OnSolution<'f, C> = dyn FnMut(&mut C, &[Cand]) -> Result<bool, TypeError> + 'f;

struct BlockCtx<'b> {
    base: &'b ICtx,
    ds: &'b [Decl],
    locals: &'b [usize],
    pos: &'b BTreeMap<Name, usize>,
}

impl BlockCtx<'_> {
    /// Unsorted extended context and the group index of each local.
    fn extended(&self, assign: &[Cand]) -> (ICtx, Vec<Option<usize>>) {
        let mut c = self.base.clone();
        let mut gi = vec![None; assign.len()];
        let mut opened: BTreeMap<usize, usize> = BTreeMap::new();
        for (p, a) in assign.iter().enumerate() {
            let x = self.ds[self.locals[p]].name.clone();
            match a {
                Cand::Mutable => {
                    c.mutable.insert(x);
                }
                Cand::Group(j) => {
                    c.lent[*j].vars.insert(x);
                    gi[p] = Some(*j);
                }
                Cand::New(o) => {
                    let idx = *opened.entry(*o).or_insert_with(|| {
                        c.lent.push(Group { vars: BTreeSet::new(), hidden: BTreeSet::new() });
                        c.lent.len() - 1
                    });
                    c.lent[idx].vars.insert(x);
                    gi[p] = Some(idx);
                }
            }
        }
        (c, gi)
    }

    fn body(&self, assign: &[Cand]) -> ICtx {
        self.extended(assign).0.normalized()
    }

    fn decl(&self, k: usize, assign: &[Cand]) -> ICtx {
        let (c, gi) = self.extended(assign);
        match self.pos.get(&self.ds[k].name).and_then(|p| gi[*p]) {
            Some(j) => c.swap(j),
            None => c.normalized(),
        }
    }
}

fn minimal_bits(mask: u8) -> Vec<usize> {
    bits(mask).filter(|b| !bits(mask).any(|o| o != *b && below(o, *b))).collect()
}

fn show_shape(s: &Option<Name>) -> String {
    match s {
        None => String::from("int"),
        Some(c) => format!("{}", c),
    }
}
