//! Seeded random programs biased towards well-typedness, a shrinker, and
//! an exhaustive enumerator of small terms.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::syntax::{
    free_vars, validate_wellformedness, ClassDef, ClassTable, Decl, Expr, ExprKind, FieldDecl, MethodDef,
    Name, Param, Program, Qualifier, Receiver, Span, Type,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub seed: u64,
    pub max_classes: usize,
    pub max_fields: usize,
    pub max_depth: usize,
    pub max_block_decls: usize,
    /// Declared qualifiers of block locals.
    pub qualifier_weights: BTreeMap<Qualifier, u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GenConfigError {
    ZeroCount(&'static str),
    NoWeight,
}

impl fmt::Display for GenConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenConfigError::ZeroCount(what) => write!(f, "{} must be at least 1", what),
            GenConfigError::NoWeight => f.write_str("qualifier weights are all zero"),
        }
    }
}

impl GenConfig {
    pub fn new(seed: u64) -> Self {
        GenConfig {
            seed,
            max_classes: 3,
            max_fields: 3,
            max_depth: 4,
            max_block_decls: 4,
            qualifier_weights: BTreeMap::from([
                (Qualifier::Mut, 6),
                (Qualifier::Imm, 3),
                (Qualifier::Capsule, 2),
                (Qualifier::Lent, 1),
                (Qualifier::Read, 1),
            ]),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), GenConfigError> {
        for (n, what) in [
            (self.max_classes, "max_classes"),
            (self.max_fields, "max_fields"),
            (self.max_depth, "max_depth"),
            (self.max_block_decls, "max_block_decls"),
        ] {
            if n == 0 {
                return Err(GenConfigError::ZeroCount(what));
            }
        }
        if self.qualifier_weights.values().all(|w| *w == 0) {
            return Err(GenConfigError::NoWeight);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Entry {
    name: Name,
    ty: Type,
    /// Capsule references are linear.
    used: bool,
}

struct Env {
    entries: Vec<Entry>,
    /// Entries below this index are visible only at `imm`, `capsule` and
    /// `int` types: the context of a recovered expression.
    floor: usize,
}

impl Env {
    fn visible(&self) -> impl Iterator<Item = (usize, &Entry)> {
        self.entries.iter().enumerate().filter(move |(i, e)| {
            !e.used
                && (*i >= self.floor
                    || matches!(e.ty, Type::Int | Type::Class(Qualifier::Imm | Qualifier::Capsule, _)))
        })
    }

    fn vars(&self, pred: impl Fn(&Type) -> bool) -> Vec<usize> {
        self.visible().filter(|(_, e)| pred(&e.ty)).map(|(i, _)| i).collect()
    }

    /// Reference to entry `i`, consuming it if it is a capsule.
    fn take(&mut self, i: usize) -> Expr {
        let e = &mut self.entries[i];
        if e.ty.qualifier() == Some(Qualifier::Capsule) {
            e.used = true;
        }
        Expr::var(e.name.as_str())
    }
}

struct Gen<'c> {
    rng: ChaCha8Rng,
    cfg: &'c GenConfig,
    classes: Vec<ClassDef>,
    next: usize,
    /// Calls are disabled inside method bodies, so there is no recursion.
    calls: bool,
}

fn cname(i: usize) -> Name {
    Name::new(&format!("C{}", i))
}

fn index(c: &Name) -> usize {
    c.as_str()[1..].parse().unwrap_or(0)
}

impl Gen<'_> {
    fn fresh(&mut self, base: &str) -> Name {
        self.next += 1;
        Name::new(&format!("{}{}", base, self.next))
    }

    fn pick<T: Copy>(&mut self, opts: &[(T, u32)]) -> T {
        opts.choose_weighted(&mut self.rng, |o| o.1).map(|o| o.0).unwrap_or(opts[0].0)
    }

    fn class_table(&mut self) {
        let k = self.rng.random_range(1..=self.cfg.max_classes);
        for i in 0..k {
            let n = self.rng.random_range(1..=self.cfg.max_fields);
            let mut fields = Vec::new();
            for j in 0..n {
                let ty = match self.rng.random_range(0..3) {
                    0 => Type::Int,
                    1 => Type::Class(Qualifier::Mut, cname(self.rng.random_range(0..=i))),
                    _ if i > 0 => Type::Class(Qualifier::Imm, cname(self.rng.random_range(0..i))),
                    _ => Type::Class(Qualifier::Mut, cname(i)),
                };
                fields.push(FieldDecl { ty, name: Name::new(&format!("f{}", j)), span: Span::default() });
            }
            self.classes.push(ClassDef {
                name: cname(i),
                fields,
                methods: Vec::new(),
                span: Span::default(),
            });
        }
        self.calls = false;
        for i in 0..k {
            for j in 0..self.rng.random_range(0..=2usize) {
                let m = self.method(i, j);
                self.classes[i].methods.push(m);
            }
        }
        self.calls = true;
    }

    fn random_class(&mut self) -> Name {
        cname(self.rng.random_range(0..self.classes.len()))
    }

    fn method(&mut self, i: usize, j: usize) -> MethodDef {
        let receiver = self.pick(&[
            (Receiver::Qual(Qualifier::Mut), 3),
            (Receiver::Qual(Qualifier::Read), 3),
            (Receiver::Qual(Qualifier::Imm), 1),
            (Receiver::Static, 1),
        ]);
        let mut env = Env { entries: Vec::new(), floor: 0 };
        if let Receiver::Qual(q) = receiver {
            env.entries.push(Entry { name: Name::new("this"), ty: Type::Class(q, cname(i)), used: false });
        }
        let mut params = Vec::new();
        for _ in 0..self.rng.random_range(0..=2usize) {
            let q = self.pick(&[(Some(Qualifier::Mut), 2), (Some(Qualifier::Imm), 2), (None, 1)]);
            let ty = match q {
                Some(q) => Type::Class(q, self.random_class()),
                None => Type::Int,
            };
            let name = self.fresh("p");
            env.entries.push(Entry { name: name.clone(), ty: ty.clone(), used: false });
            params.push(Param { ty, name });
        }
        let ret = match self.pick(&[
            (Some(Qualifier::Mut), 3),
            (Some(Qualifier::Imm), 2),
            (Some(Qualifier::Capsule), 1),
            (Some(Qualifier::Read), 1),
            (None, 1),
        ]) {
            Some(q) => Type::Class(q, self.random_class()),
            None => Type::Int,
        };
        let depth = self.cfg.max_depth.min(3);
        let body = self.expr(&ret, &mut env, depth);
        MethodDef { ret, name: Name::new(&format!("m{}", j)), receiver, params, body, span: Span::default() }
    }

    fn fields(&self, c: &Name) -> Vec<FieldDecl> {
        self.classes[index(c)].fields.clone()
    }

    fn expr(&mut self, ty: &Type, env: &mut Env, depth: usize) -> Expr {
        match ty {
            Type::Int => self.int_expr(env, depth),
            Type::Class(q, c) => match q {
                Qualifier::Mut => self.mut_expr(c, env, depth),
                Qualifier::Imm => self.imm_expr(c, env, depth),
                Qualifier::Capsule => {
                    let caps = env.vars(|t| t == ty);
                    if !caps.is_empty() && self.rng.random_bool(0.2) {
                        let i = *caps.choose(&mut self.rng).unwrap();
                        return env.take(i);
                    }
                    self.recovered(c, env, depth)
                }
                Qualifier::Lent => {
                    let lents = env.vars(|t| t == ty);
                    if !lents.is_empty() && self.rng.random_bool(0.4) {
                        let i = *lents.choose(&mut self.rng).unwrap();
                        return env.take(i);
                    }
                    self.mut_expr(c, env, depth)
                }
                Qualifier::Read => {
                    let any =
                        env.vars(|t| t.class_name() == Some(c) && t.qualifier() != Some(Qualifier::Capsule));
                    if !any.is_empty() && self.rng.random_bool(0.5) {
                        let i = *any.choose(&mut self.rng).unwrap();
                        return env.take(i);
                    }
                    if self.rng.random_bool(0.5) {
                        self.imm_expr(c, env, depth)
                    } else {
                        self.mut_expr(c, env, depth)
                    }
                }
            },
        }
    }

    fn int_expr(&mut self, env: &mut Env, depth: usize) -> Expr {
        let ints = env.vars(|t| *t == Type::Int);
        let reads = self.field_reads(env, |t| *t == Type::Int);
        let choice = self.pick(&[
            (0, 3),
            (1, if ints.is_empty() { 0 } else { 2 }),
            (2, if reads.is_empty() { 0 } else { 3 }),
            (3, if depth > 1 { 1 } else { 0 }),
        ]);
        match choice {
            1 => {
                let i = *ints.choose(&mut self.rng).unwrap();
                env.take(i)
            }
            2 => {
                let (i, f) = reads.choose(&mut self.rng).unwrap().clone();
                Expr::field(env.take(i), f.as_str())
            }
            3 => {
                let a = self.int_expr(env, depth - 1);
                let b = self.int_expr(env, depth - 1);
                Expr::plus(a, b)
            }
            _ => Expr::int(self.rng.random_range(0..10)),
        }
    }

    /// Visible non-capsule references with a field satisfying `want`.
    fn field_reads(&self, env: &Env, want: impl Fn(&Type) -> bool) -> Vec<(usize, Name)> {
        let mut out = Vec::new();
        for (i, e) in env.visible() {
            let Type::Class(q, c) = &e.ty else { continue };
            if *q == Qualifier::Capsule {
                continue;
            }
            for f in &self.classes[index(c)].fields {
                if want(&f.ty) {
                    out.push((i, f.name.clone()));
                }
            }
        }
        out
    }

    /// `mut` receivers with a field of type `want`, as assignment targets.
    fn assign_targets(&self, env: &Env, want: &Type) -> Vec<(usize, Name)> {
        let mut out = Vec::new();
        for (i, e) in env.visible() {
            let Type::Class(Qualifier::Mut, c) = &e.ty else { continue };
            for f in &self.classes[index(c)].fields {
                if f.ty == *want {
                    out.push((i, f.name.clone()));
                }
            }
        }
        out
    }

    /// Methods whose result is usable at `ty`.
    fn callables(&self, env: &Env, ty: &Type) -> Vec<(Option<usize>, Name, MethodDef)> {
        if !self.calls {
            return Vec::new();
        }
        let mut out = Vec::new();
        for cd in &self.classes {
            for m in &cd.methods {
                if !crate::syntax::subtype(&m.ret, ty) {
                    continue;
                }
                match m.receiver {
                    Receiver::Static => out.push((None, cd.name.clone(), m.clone())),
                    Receiver::Qual(q) => {
                        for (i, e) in env.visible() {
                            if let Type::Class(eq, ec) = &e.ty {
                                if *ec == cd.name && *eq != Qualifier::Capsule && eq.leq(q) {
                                    out.push((Some(i), cd.name.clone(), m.clone()));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn call(&mut self, env: &mut Env, depth: usize, pick: (Option<usize>, Name, MethodDef)) -> Expr {
        let (recv, c, m) = pick;
        let args: Vec<Expr> = m.params.iter().map(|p| self.expr(&p.ty, env, depth - 1)).collect();
        match recv {
            Some(i) => Expr::call(env.take(i), m.name.as_str(), args),
            None => Expr::new(ExprKind::StaticCall(c, m.name.clone(), args)),
        }
    }

    fn mut_expr(&mut self, c: &Name, env: &mut Env, depth: usize) -> Expr {
        let ty = Type::Class(Qualifier::Mut, c.clone());
        let vars = env.vars(|t| *t == ty);
        if depth <= 1 {
            if !vars.is_empty() && self.rng.random_bool(0.8) {
                let i = *vars.choose(&mut self.rng).unwrap();
                return env.take(i);
            }
            return self.closed(c);
        }
        let reads = self.field_reads(env, |t| *t == ty);
        let reads: Vec<(usize, Name)> = reads
            .into_iter()
            .filter(|(i, _)| env.entries[*i].ty.qualifier() == Some(Qualifier::Mut))
            .collect();
        let targets = self.assign_targets(env, &ty);
        let calls = self.callables(env, &ty);
        let choice = self.pick(&[
            (0, if vars.is_empty() { 0 } else { 4 }),
            (1, if reads.is_empty() { 0 } else { 2 }),
            (2, 2),
            (3, 3),
            (4, if targets.is_empty() { 0 } else { 2 }),
            (5, if calls.is_empty() { 0 } else { 2 }),
        ]);
        match choice {
            0 => {
                let i = *vars.choose(&mut self.rng).unwrap();
                env.take(i)
            }
            1 => {
                let (i, f) = reads.choose(&mut self.rng).unwrap().clone();
                Expr::field(env.take(i), f.as_str())
            }
            2 => self.new_obj(c, env, depth),
            4 => {
                let (i, f) = targets.choose(&mut self.rng).unwrap().clone();
                let rhs = self.expr(&ty, env, depth - 1);
                Expr::assign(env.take(i), f.as_str(), rhs)
            }
            5 => {
                let k = self.rng.random_range(0..calls.len());
                let pick = calls[k].clone();
                self.call(env, depth, pick)
            }
            _ => self.block(&ty, env, depth),
        }
    }

    fn imm_expr(&mut self, c: &Name, env: &mut Env, depth: usize) -> Expr {
        let ty = Type::Class(Qualifier::Imm, c.clone());
        let vars = env.vars(|t| *t == ty || *t == Type::Class(Qualifier::Capsule, c.clone()));
        let reads = self.field_reads(env, |t| *t == ty);
        let calls = self.callables(env, &ty);
        let choice = self.pick(&[
            (0, if vars.is_empty() { 0 } else { 4 }),
            (1, if reads.is_empty() { 0 } else { 2 }),
            (2, 3),
            (3, if calls.is_empty() || depth <= 1 { 0 } else { 1 }),
        ]);
        match choice {
            0 => {
                let i = *vars.choose(&mut self.rng).unwrap();
                env.take(i)
            }
            1 => {
                let (i, f) = reads.choose(&mut self.rng).unwrap().clone();
                Expr::field(env.take(i), f.as_str())
            }
            3 => {
                let k = self.rng.random_range(0..calls.len());
                let pick = calls[k].clone();
                self.call(env, depth, pick)
            }
            _ => self.recovered(c, env, depth),
        }
    }

    /// A `mut` expression over the `imm` part of the context only.
    fn recovered(&mut self, c: &Name, env: &mut Env, depth: usize) -> Expr {
        let floor = env.floor;
        env.floor = env.entries.len();
        let e = self.mut_expr(c, env, depth);
        env.floor = floor;
        e
    }

    fn new_obj(&mut self, c: &Name, env: &mut Env, depth: usize) -> Expr {
        let args = self.fields(c).iter().map(|f| self.expr(&f.ty, env, depth - 1)).collect();
        Expr::new(ExprKind::New(c.clone(), args))
    }

    /// `{store; y}`: a closed object graph rooted at a `C`, built only from
    /// literals and self references.
    fn closed(&mut self, c: &Name) -> Expr {
        let mut ds = Vec::new();
        let y = self.closed_store(c, &mut ds);
        Expr::block(ds, Expr::var(y.as_str()))
    }

    fn closed_store(&mut self, c: &Name, ds: &mut Vec<Decl>) -> Name {
        let y = self.fresh("o");
        let mut args = Vec::new();
        for f in self.fields(c) {
            args.push(match &f.ty {
                Type::Int => Expr::int(self.rng.random_range(0..10)),
                Type::Class(Qualifier::Mut, d) if d == c => Expr::var(y.as_str()),
                Type::Class(Qualifier::Mut, d) => Expr::var(self.closed_store(d, ds).as_str()),
                Type::Class(_, d) => {
                    let inner = self.closed(d);
                    let z = self.fresh("o");
                    ds.push(Decl::new(Type::Class(Qualifier::Imm, d.clone()), z.as_str(), inner));
                    Expr::var(z.as_str())
                }
            });
        }
        ds.push(Decl::new(
            Type::Class(Qualifier::Mut, c.clone()),
            y.as_str(),
            Expr::new(ExprKind::New(c.clone(), args)),
        ));
        y
    }

    fn block(&mut self, ty: &Type, env: &mut Env, depth: usize) -> Expr {
        let mark = env.entries.len();
        let n = self.rng.random_range(1..=self.cfg.max_block_decls);
        let weights: Vec<(Qualifier, u32)> =
            self.cfg.qualifier_weights.iter().map(|(q, w)| (*q, *w)).collect();
        let mut ds = Vec::new();
        for _ in 0..n {
            let dty = if self.rng.random_bool(0.15) {
                Type::Int
            } else {
                Type::Class(self.pick(&weights), self.random_class())
            };
            let x = self.fresh("x");
            let init = match &dty {
                Type::Class(Qualifier::Mut, c) if self.rng.random_bool(0.3) => self.self_ref(&x, c, env),
                _ => None,
            };
            let init = match init {
                Some(e) => e,
                None => self.expr(&dty, env, depth - 1),
            };
            ds.push(Decl::new(dty.clone(), x.as_str(), init));
            env.entries.push(Entry { name: x, ty: dty, used: false });
        }
        let body = self.expr(ty, env, depth - 1);
        env.entries.truncate(mark);
        Expr::block(ds, body)
    }

    /// `new C(..x..)` with atomic arguments, where `x` is the binder being
    /// declared; `None` when some field has no visible atom.
    fn self_ref(&mut self, x: &Name, c: &Name, env: &mut Env) -> Option<Expr> {
        let mut args = Vec::new();
        let mut selfish = false;
        for f in self.fields(c) {
            let arg = match &f.ty {
                Type::Int => Expr::int(self.rng.random_range(0..10)),
                Type::Class(Qualifier::Mut, d) if d == c && (self.rng.random_bool(0.7) || !selfish) => {
                    selfish = true;
                    Expr::var(x.as_str())
                }
                t => {
                    let vs = env.vars(|u| u == t && u.qualifier() != Some(Qualifier::Capsule));
                    let i = *vs.choose(&mut self.rng)?;
                    env.take(i)
                }
            };
            args.push(arg);
        }
        selfish.then(|| Expr::new(ExprKind::New(c.clone(), args)))
    }
}

/// Deterministic in `cfg`. The result is well-formed; invalid counts are
/// treated as 1 and all-zero weights as `mut` only.
pub fn gen_program(cfg: &GenConfig) -> Program {
    let mut cfg = cfg.clone();
    cfg.max_classes = cfg.max_classes.max(1);
    cfg.max_fields = cfg.max_fields.max(1);
    cfg.max_depth = cfg.max_depth.max(1);
    cfg.max_block_decls = cfg.max_block_decls.max(1);
    if cfg.qualifier_weights.values().all(|w| *w == 0) {
        cfg.qualifier_weights = BTreeMap::from([(Qualifier::Mut, 1)]);
    }
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        cfg: &cfg,
        classes: Vec::new(),
        next: 0,
        calls: true,
    };
    g.class_table();
    let c = g.random_class();
    let goal = match g.rng.random_range(0..4) {
        0 => Type::Class(Qualifier::Imm, c),
        1 => Type::Class(Qualifier::Capsule, c),
        _ => Type::Class(Qualifier::Mut, c),
    };
    let mut env = Env { entries: Vec::new(), floor: 0 };
    let depth = cfg.max_depth.max(2);
    let main = g.block(&goal, &mut env, depth);
    let classes = ClassTable::from_classes(g.classes).expect("generated class table is valid");
    Program { classes, main }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ShrinkError {
    /// The predicate does not hold on the input.
    NotFailing,
}

impl fmt::Display for ShrinkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("shrink needs a program that satisfies the predicate")
    }
}

fn decls_of(e: &Expr) -> usize {
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => 0,
        ExprKind::Field(a, _) => decls_of(a),
        ExprKind::Call(a, _, args) => decls_of(a) + args.iter().map(decls_of).sum::<usize>(),
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => args.iter().map(decls_of).sum(),
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => decls_of(a) + decls_of(b),
        ExprKind::Block(ds, b) => {
            ds.len() + decls_of(b) + ds.iter().map(|d| decls_of(&d.init)).sum::<usize>()
        }
    }
}

/// Number of declarations, counting the main expression only.
pub fn declaration_count(p: &Program) -> usize {
    decls_of(&p.main)
}

/// One-step smaller variants of `e`; `scope` lists the references bound
/// around it.
fn variants(e: &Expr, scope: &mut Vec<Name>) -> Vec<Expr> {
    let mut out = Vec::new();
    if !e.is_atom() {
        for x in scope.iter() {
            out.push(Expr::var(x.as_str()));
        }
        out.push(Expr::int(0));
    }
    let rebuild = |k: ExprKind| Expr::with_span(k, e.span);
    match &e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => {}
        ExprKind::Field(a, f) => {
            for v in variants(a, scope) {
                out.push(rebuild(ExprKind::Field(alloc::boxed::Box::new(v), f.clone())));
            }
        }
        ExprKind::Call(a, m, args) => {
            for v in variants(a, scope) {
                out.push(rebuild(ExprKind::Call(alloc::boxed::Box::new(v), m.clone(), args.clone())));
            }
            for (i, arg) in args.iter().enumerate() {
                for v in variants(arg, scope) {
                    let mut args = args.clone();
                    args[i] = v;
                    out.push(rebuild(ExprKind::Call(a.clone(), m.clone(), args)));
                }
            }
        }
        ExprKind::StaticCall(c, _, args) | ExprKind::New(c, args) => {
            for (i, arg) in args.iter().enumerate() {
                for v in variants(arg, scope) {
                    let mut args = args.clone();
                    args[i] = v;
                    out.push(rebuild(match &e.kind {
                        ExprKind::New(..) => ExprKind::New(c.clone(), args),
                        _ => ExprKind::StaticCall(c.clone(), m_of(&e.kind), args),
                    }));
                }
            }
        }
        ExprKind::Assign(a, f, b) => {
            out.push((**b).clone());
            for v in variants(a, scope) {
                out.push(rebuild(ExprKind::Assign(alloc::boxed::Box::new(v), f.clone(), b.clone())));
            }
            for v in variants(b, scope) {
                out.push(rebuild(ExprKind::Assign(a.clone(), f.clone(), alloc::boxed::Box::new(v))));
            }
        }
        ExprKind::Plus(a, b) => {
            out.push((**a).clone());
            out.push((**b).clone());
            for v in variants(a, scope) {
                out.push(rebuild(ExprKind::Plus(alloc::boxed::Box::new(v), b.clone())));
            }
            for v in variants(b, scope) {
                out.push(rebuild(ExprKind::Plus(a.clone(), alloc::boxed::Box::new(v))));
            }
        }
        ExprKind::Block(ds, body) => {
            // Inline a block: `{e}` and `{T x = e; x}` become `e`.
            if ds.is_empty() {
                out.push((**body).clone());
            }
            if let [d] = ds.as_slice() {
                if body.as_var() == Some(&d.name) {
                    out.push(d.init.clone());
                }
            }
            // Drop a declaration nobody refers to.
            for i in 0..ds.len() {
                let x = &ds[i].name;
                let used = free_vars(body).contains(x)
                    || ds.iter().enumerate().any(|(j, d)| j != i && free_vars(&d.init).contains(x));
                if !used {
                    let mut ds = ds.clone();
                    ds.remove(i);
                    out.push(rebuild(ExprKind::Block(ds, body.clone())));
                }
            }
            let mark = scope.len();
            scope.extend(ds.iter().map(|d| d.name.clone()));
            for i in 0..ds.len() {
                for v in variants(&ds[i].init, scope) {
                    let mut ds = ds.clone();
                    ds[i].init = v;
                    out.push(rebuild(ExprKind::Block(ds, body.clone())));
                }
            }
            for v in variants(body, scope) {
                out.push(rebuild(ExprKind::Block(ds.clone(), alloc::boxed::Box::new(v))));
            }
            scope.truncate(mark);
        }
    }
    out
}

fn m_of(k: &ExprKind) -> Name {
    match k {
        ExprKind::StaticCall(_, m, _) => m.clone(),
        _ => unreachable!("only called on static calls"),
    }
}

/// Greedy shrinking of the main expression: repeatedly takes the first
/// strictly smaller well-formed variant that still satisfies `pred`.
pub fn shrink(p: &Program, mut pred: impl FnMut(&Program) -> bool) -> Result<Program, ShrinkError> {
    if !pred(p) {
        return Err(ShrinkError::NotFailing);
    }
    let mut cur = p.clone();
    loop {
        let size = cur.main.size();
        let mut next = None;
        for v in variants(&cur.main, &mut Vec::new()) {
            if v.size() >= size {
                continue;
            }
            let cand = Program { classes: cur.classes.clone(), main: v };
            if validate_wellformedness(&cand).is_empty() && pred(&cand) {
                next = Some(cand);
                break;
            }
        }
        match next {
            Some(n) => cur = n,
            None => return Ok(cur),
        }
    }
}

/// Class table used by [`enumerate_terms`]: `class C { mut C f; }` with a
/// method `m` and a static method `s`.
pub fn small_class_table() -> ClassTable {
    crate::parser::parse(
        "class C { mut C f; mut C m(mut, mut C a) { return a; } static mut C s(mut C a) { return a; } } {0}",
    )
    .expect("fixed class table parses")
    .classes
}

/// Every expression of depth at most `depth` over references `x`, `y`,
/// the literal `0`, class `C`, field `f`, methods `m`/`s` and one- or
/// two-declaration blocks.
pub fn enumerate_terms(depth: usize) -> Vec<Expr> {
    let mut levels: Vec<Vec<Expr>> = vec![Vec::new()];
    let atoms = vec![Expr::var("x"), Expr::var("y"), Expr::int(0)];
    for d in 1..=depth {
        let mut here = Vec::new();
        if d == 1 {
            here = atoms.clone();
        } else {
            let below: Vec<Expr> = levels[1..d].iter().flatten().cloned().collect();
            let prev = &levels[d - 1];
            // Products where at least one child has depth exactly d-1.
            let pairs = |out: &mut Vec<(Expr, Expr)>| {
                for a in &below {
                    for b in &below {
                        if a.depth() == d - 1 || b.depth() == d - 1 {
                            out.push((a.clone(), b.clone()));
                        }
                    }
                }
            };
            for a in prev {
                here.push(Expr::field(a.clone(), "f"));
                here.push(Expr::new_obj("C", vec![a.clone()]));
                here.push(Expr::new(ExprKind::StaticCall(Name::new("C"), Name::new("s"), vec![a.clone()])));
            }
            let mut ps = Vec::new();
            pairs(&mut ps);
            for (a, b) in &ps {
                here.push(Expr::assign(a.clone(), "f", b.clone()));
                here.push(Expr::plus(a.clone(), b.clone()));
                here.push(Expr::call(a.clone(), "m", vec![b.clone()]));
                for q in [Qualifier::Mut, Qualifier::Imm, Qualifier::Capsule] {
                    here.push(Expr::block(vec![Decl::new(Type::class(q, "C"), "x", a.clone())], b.clone()));
                }
            }
            if d == 2 {
                for a in &atoms {
                    for b in &atoms {
                        for c in &atoms {
                            let ds = vec![
                                Decl::new(Type::class(Qualifier::Mut, "C"), "x", a.clone()),
                                Decl::new(Type::class(Qualifier::Mut, "C"), "y", b.clone()),
                            ];
                            here.push(Expr::block(ds, c.clone()));
                        }
                    }
                }
            }
            if d == 3 {
                let twos: Vec<Expr> = prev.iter().filter(|e| e.size() <= 3).cloned().collect();
                for a in &twos {
                    for b in &atoms {
                        let ds = vec![
                            Decl::new(
                                Type::class(Qualifier::Mut, "C"),
                                "x",
                                Expr::new_obj("C", vec![Expr::var("y")]),
                            ),
                            Decl::new(Type::class(Qualifier::Mut, "C"), "y", a.clone()),
                        ];
                        here.push(Expr::block(ds, b.clone()));
                    }
                }
            }
        }
        levels.push(here);
    }
    levels.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, print_program};

    #[test]
    fn same_seed_same_program() {
        let cfg = GenConfig::new(1);
        assert_eq!(print_program(&gen_program(&cfg)), print_program(&gen_program(&cfg)));
        assert_ne!(print_program(&gen_program(&cfg)), print_program(&gen_program(&cfg.with_seed(2))));
    }

    #[test]
    fn fields_are_mut_imm_or_int() {
        for s in 0..200 {
            let p = gen_program(&GenConfig::new(s));
            for c in p.classes.iter() {
                for f in &c.fields {
                    let q = f.ty.qualifier();
                    assert!(matches!(q, None | Some(Qualifier::Mut) | Some(Qualifier::Imm)), "{}", f.ty);
                }
            }
        }
    }

    #[test]
    fn generated_programs_are_well_formed_and_parse() {
        for s in 0..300 {
            let p = gen_program(&GenConfig::new(s));
            let v = validate_wellformedness(&p);
            assert!(v.is_empty(), "seed {s}: {:?}\n{}", v, print_program(&p));
            parse(&print_program(&p)).unwrap_or_else(|e| panic!("seed {s}: {e}\n{}", print_program(&p)));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = GenConfig::new(0);
        assert_eq!(c.validate(), Ok(()));
        c.max_depth = 0;
        assert_eq!(c.validate(), Err(GenConfigError::ZeroCount("max_depth")));
        let mut c = GenConfig::new(0);
        c.qualifier_weights.values_mut().for_each(|w| *w = 0);
        assert_eq!(c.validate(), Err(GenConfigError::NoWeight));
    }

    #[test]
    fn shrink_needs_failing_input() {
        let p = gen_program(&GenConfig::new(3));
        assert_eq!(shrink(&p, |_| false).unwrap_err(), ShrinkError::NotFailing);
    }

    #[test]
    fn enumerator_size() {
        let ts = enumerate_terms(3);
        assert!(ts.len() >= 1000, "{}", ts.len());
        assert!(ts.iter().all(|t| t.depth() <= 3));
    }
}
