//! Abstract syntax, the qualifier lattice and the class table.

mod vars;
mod wellformed;

pub use vars::{bound_names, free_vars, freshen, occurrences, rename_apart, rename_free, substitute, Fresh};
pub use wellformed::{expr_violations, validate_wellformedness, Violation, ViolationKind};

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// Identifier for variables, classes, fields and methods.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Part before the `#` freshness suffix.
    pub fn base(&self) -> &str {
        match self.0.find('#') {
            Some(i) => &self.0[..i],
            None => &self.0,
        }
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name(Arc::from(s.as_str()))
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Source location. Every span compares equal to every other span, so
/// derived equality on syntax trees ignores locations.
#[derive(Clone, Copy, Default)]
pub struct Span {
    pub start: u32,
    pub end: u32,
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(start: u32, end: u32, line: u32, col: u32) -> Self {
        Span { start, end, line, col }
    }

    pub fn to(self, other: Span) -> Span {
        Span { end: other.end, ..self }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl PartialOrd for Span {
    fn partial_cmp(&self, other: &Span) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Span {
    fn cmp(&self, _: &Span) -> Ordering {
        Ordering::Equal
    }
}

impl core::hash::Hash for Span {
    fn hash<H: core::hash::Hasher>(&self, _: &mut H) {}
}

impl fmt::Debug for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Qualifier {
    Capsule,
    Mut,
    Imm,
    Lent,
    Read,
}

impl Qualifier {
    pub const ALL: [Qualifier; 5] =
        [Qualifier::Capsule, Qualifier::Mut, Qualifier::Imm, Qualifier::Lent, Qualifier::Read];

    /// The lattice order: capsule below mut and imm, mut below lent, both
    /// lent and imm below read.
    pub fn leq(self, other: Qualifier) -> bool {
        use Qualifier::*;
        matches!(
            (self, other),
            (Capsule, _) | (Mut, Mut | Lent | Read) | (Imm, Imm | Read) | (Lent, Lent | Read) | (Read, Read)
        )
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Qualifier::Capsule => "capsule",
            Qualifier::Mut => "mut",
            Qualifier::Imm => "imm",
            Qualifier::Lent => "lent",
            Qualifier::Read => "read",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Qualifier> {
        Some(match s {
            "capsule" => Qualifier::Capsule,
            "mut" => Qualifier::Mut,
            "imm" => Qualifier::Imm,
            "lent" => Qualifier::Lent,
            "read" => Qualifier::Read,
            _ => return None,
        })
    }
}

impl fmt::Display for Qualifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Type {
    Int,
    Class(Qualifier, Name),
}

impl Type {
    pub fn class(q: Qualifier, c: &str) -> Type {
        Type::Class(q, Name::new(c))
    }

    pub fn qualifier(&self) -> Option<Qualifier> {
        match self {
            Type::Int => None,
            Type::Class(q, _) => Some(*q),
        }
    }

    pub fn class_name(&self) -> Option<&Name> {
        match self {
            Type::Int => None,
            Type::Class(_, c) => Some(c),
        }
    }

    pub fn with_qualifier(&self, q: Qualifier) -> Type {
        match self {
            Type::Int => Type::Int,
            Type::Class(_, c) => Type::Class(q, c.clone()),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Class(q, c) => write!(f, "{} {}", q, c),
        }
    }
}

/// Subtyping: reflexive on `int`, pointwise on qualifiers for one class.
pub fn subtype(t1: &Type, t2: &Type) -> bool {
    match (t1, t2) {
        (Type::Int, Type::Int) => true,
        (Type::Class(q1, c1), Type::Class(q2, c2)) => c1 == c2 && q1.leq(*q2),
        _ => false,
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ExprKind {
    Var(Name),
    Int(i64),
    Field(Box<Expr>, Name),
    Call(Box<Expr>, Name, Vec<Expr>),
    StaticCall(Name, Name, Vec<Expr>),
    Assign(Box<Expr>, Name, Box<Expr>),
    New(Name, Vec<Expr>),
    Block(Vec<Decl>, Box<Expr>),
    Plus(Box<Expr>, Box<Expr>),
}

/// `T x = e`. A missing type comes from the `e; e'` sugar and is filled
/// in by the typechecker.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Decl {
    pub ty: Option<Type>,
    pub name: Name,
    pub init: Expr,
    pub span: Span,
}

impl Decl {
    pub fn new(ty: Type, name: &str, init: Expr) -> Decl {
        Decl { ty: Some(ty), name: Name::new(name), init, span: Span::default() }
    }

    pub fn qualifier(&self) -> Option<Qualifier> {
        self.ty.as_ref().and_then(Type::qualifier)
    }

    /// `T x = rv`.
    pub fn is_evaluated(&self) -> bool {
        self.init.is_right_value()
    }
}

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        Expr { kind, span: Span::default() }
    }

    pub fn with_span(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span }
    }

    pub fn var(x: &str) -> Expr {
        Expr::new(ExprKind::Var(Name::new(x)))
    }

    pub fn int(n: i64) -> Expr {
        Expr::new(ExprKind::Int(n))
    }

    pub fn field(e: Expr, f: &str) -> Expr {
        Expr::new(ExprKind::Field(Box::new(e), Name::new(f)))
    }

    pub fn call(e: Expr, m: &str, args: Vec<Expr>) -> Expr {
        Expr::new(ExprKind::Call(Box::new(e), Name::new(m), args))
    }

    pub fn assign(e: Expr, f: &str, rhs: Expr) -> Expr {
        Expr::new(ExprKind::Assign(Box::new(e), Name::new(f), Box::new(rhs)))
    }

    pub fn new_obj(c: &str, args: Vec<Expr>) -> Expr {
        Expr::new(ExprKind::New(Name::new(c), args))
    }

    pub fn block(decls: Vec<Decl>, body: Expr) -> Expr {
        Expr::new(ExprKind::Block(decls, Box::new(body)))
    }

    pub fn plus(a: Expr, b: Expr) -> Expr {
        Expr::new(ExprKind::Plus(Box::new(a), Box::new(b)))
    }

    pub fn as_var(&self) -> Option<&Name> {
        match &self.kind {
            ExprKind::Var(x) => Some(x),
            _ => None,
        }
    }

    /// References and integer literals.
    pub fn is_atom(&self) -> bool {
        matches!(self.kind, ExprKind::Var(_) | ExprKind::Int(_))
    }

    /// `v ::= x | n | new C(vs) | {dvs v}`.
    pub fn is_value(&self) -> bool {
        match &self.kind {
            ExprKind::Var(_) | ExprKind::Int(_) => true,
            ExprKind::New(_, args) => args.iter().all(Expr::is_value),
            ExprKind::Block(ds, body) => {
                ds.iter().all(|d| d.ty.is_some() && d.init.is_value()) && body.is_value()
            }
            _ => false,
        }
    }

    /// `rv ::= new C(xs) | {dvs x} | {dvs new C(xs)}` where the stored
    /// declarations are themselves evaluated.
    pub fn is_right_value(&self) -> bool {
        match &self.kind {
            ExprKind::New(_, args) => args.iter().all(Expr::is_atom),
            ExprKind::Block(ds, body) => {
                ds.iter().all(|d| d.ty.is_some() && d.is_evaluated())
                    && (body.is_atom()
                        || matches!(&body.kind, ExprKind::New(_, a) if a.iter().all(Expr::is_atom)))
            }
            _ => false,
        }
    }

    /// Every compound subterm outside declaration right-hand sides and
    /// block bodies is a value.
    pub fn is_simplified(&self) -> bool {
        match &self.kind {
            ExprKind::Var(_) | ExprKind::Int(_) => true,
            ExprKind::Field(e, _) => e.is_value() && e.is_simplified(),
            ExprKind::Call(e, _, args) => {
                e.is_value() && e.is_simplified() && args.iter().all(|a| a.is_value() && a.is_simplified())
            }
            ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
                args.iter().all(|a| a.is_value() && a.is_simplified())
            }
            ExprKind::Assign(e, _, r) | ExprKind::Plus(e, r) => {
                e.is_value() && r.is_value() && e.is_simplified() && r.is_simplified()
            }
            ExprKind::Block(ds, body) => {
                ds.iter().all(|d| d.ty.is_some() && d.init.is_simplified()) && body.is_simplified()
            }
        }
    }

    /// Nesting depth of the syntax tree.
    pub fn depth(&self) -> usize {
        let sub = match &self.kind {
            ExprKind::Var(_) | ExprKind::Int(_) => 0,
            ExprKind::Field(e, _) => e.depth(),
            ExprKind::Call(e, _, args) => {
                args.iter().map(Expr::depth).chain(core::iter::once(e.depth())).max().unwrap_or(0)
            }
            ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
                args.iter().map(Expr::depth).max().unwrap_or(0)
            }
            ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => a.depth().max(b.depth()),
            ExprKind::Block(ds, body) => {
                ds.iter().map(|d| d.init.depth()).chain(core::iter::once(body.depth())).max().unwrap_or(0)
            }
        };
        sub + 1
    }

    /// Number of syntax nodes.
    pub fn size(&self) -> usize {
        1 + match &self.kind {
            ExprKind::Var(_) | ExprKind::Int(_) => 0,
            ExprKind::Field(e, _) => e.size(),
            ExprKind::Call(e, _, args) => e.size() + args.iter().map(Expr::size).sum::<usize>(),
            ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => args.iter().map(Expr::size).sum(),
            ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => a.size() + b.size(),
            ExprKind::Block(ds, body) => body.size() + ds.iter().map(|d| d.init.size()).sum::<usize>(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FieldDecl {
    pub ty: Type,
    pub name: Name,
    pub span: Span,
}

/// Qualifier slot of a method: the type of `this`, or none for static methods.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Receiver {
    Qual(Qualifier),
    Static,
}

impl fmt::Display for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Receiver::Qual(q) => write!(f, "{}", q),
            Receiver::Static => f.write_str("static"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Param {
    pub ty: Type,
    pub name: Name,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MethodDef {
    pub ret: Type,
    pub name: Name,
    pub receiver: Receiver,
    pub params: Vec<Param>,
    pub body: Expr,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ClassDef {
    pub name: Name,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDef>,
    pub span: Span,
}

impl ClassDef {
    pub fn field_index(&self, f: &Name) -> Option<usize> {
        self.fields.iter().position(|fd| &fd.name == f)
    }

    pub fn method(&self, m: &Name) -> Option<&MethodDef> {
        self.methods.iter().find(|md| &md.name == m)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ClassTableError {
    DuplicateClass(Name, Span),
    DuplicateField(Name, Name, Span),
    DuplicateMethod(Name, Name, Span),
    DuplicateParam(Name, Name, Span),
    BadFieldType(Name, Name, Type, Span),
    UnknownClass(Name, Span),
}

impl ClassTableError {
    pub fn span(&self) -> Span {
        match self {
            ClassTableError::DuplicateClass(_, s)
            | ClassTableError::DuplicateField(_, _, s)
            | ClassTableError::DuplicateMethod(_, _, s)
            | ClassTableError::DuplicateParam(_, _, s)
            | ClassTableError::BadFieldType(_, _, _, s)
            | ClassTableError::UnknownClass(_, s) => *s,
        }
    }
}

impl fmt::Display for ClassTableError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassTableError::DuplicateClass(c, _) => write!(f, "class {} declared twice", c),
            ClassTableError::DuplicateField(c, x, _) => write!(f, "field {} declared twice in {}", x, c),
            ClassTableError::DuplicateMethod(c, m, _) => write!(f, "method {} declared twice in {}", m, c),
            ClassTableError::DuplicateParam(m, x, _) => write!(f, "parameter {} repeated in {}", x, m),
            ClassTableError::BadFieldType(c, x, t, _) => {
                write!(f, "field {}.{} has type {}; fields are mut C, imm C or int", c, x, t)
            }
            ClassTableError::UnknownClass(c, _) => write!(f, "unknown class {}", c),
        }
    }
}

/// Classes keyed by name; declaration order is kept for printing.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ClassTable {
    classes: BTreeMap<Name, ClassDef>,
    order: Vec<Name>,
}

impl ClassTable {
    pub fn new() -> Self {
        ClassTable::default()
    }

    /// Builds and validates a table.
    pub fn from_classes(defs: Vec<ClassDef>) -> Result<ClassTable, ClassTableError> {
        let mut ct = ClassTable::new();
        for d in defs {
            if ct.classes.contains_key(&d.name) {
                return Err(ClassTableError::DuplicateClass(d.name.clone(), d.span));
            }
            ct.order.push(d.name.clone());
            ct.classes.insert(d.name.clone(), d);
        }
        ct.validate()?;
        Ok(ct)
    }

    pub fn validate(&self) -> Result<(), ClassTableError> {
        for c in self.iter() {
            for (i, fd) in c.fields.iter().enumerate() {
                if c.fields[..i].iter().any(|g| g.name == fd.name) {
                    return Err(ClassTableError::DuplicateField(c.name.clone(), fd.name.clone(), fd.span));
                }
                match &fd.ty {
                    Type::Int | Type::Class(Qualifier::Mut | Qualifier::Imm, _) => {}
                    t => {
                        return Err(ClassTableError::BadFieldType(
                            c.name.clone(),
                            fd.name.clone(),
                            t.clone(),
                            fd.span,
                        ))
                    }
                }
                self.check_type(&fd.ty, fd.span)?;
            }
            for (i, m) in c.methods.iter().enumerate() {
                if c.methods[..i].iter().any(|n| n.name == m.name) {
                    return Err(ClassTableError::DuplicateMethod(c.name.clone(), m.name.clone(), m.span));
                }
                self.check_type(&m.ret, m.span)?;
                for (j, p) in m.params.iter().enumerate() {
                    if m.params[..j].iter().any(|q| q.name == p.name) || p.name.as_str() == "this" {
                        return Err(ClassTableError::DuplicateParam(m.name.clone(), p.name.clone(), m.span));
                    }
                    self.check_type(&p.ty, m.span)?;
                }
            }
        }
        Ok(())
    }

    fn check_type(&self, t: &Type, span: Span) -> Result<(), ClassTableError> {
        match t {
            Type::Class(_, c) if !self.classes.contains_key(c) => {
                Err(ClassTableError::UnknownClass(c.clone(), span))
            }
            _ => Ok(()),
        }
    }

    pub fn get(&self, c: &Name) -> Option<&ClassDef> {
        self.classes.get(c)
    }

    pub fn contains(&self, c: &Name) -> bool {
        self.classes.contains_key(c)
    }

    pub fn fields(&self, c: &Name) -> Option<&[FieldDecl]> {
        self.classes.get(c).map(|d| d.fields.as_slice())
    }

    pub fn method(&self, c: &Name, m: &Name) -> Option<&MethodDef> {
        self.classes.get(c).and_then(|d| d.method(m))
    }

    /// Classes in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = &ClassDef> {
        self.order.iter().filter_map(move |n| self.classes.get(n))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Replaces the body of a method, keeping everything else.
    pub fn set_method_body(&mut self, c: &Name, m: &Name, body: Expr) {
        if let Some(d) = self.classes.get_mut(c) {
            if let Some(md) = d.methods.iter_mut().find(|md| &md.name == m) {
                md.body = body;
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Program {
    pub classes: ClassTable,
    pub main: Expr,
}
