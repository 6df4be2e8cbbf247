//! Surface syntax: lexer, recursive-descent parser, printer and the
//! type-driven translation into simplified form.

mod anf;
mod lexer;
mod print;

pub use anf::{anf_in, anf_program, anf_translate, is_anf, AnfError};
pub use print::{pretty_print, print_program, print_type};

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{
    ClassDef, ClassTable, ClassTableError, Decl, Expr, ExprKind, FieldDecl, MethodDef, Name, Param, Program,
    Qualifier, Receiver, Span, Type,
};
use lexer::{lex, Tok, Token};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Unexpected { expected: Vec<String>, found: String },
    BadChar(char),
    ClassTable(ClassTableError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn expected(&self) -> &[String] {
        match &self.kind {
            ParseErrorKind::Unexpected { expected, .. } => expected,
            _ => &[],
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::Unexpected { expected, found } => {
                write!(f, "expected ")?;
                for (i, e) in expected.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{}", if i + 1 == expected.len() { " or " } else { ", " })?;
                    }
                    write!(f, "{}", e)?;
                }
                write!(f, ", found {}", found)
            }
            ParseErrorKind::BadChar(c) => write!(f, "unexpected character `{}`", c),
            ParseErrorKind::ClassTable(e) => write!(f, "{}", e),
        }
    }
}

/// Parses a whole program: class declarations followed by the main
/// expression, whose outer braces may be omitted.
pub fn parse(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    let mut classes = Vec::new();
    while p.peek() == &Tok::Kw("class") {
        classes.push(p.class_decl()?);
    }
    let main = p.block_contents(true)?;
    p.expect_eof()?;
    let names: BTreeSet<Name> = classes.iter().map(|c: &ClassDef| c.name.clone()).collect();
    for c in &mut classes {
        for m in &mut c.methods {
            let mut scope: Vec<Name> = m.params.iter().map(|p| p.name.clone()).collect();
            if m.receiver != Receiver::Static {
                scope.push(Name::new("this"));
            }
            resolve_static(&mut m.body, &names, &mut scope);
        }
    }
    let mut main = main;
    resolve_static(&mut main, &names, &mut Vec::new());
    let classes = ClassTable::from_classes(classes).map_err(|e| {
        let s = e.span();
        ParseError { line: s.line, col: s.col, kind: ParseErrorKind::ClassTable(e) }
    })?;
    Ok(Program { classes, main })
}

/// Parses a lone expression; `C.m(..)` becomes a static call whenever `C`
/// is in `classes` and not bound.
pub fn parse_expr(src: &str, classes: &ClassTable) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let mut e = p.block_contents(true)?;
    p.expect_eof()?;
    let names: BTreeSet<Name> = classes.iter().map(|c| c.name.clone()).collect();
    resolve_static(&mut e, &names, &mut Vec::new());
    Ok(e)
}

fn resolve_static(e: &mut Expr, classes: &BTreeSet<Name>, scope: &mut Vec<Name>) {
    if let ExprKind::Call(r, m, args) = &mut e.kind {
        if let ExprKind::Var(c) = &r.kind {
            if classes.contains(c) && !scope.contains(c) {
                let kind = ExprKind::StaticCall(c.clone(), m.clone(), core::mem::take(args));
                e.kind = kind;
            }
        }
    }
    match &mut e.kind {
        ExprKind::Var(_) | ExprKind::Int(_) => {}
        ExprKind::Field(r, _) => resolve_static(r, classes, scope),
        ExprKind::Call(r, _, args) => {
            resolve_static(r, classes, scope);
            args.iter_mut().for_each(|a| resolve_static(a, classes, scope));
        }
        ExprKind::StaticCall(_, _, args) | ExprKind::New(_, args) => {
            args.iter_mut().for_each(|a| resolve_static(a, classes, scope));
        }
        ExprKind::Assign(a, _, b) | ExprKind::Plus(a, b) => {
            resolve_static(a, classes, scope);
            resolve_static(b, classes, scope);
        }
        ExprKind::Block(ds, body) => {
            let n = scope.len();
            scope.extend(ds.iter().map(|d| d.name.clone()));
            ds.iter_mut().for_each(|d| resolve_static(&mut d.init, classes, scope));
            resolve_static(body, classes, scope);
            scope.truncate(n);
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    fresh: u32,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, ParseError> {
        let toks = lex(src).map_err(|e| ParseError {
            line: e.line,
            col: e.col,
            kind: ParseErrorKind::BadChar(e.ch),
        })?;
        Ok(Parser { toks, pos: 0, fresh: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let s = self.span();
        ParseError {
            line: s.line,
            col: s.col,
            kind: ParseErrorKind::Unexpected {
                expected: expected.iter().map(|e| e.to_string()).collect(),
                found: self.peek().to_string(),
            },
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == &Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            let s = match c {
                '{' => "`{`",
                '}' => "`}`",
                '(' => "`(`",
                ')' => "`)`",
                ';' => "`;`",
                ',' => "`,`",
                '.' => "`.`",
                '=' => "`=`",
                _ => "`+`",
            };
            Err(self.error(&[s]))
        }
    }

    fn expect_kw(&mut self, k: &'static str, desc: &str) -> Result<(), ParseError> {
        if self.peek() == &Tok::Kw(k) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[desc]))
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            Err(self.error(&["end of input"]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(Name, Span), ParseError> {
        if let Tok::Ident(s) = self.peek() {
            let n = Name::new(s);
            let sp = self.bump().span;
            Ok((n, sp))
        } else {
            Err(self.error(&[what]))
        }
    }

    fn qualifier(&self) -> Option<Qualifier> {
        match self.peek() {
            Tok::Kw(k) => Qualifier::from_keyword(k),
            _ => None,
        }
    }

    fn starts_type(&self) -> bool {
        self.qualifier().is_some() || self.peek() == &Tok::Kw("int")
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        if self.peek() == &Tok::Kw("int") {
            self.bump();
            return Ok(Type::Int);
        }
        match self.qualifier() {
            Some(q) => {
                self.bump();
                let (c, _) = self.ident("class name")?;
                Ok(Type::Class(q, c))
            }
            None => Err(self.error(&["type"])),
        }
    }

    fn param(&mut self) -> Result<Param, ParseError> {
        let ty = self.ty()?;
        let (name, _) = self.ident("parameter name")?;
        Ok(Param { ty, name })
    }

    fn class_decl(&mut self) -> Result<ClassDef, ParseError> {
        let start = self.span();
        self.expect_kw("class", "`class`")?;
        let (name, _) = self.ident("class name")?;
        self.expect_sym('{')?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        while !self.eat_sym('}') {
            let mstart = self.span();
            let prefix_static = self.peek() == &Tok::Kw("static");
            if prefix_static {
                self.bump();
            } else if !self.starts_type() {
                return Err(self.error(&["field or method declaration", "`}`"]));
            }
            let ty = self.ty()?;
            let (member, _) = self.ident("member name")?;
            if !prefix_static && self.eat_sym(';') {
                if !methods.is_empty() {
                    return Err(ParseError {
                        line: mstart.line,
                        col: mstart.col,
                        kind: ParseErrorKind::Unexpected {
                            expected: alloc::vec!["method declaration".into()],
                            found: "field declaration".into(),
                        },
                    });
                }
                fields.push(FieldDecl { ty, name: member, span: mstart.to(self.prev_span()) });
                continue;
            }
            if self.peek() != &Tok::Sym('(') {
                return Err(self.error(&["`;`", "`(`"]));
            }
            self.bump();
            let mut params = Vec::new();
            let receiver = if prefix_static {
                if self.peek() != &Tok::Sym(')') {
                    params.push(self.param()?);
                }
                Receiver::Static
            } else if self.peek() == &Tok::Kw("static") {
                self.bump();
                Receiver::Static
            } else if let Some(q) = self.qualifier() {
                self.bump();
                Receiver::Qual(q)
            } else {
                return Err(self.error(&["this-qualifier"]));
            };
            while self.eat_sym(',') {
                params.push(self.param()?);
            }
            self.expect_sym(')')?;
            self.expect_sym('{')?;
            let body = self.method_body()?;
            self.expect_sym('}')?;
            methods.push(MethodDef {
                ret: ty,
                name: member,
                receiver,
                params,
                body,
                span: mstart.to(self.prev_span()),
            });
        }
        Ok(ClassDef { name, fields, methods, span: start.to(self.prev_span()) })
    }

    /// `item* return e ;`
    fn method_body(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        let mut decls = Vec::new();
        loop {
            if self.peek() == &Tok::Kw("return") {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(';')?;
                return Ok(self.wrap(decls, e, start));
            }
            if self.starts_type() {
                decls.push(self.decl()?);
            } else {
                let e = self.expr()?;
                if !self.eat_sym(';') {
                    return Err(self.error(&["`;`"]));
                }
                decls.push(self.discard(e));
            }
        }
    }

    fn decl(&mut self) -> Result<Decl, ParseError> {
        let start = self.span();
        let ty = self.ty()?;
        let (name, _) = self.ident("variable name")?;
        self.expect_sym('=')?;
        let init = self.expr()?;
        self.expect_sym(';')?;
        Ok(Decl { ty: Some(ty), name, init, span: start.to(self.prev_span()) })
    }

    fn discard(&mut self, e: Expr) -> Decl {
        self.fresh += 1;
        let name = Name::from(alloc::format!("_#{}", self.fresh));
        Decl { ty: None, name, span: e.span, init: e }
    }

    fn wrap(&self, decls: Vec<Decl>, body: Expr, start: Span) -> Expr {
        if decls.is_empty() {
            body
        } else {
            Expr::with_span(ExprKind::Block(decls, Box::new(body)), start.to(self.prev_span()))
        }
    }

    /// `item* e`, with `e ; e'` read as a discarded declaration. At top
    /// level a trailing `;` is allowed and no block is built when there
    /// are no items.
    fn block_contents(&mut self, top: bool) -> Result<Expr, ParseError> {
        let start = self.span();
        let mut decls = Vec::new();
        loop {
            if self.starts_type() {
                decls.push(self.decl()?);
                continue;
            }
            let e = self.expr()?;
            if self.eat_sym(';') {
                let end = if top { Tok::Eof } else { Tok::Sym('}') };
                if top && self.peek() == &end {
                    return Ok(self.wrap(decls, e, start));
                }
                decls.push(self.discard(e));
                continue;
            }
            if top {
                return Ok(self.wrap(decls, e, start));
            }
            return Ok(Expr::with_span(ExprKind::Block(decls, Box::new(e)), start.to(self.span())));
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        let lhs = self.postfix()?;
        if self.peek() == &Tok::Sym('=') {
            if let ExprKind::Field(recv, f) = lhs.kind {
                self.bump();
                let rhs = self.expr()?;
                let span = start.to(self.prev_span());
                return Ok(Expr::with_span(ExprKind::Assign(recv, f, Box::new(rhs)), span));
            }
            return Err(self.error(&["`+`", "`;`", "`}`"]));
        }
        let mut acc = lhs;
        while self.eat_sym('+') {
            let rhs = self.postfix()?;
            let span = start.to(self.prev_span());
            acc = Expr::with_span(ExprKind::Plus(Box::new(acc), Box::new(rhs)), span);
        }
        Ok(acc)
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        let mut e = self.primary()?;
        while self.eat_sym('.') {
            let (name, _) = self.ident("field or method name")?;
            if self.eat_sym('(') {
                let args = self.args()?;
                e = Expr::with_span(ExprKind::Call(Box::new(e), name, args), start.to(self.prev_span()));
            } else {
                e = Expr::with_span(ExprKind::Field(Box::new(e), name), start.to(self.prev_span()));
            }
        }
        Ok(e)
    }

    /// After `(`; consumes the closing `)`.
    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::new();
        if self.eat_sym(')') {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat_sym(')') {
                return Ok(out);
            }
            if !self.eat_sym(',') {
                return Err(self.error(&["`,`", "`)`"]));
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let sp = self.span();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::with_span(ExprKind::Var(Name::new(&s)), sp))
            }
            Tok::Kw("this") => {
                self.bump();
                Ok(Expr::with_span(ExprKind::Var(Name::new("this")), sp))
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::with_span(ExprKind::Int(n), sp))
            }
            Tok::Kw("new") => {
                self.bump();
                let (c, _) = self.ident("class name")?;
                self.expect_sym('(')?;
                let args = self.args()?;
                Ok(Expr::with_span(ExprKind::New(c, args), sp.to(self.prev_span())))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Sym('{') => {
                self.bump();
                let e = self.block_contents(false)?;
                self.expect_sym('}')?;
                Ok(e)
            }
            _ => Err(self.error(&["expression"])),
        }
    }
}
