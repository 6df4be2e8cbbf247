//! Imperative object calculus with `mut`/`imm`/`capsule`/`lent`/`read`
//! qualifiers: parser, recovery-aware typechecker, store-as-blocks reducer
//! and runtime checkers for the soundness theorems.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod congruence;
pub mod gen;
pub mod meta;
pub mod parser;
pub mod reduce;
pub mod syntax;
pub mod typeck;

pub use syntax::{
    ClassDef, ClassTable, Decl, Expr, ExprKind, FieldDecl, MethodDef, Name, Param, Program, Qualifier,
    Receiver, Span, Type,
};
