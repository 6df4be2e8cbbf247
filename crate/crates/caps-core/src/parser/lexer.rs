use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::Span;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Kw(&'static str),
    Sym(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{}`", s),
            Tok::Int(n) => write!(f, "integer `{}`", n),
            Tok::Kw(k) => write!(f, "`{}`", k),
            Tok::Sym(c) => write!(f, "`{}`", c),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

pub const KEYWORDS: &[&str] =
    &["class", "mut", "imm", "capsule", "lent", "read", "int", "new", "this", "return", "static"];

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub ch: char,
}

pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let mut out = Vec::new();
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    let (mut line, mut col) = (1u32, 1u32);
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c == '/' && bytes.get(i + 1).map(|b| b.1) == Some('/') {
            while i < bytes.len() && bytes[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].1.is_ascii_alphanumeric() || bytes[i].1 == '_') {
                i += 1;
            }
            let end = bytes.get(i).map_or(src.len(), |b| b.0);
            let word = &src[pos..end];
            match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(String::from(word)),
            }
        } else if c.is_ascii_digit() {
            let mut n: i64 = 0;
            while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                let d = i64::from(bytes[i].1 as u8 - b'0');
                n = n.saturating_mul(10).saturating_add(d);
                i += 1;
            }
            Tok::Int(n)
        } else if "{}();,.=+".contains(c) {
            i += 1;
            Tok::Sym(c)
        } else {
            return Err(LexError { line, col, ch: c });
        };
        col += (i - start) as u32;
        let end = bytes.get(i).map_or(src.len(), |b| b.0);
        out.push(Token { tok, span: Span::new(pos as u32, end as u32, line, start_col) });
    }
    out.push(Token { tok: Tok::Eof, span: Span::new(src.len() as u32, src.len() as u32, line, col) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = lex("mut B x=new B(y); // c\n x.f").unwrap();
        assert_eq!(toks[0].tok, Tok::Kw("mut"));
        assert_eq!(toks[1].tok, Tok::Ident("B".into()));
        assert_eq!(toks[3].tok, Tok::Sym('='));
        let x = toks.iter().rev().nth(3).unwrap();
        assert_eq!((x.span.line, x.span.col), (2, 2));
    }

    #[test]
    fn hash_is_rejected() {
        assert_eq!(lex("x#1").unwrap_err().ch, '#');
    }
}
