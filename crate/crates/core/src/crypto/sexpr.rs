//! S-expression rendering of terms, used in JSON traces and schedules.
//!
//! ```text
//! (name "alice@email.dom" 0)   (key "k_wr" 0)   (tag msg1)   (host ws "ws")
//! (pair a b)   (senc m k)   (ienc id k)   (hash t)
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::{Atom, Tag, Term};
use crate::protocol::{PrincipalId, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("s-expression parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError { offset, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum SExpr {
    Symbol(String, usize),
    Str(String, usize),
    List(Vec<SExpr>, usize),
}

impl SExpr {
    pub(crate) fn offset(&self) -> usize {
        match self {
            SExpr::Symbol(_, o) | SExpr::Str(_, o) | SExpr::List(_, o) => *o,
        }
    }
}

pub(crate) fn parse_sexpr(text: &str) -> Result<SExpr, ParseError> {
    let mut parser = Reader { bytes: text.as_bytes(), pos: 0 };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(ParseError::new(parser.pos, "trailing input"));
    }
    Ok(expr)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<SExpr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.bytes.get(self.pos) {
            None => Err(ParseError::new(start, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        None => return Err(ParseError::new(self.pos, "unclosed list")),
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(SExpr::List(items, start));
                        }
                        Some(_) => items.push(self.expr()?),
                    }
                }
            }
            Some(b')') => Err(ParseError::new(start, "unexpected ')'")),
            Some(b'"') => {
                self.pos += 1;
                let mut out = Vec::new();
                loop {
                    match self.bytes.get(self.pos) {
                        None => return Err(ParseError::new(start, "unterminated string")),
                        Some(b'"') => {
                            self.pos += 1;
                            break;
                        }
                        Some(b'\\') => {
                            match self.bytes.get(self.pos + 1) {
                                Some(c @ (b'"' | b'\\')) => out.push(*c),
                                _ => return Err(ParseError::new(self.pos, "bad escape")),
                            }
                            self.pos += 2;
                        }
                        Some(c) => {
                            out.push(*c);
                            self.pos += 1;
                        }
                    }
                }
                let s = String::from_utf8(out).map_err(|_| ParseError::new(start, "invalid utf-8"))?;
                Ok(SExpr::Str(s, start))
            }
            Some(_) => {
                while let Some(c) = self.bytes.get(self.pos) {
                    if c.is_ascii_whitespace() || *c == b'(' || *c == b')' || *c == b'"' {
                        break;
                    }
                    self.pos += 1;
                }
                let sym = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap().to_string();
                Ok(SExpr::Symbol(sym, start))
            }
        }
    }
}

fn write_str(s: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

pub(crate) fn write_term(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match t {
        Term::Name(a) | Term::Key(a) => {
            f.write_str(if matches!(t, Term::Name(_)) { "(name " } else { "(key " })?;
            write_str(&a.label, f)?;
            write!(f, " {})", a.index)
        }
        Term::Pair(a, b) => write!(f, "(pair {a} {b})"),
        Term::SymEnc(a, b) => write!(f, "(senc {a} {b})"),
        Term::IdEnc(a, b) => write!(f, "(ienc {a} {b})"),
        Term::Hash(a) => write!(f, "(hash {a})"),
        Term::Tag(tag) => write!(f, "(tag {tag})"),
        Term::Host(p) => {
            write!(f, "(host {} ", p.role.as_str())?;
            write_str(&p.label, f)?;
            f.write_str(")")
        }
    }
}

pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    term_from_sexpr(&parse_sexpr(text)?)
}

pub(crate) fn list_head(expr: &SExpr) -> Result<(&str, &[SExpr]), ParseError> {
    match expr {
        SExpr::List(items, off) => match items.split_first() {
            Some((SExpr::Symbol(head, _), rest)) => Ok((head.as_str(), rest)),
            _ => Err(ParseError::new(*off, "expected a constructor name")),
        },
        other => Err(ParseError::new(other.offset(), "expected a list")),
    }
}

pub(crate) fn expect_arity(head: &str, args: &[SExpr], n: usize, off: usize) -> Result<(), ParseError> {
    if args.len() != n {
        return Err(ParseError::new(off, format!("{head} takes {n} argument(s), got {}", args.len())));
    }
    Ok(())
}

pub(crate) fn string_arg(expr: &SExpr) -> Result<&str, ParseError> {
    match expr {
        SExpr::Str(s, _) => Ok(s),
        other => Err(ParseError::new(other.offset(), "expected a quoted string")),
    }
}

fn index_arg(expr: &SExpr) -> Result<u128, ParseError> {
    match expr {
        SExpr::Symbol(s, off) => s.parse().map_err(|_| ParseError::new(*off, "expected a decimal index")),
        other => Err(ParseError::new(other.offset(), "expected a decimal index")),
    }
}

pub(crate) fn term_from_sexpr(expr: &SExpr) -> Result<Term, ParseError> {
    let off = expr.offset();
    let (head, args) = list_head(expr)?;
    let two = |args: &[SExpr]| -> Result<(Arc<Term>, Arc<Term>), ParseError> {
        expect_arity(head, args, 2, off)?;
        Ok((Arc::new(term_from_sexpr(&args[0])?), Arc::new(term_from_sexpr(&args[1])?)))
    };
    match head {
        "name" | "key" => {
            expect_arity(head, args, 2, off)?;
            let atom = Atom::new(string_arg(&args[0])?, index_arg(&args[1])?);
            Ok(if head == "name" { Term::Name(atom) } else { Term::Key(atom) })
        }
        "pair" => two(args).map(|(a, b)| Term::Pair(a, b)),
        "senc" => two(args).map(|(a, b)| Term::SymEnc(a, b)),
        "ienc" => two(args).map(|(a, b)| Term::IdEnc(a, b)),
        "hash" => {
            expect_arity(head, args, 1, off)?;
            Ok(Term::hash(term_from_sexpr(&args[0])?))
        }
        "tag" => {
            expect_arity(head, args, 1, off)?;
            match &args[0] {
                SExpr::Symbol(s, o) => Tag::from_name(s).map(Term::Tag).ok_or_else(|| ParseError::new(*o, "unknown tag")),
                other => Err(ParseError::new(other.offset(), "expected a tag name")),
            }
        }
        "host" => {
            expect_arity(head, args, 2, off)?;
            let role = match &args[0] {
                SExpr::Symbol(s, o) => Role::from_name(s).ok_or_else(|| ParseError::new(*o, "unknown role"))?,
                other => return Err(ParseError::new(other.offset(), "expected a role")),
            };
            Ok(Term::Host(PrincipalId::new(role, string_arg(&args[1])?)))
        }
        other => Err(ParseError::new(off, format!("unknown constructor '{other}'"))),
    }
}
