use std::collections::BTreeMap;
use std::fmt;

use crate::adversary::Knowledge;
use crate::crypto::sexpr::{expect_arity, list_head, parse_sexpr, string_arg, term_from_sexpr, SExpr};
use crate::crypto::{parse_term, ParseError, Term};
use crate::protocol::{Event, EventKind, ID_LABEL_PREFIX};

/// A term shape for secrecy queries.
///
/// Written as s-expressions: `_`, `?x`, `(name-prefix "id/")`,
/// `(key-prefix "k")`, `(pair P Q)`, `(senc P Q)`, `(ienc P Q)`, `(hash P)`,
/// or any literal term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermPattern {
    Any,
    /// Matches anything; variables carry no constraint inside secrecy queries.
    Var(String),
    Const(Term),
    NamePrefix(String),
    KeyPrefix(String),
    Pair(Box<TermPattern>, Box<TermPattern>),
    SymEnc(Box<TermPattern>, Box<TermPattern>),
    IdEnc(Box<TermPattern>, Box<TermPattern>),
    Hash(Box<TermPattern>),
}

impl TermPattern {
    /// Any digital identity issued by the CA.
    pub fn identity() -> Self {
        TermPattern::NamePrefix(ID_LABEL_PREFIX.to_string())
    }

    pub fn matches(&self, t: &Term) -> bool {
        match (self, t) {
            (TermPattern::Any | TermPattern::Var(_), _) => true,
            (TermPattern::Const(c), t) => c == t,
            (TermPattern::NamePrefix(p), Term::Name(a)) => a.label.starts_with(p.as_str()),
            (TermPattern::KeyPrefix(p), Term::Key(a)) => a.label.starts_with(p.as_str()),
            (TermPattern::Pair(p, q), Term::Pair(a, b))
            | (TermPattern::SymEnc(p, q), Term::SymEnc(a, b))
            | (TermPattern::IdEnc(p, q), Term::IdEnc(a, b)) => p.matches(a) && q.matches(b),
            (TermPattern::Hash(p), Term::Hash(a)) => p.matches(a),
            _ => false,
        }
    }

    /// A term matching the pattern that the attacker can derive, if any.
    pub fn find_derivable(&self, k: &Knowledge) -> Option<Term> {
        if let Some(t) = k.analyzed().find(|t| self.matches(t)) {
            return Some(t.clone());
        }
        match self {
            TermPattern::Const(t) => k.can_derive(t).then(|| t.clone()),
            TermPattern::Pair(p, q) => Some(Term::pair(p.find_derivable(k)?, q.find_derivable(k)?)),
            TermPattern::SymEnc(p, q) | TermPattern::IdEnc(p, q) => {
                let payload = p.find_derivable(k)?;
                let key = match q.as_ref() {
                    TermPattern::Const(key) => (key.is_key() && k.can_derive(key)).then(|| key.clone())?,
                    q => k.analyzed().find(|t| t.is_key() && q.matches(t))?.clone(),
                };
                Some(match self {
                    TermPattern::SymEnc(..) => Term::SymEnc(payload.into(), key.into()),
                    _ => Term::IdEnc(payload.into(), key.into()),
                })
            }
            TermPattern::Hash(p) => Some(Term::hash(p.find_derivable(k)?)),
            _ => None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        from_sexpr(&parse_sexpr(text)?)
    }
}

fn from_sexpr(expr: &SExpr) -> Result<TermPattern, ParseError> {
    match expr {
        SExpr::Symbol(s, _) if s == "_" => Ok(TermPattern::Any),
        SExpr::Symbol(s, _) if s.len() > 1 && s.starts_with('?') => Ok(TermPattern::Var(s[1..].to_string())),
        SExpr::Symbol(_, off) | SExpr::Str(_, off) => Err(ParseError::new(*off, "expected _, ?var or a list")),
        SExpr::List(_, off) => {
            let (head, args) = list_head(expr)?;
            let two = |args: &[SExpr]| -> Result<(Box<TermPattern>, Box<TermPattern>), ParseError> {
                expect_arity(head, args, 2, *off)?;
                Ok((Box::new(from_sexpr(&args[0])?), Box::new(from_sexpr(&args[1])?)))
            };
            match head {
                "name-prefix" | "key-prefix" => {
                    expect_arity(head, args, 1, *off)?;
                    let p = string_arg(&args[0])?.to_string();
                    Ok(if head == "name-prefix" { TermPattern::NamePrefix(p) } else { TermPattern::KeyPrefix(p) })
                }
                "pair" => two(args).map(|(a, b)| TermPattern::Pair(a, b)),
                "senc" => two(args).map(|(a, b)| TermPattern::SymEnc(a, b)),
                "ienc" => two(args).map(|(a, b)| TermPattern::IdEnc(a, b)),
                "hash" => {
                    expect_arity(head, args, 1, *off)?;
                    Ok(TermPattern::Hash(Box::new(from_sexpr(&args[0])?)))
                }
                _ => term_from_sexpr(expr).map(TermPattern::Const),
            }
        }
    }
}

impl fmt::Display for TermPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermPattern::Any => f.write_str("_"),
            TermPattern::Var(v) => write!(f, "?{v}"),
            TermPattern::Const(t) => write!(f, "{t}"),
            TermPattern::NamePrefix(p) => write!(f, "(name-prefix {p:?})"),
            TermPattern::KeyPrefix(p) => write!(f, "(key-prefix {p:?})"),
            TermPattern::Pair(a, b) => write!(f, "(pair {a} {b})"),
            TermPattern::SymEnc(a, b) => write!(f, "(senc {a} {b})"),
            TermPattern::IdEnc(a, b) => write!(f, "(ienc {a} {b})"),
            TermPattern::Hash(a) => write!(f, "(hash {a})"),
        }
    }
}

/// An event argument: wildcard, shared variable, or constant term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgPattern {
    Wild,
    Var(String),
    Const(Term),
}

impl ArgPattern {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let text = text.trim();
        if text == "_" {
            Ok(ArgPattern::Wild)
        } else if text.starts_with('(') {
            parse_term(text).map(ArgPattern::Const)
        } else if !text.is_empty() && text.chars().all(|c| c.is_alphanumeric() || c == '_') {
            Ok(ArgPattern::Var(text.to_string()))
        } else {
            Err(ParseError::new(0, format!("bad event argument '{text}'")))
        }
    }
}

impl fmt::Display for ArgPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgPattern::Wild => f.write_str("_"),
            ArgPattern::Var(v) => f.write_str(v),
            ArgPattern::Const(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPattern {
    pub kind: EventKind,
    pub args: Vec<ArgPattern>,
}

impl EventPattern {
    pub fn new(kind: EventKind, args: Vec<ArgPattern>) -> Self {
        assert_eq!(args.len(), kind.arity(), "wrong arity for {kind}");
        EventPattern { kind, args }
    }

    /// Extends `env` so the pattern matches `e`, or `None` if it cannot.
    pub fn bind(&self, e: &Event, env: &BTreeMap<String, Term>) -> Option<BTreeMap<String, Term>> {
        if e.kind != self.kind {
            return None;
        }
        let mut out = env.clone();
        for (p, t) in self.args.iter().zip(&e.args) {
            match p {
                ArgPattern::Wild => {}
                ArgPattern::Const(c) if c == t => {}
                ArgPattern::Const(_) => return None,
                ArgPattern::Var(v) => match out.get(v) {
                    Some(bound) if bound != t => return None,
                    Some(_) => {}
                    None => {
                        out.insert(v.clone(), t.clone());
                    }
                },
            }
        }
        Some(out)
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_parse_and_print() {
        for text in ["_", "?x", "(name-prefix \"id/\")", "(ienc (name-prefix \"id/\") _)", "(hash (pair ?n (name \"e\" 0)))"] {
            let p = TermPattern::parse(text).unwrap();
            assert_eq!(TermPattern::parse(&p.to_string()).unwrap(), p);
        }
        assert!(TermPattern::parse("x").is_err());
        assert!(TermPattern::parse("(hash)").is_err());
    }

    #[test]
    fn constructed_identity_encryption_is_found() {
        let id = Term::name("id/a", 1);
        let k = Knowledge::from_terms([id.clone(), Term::key("k/eve", 1)], 3);
        let p = TermPattern::IdEnc(Box::new(TermPattern::identity()), Box::new(TermPattern::Any));
        assert_eq!(p.find_derivable(&k), Some(Term::IdEnc(id.into(), Term::key("k/eve", 1).into())));
        let only_id = Knowledge::from_terms([Term::name("id/a", 1)], 3);
        assert_eq!(p.find_derivable(&only_id), None);
    }

    #[test]
    fn observed_identity_ciphertext_counts() {
        let eid = Term::IdEnc(Term::name("id/a", 1).into(), Term::key("k/alice", 1).into());
        let k = Knowledge::from_terms([eid.clone()], 3);
        let p = TermPattern::IdEnc(Box::new(TermPattern::identity()), Box::new(TermPattern::Any));
        assert_eq!(p.find_derivable(&k), Some(eid));
        assert_eq!(TermPattern::identity().find_derivable(&k), None);
    }

    #[test]
    fn shared_variables_must_agree() {
        let p = EventPattern::new(EventKind::WSSendsSMS, vec![ArgPattern::Var("h".into()), ArgPattern::Wild]);
        let e = Event::new(EventKind::WSSendsSMS, vec![Term::name("a", 0), Term::name("otp", 3)]);
        let env = p.bind(&e, &BTreeMap::new()).unwrap();
        assert_eq!(env["h"], Term::name("a", 0));
        let mut other = BTreeMap::new();
        other.insert("h".to_string(), Term::name("b", 0));
        assert!(p.bind(&e, &other).is_none());
    }

    #[test]
    fn arg_patterns() {
        assert_eq!(ArgPattern::parse("_").unwrap(), ArgPattern::Wild);
        assert_eq!(ArgPattern::parse("h").unwrap(), ArgPattern::Var("h".into()));
        assert_eq!(ArgPattern::parse("(name \"a\" 0)").unwrap(), ArgPattern::Const(Term::name("a", 0)));
        assert!(ArgPattern::parse("a b").is_err());
    }
}
