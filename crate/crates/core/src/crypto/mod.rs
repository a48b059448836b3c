//! Symbolic message algebra under perfect cryptography.
//!
//! Terms are compared structurally and nothing else: two ciphertexts are equal
//! only when payload and key are equal, and a hash can never be inverted. The
//! module deliberately has no constructor that maps `Hash(t)` back to `t`.

mod canonical;
pub(crate) mod sexpr;
mod ticket;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::protocol::PrincipalId;

pub use canonical::{concretize, to_canonical_bytes};
pub use sexpr::{parse_term, ParseError};
pub use ticket::{make_ticket, Ticket, TicketError, TicketStore};

/// Label of the nonce names produced by the chaos generator.
pub const NONCE_LABEL: &str = "nonce";
/// Label of the OTP names sent over the SMS channel.
pub const OTP_LABEL: &str = "otp";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("type error: expected a key, got {0}")]
    NotAKey(Term),
    #[error("type error: {0} is not a ciphertext of the expected kind")]
    NotCiphertext(Term),
    #[error("decryption failure: wrong key")]
    WrongKey,
}

/// Message tags, public constants of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Msg1,
    Msg2,
    Msg3,
    Msg4,
    Msg5,
    Msg6,
    Msg7,
    Msg8,
    Msg9,
    Msg10,
    MsgCode,
}

impl Tag {
    pub const ALL: [Tag; 11] = [
        Tag::Msg1,
        Tag::Msg2,
        Tag::Msg3,
        Tag::Msg4,
        Tag::Msg5,
        Tag::Msg6,
        Tag::Msg7,
        Tag::Msg8,
        Tag::Msg9,
        Tag::Msg10,
        Tag::MsgCode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Msg1 => "msg1",
            Tag::Msg2 => "msg2",
            Tag::Msg3 => "msg3",
            Tag::Msg4 => "msg4",
            Tag::Msg5 => "msg5",
            Tag::Msg6 => "msg6",
            Tag::Msg7 => "msg7",
            Tag::Msg8 => "msg8",
            Tag::Msg9 => "msg9",
            Tag::Msg10 => "msg10",
            Tag::MsgCode => "msgcode",
        }
    }

    pub fn from_name(name: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.as_str() == name)
    }

    fn code(self) -> u8 {
        Tag::ALL.iter().position(|t| *t == self).unwrap() as u8
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An atomic name or key: a label plus a freshness index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub label: Arc<str>,
    pub index: u128,
}

impl Atom {
    pub fn new(label: impl Into<Arc<str>>, index: u128) -> Self {
        Atom { label: label.into(), index }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Name(Atom),
    Key(Atom),
    Pair(Arc<Term>, Arc<Term>),
    SymEnc(Arc<Term>, Arc<Term>),
    IdEnc(Arc<Term>, Arc<Term>),
    Hash(Arc<Term>),
    Tag(Tag),
    Host(PrincipalId),
}

impl Term {
    pub fn name(label: impl Into<Arc<str>>, index: u128) -> Term {
        Term::Name(Atom::new(label, index))
    }

    pub fn key(label: impl Into<Arc<str>>, index: u128) -> Term {
        Term::Key(Atom::new(label, index))
    }

    pub fn pair(left: Term, right: Term) -> Term {
        Term::Pair(Arc::new(left), Arc::new(right))
    }

    pub fn hash(inner: Term) -> Term {
        Term::Hash(Arc::new(inner))
    }

    /// Right-nested pairing: `(a, b, c)` is `Pair(a, Pair(b, c))`.
    pub fn tuple(items: impl IntoIterator<Item = Term>) -> Term {
        let mut items: Vec<Term> = items.into_iter().collect();
        let mut acc = items.pop().expect("tuple needs at least one component");
        while let Some(prev) = items.pop() {
            acc = Term::pair(prev, acc);
        }
        acc
    }

    /// Splits a right-nested tuple into exactly `arity` components.
    pub fn untuple(&self, arity: usize) -> Option<Vec<&Term>> {
        if arity == 0 {
            return None;
        }
        let mut out = Vec::with_capacity(arity);
        let mut cur = self;
        for _ in 1..arity {
            match cur {
                Term::Pair(l, r) => {
                    out.push(l.as_ref());
                    cur = r.as_ref();
                }
                _ => return None,
            }
        }
        out.push(cur);
        Some(out)
    }

    pub fn is_key(&self) -> bool {
        matches!(self, Term::Key(_))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Term::Name(_) | Term::Key(_) | Term::Tag(_) | Term::Host(_))
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Term::Name(a) | Term::Key(a) => Some(&a.label),
            _ => None,
        }
    }

    /// Direct children, left to right.
    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Pair(a, b) | Term::SymEnc(a, b) | Term::IdEnc(a, b) => vec![a.as_ref(), b.as_ref()],
            Term::Hash(a) => vec![a.as_ref()],
            _ => Vec::new(),
        }
    }

    /// Every subterm including `self`, preorder.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            let kids = t.children();
            stack.extend(kids.into_iter().rev());
        }
        out
    }

    /// Constructor nesting depth; atoms have height 0.
    pub fn height(&self) -> usize {
        self.children().iter().map(|c| c.height() + 1).max().unwrap_or(0)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        sexpr::write_term(self, f)
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        sexpr::write_term(self, f)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_term(&text).map_err(serde::de::Error::custom)
    }
}

pub fn sym_encrypt(message: Term, key: Term) -> Result<Term, CryptoError> {
    if !key.is_key() {
        return Err(CryptoError::NotAKey(key));
    }
    Ok(Term::SymEnc(Arc::new(message), Arc::new(key)))
}

pub fn sym_decrypt(cipher: &Term, key: &Term) -> Result<Term, CryptoError> {
    if !key.is_key() {
        return Err(CryptoError::NotAKey(key.clone()));
    }
    match cipher {
        Term::SymEnc(m, k) if k.as_ref() == key => Ok(m.as_ref().clone()),
        Term::SymEnc(..) => Err(CryptoError::WrongKey),
        other => Err(CryptoError::NotCiphertext(other.clone())),
    }
}

/// Identity wrapping. A distinct constructor from [`sym_encrypt`] so secrecy
/// queries can target wrapped identities specifically.
pub fn id_encrypt(id: Term, key: Term) -> Result<Term, CryptoError> {
    if !key.is_key() {
        return Err(CryptoError::NotAKey(key));
    }
    Ok(Term::IdEnc(Arc::new(id), Arc::new(key)))
}

pub fn id_decrypt(cipher: &Term, key: &Term) -> Result<Term, CryptoError> {
    if !key.is_key() {
        return Err(CryptoError::NotAKey(key.clone()));
    }
    match cipher {
        Term::IdEnc(m, k) if k.as_ref() == key => Ok(m.as_ref().clone()),
        Term::IdEnc(..) => Err(CryptoError::WrongKey),
        other => Err(CryptoError::NotCiphertext(other.clone())),
    }
}
