use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use crate::crypto::{id_decrypt, id_encrypt, sym_decrypt, sym_encrypt, Term};

/// Constructor nesting allowed by [`Knowledge::can_derive_within`] unless overridden.
pub const DEFAULT_DEPTH: usize = 3;

/// How a term entered the destructor closure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Known,
    Left(Term),
    Right(Term),
    Decrypt { cipher: Term, key: Term },
    DecryptId { cipher: Term, key: Term },
}

/// Attacker knowledge.
///
/// `base` holds what was observed or known initially. The destructor closure
/// (projections, decryption under derivable keys) is kept saturated and needs
/// no bound. Construction (pairing, encryption, hashing) is checked on demand,
/// optionally bounded in nesting depth.
#[derive(Debug, Clone)]
pub struct Knowledge {
    base: BTreeSet<Term>,
    analyzed: BTreeMap<Term, Provenance>,
    /// Ciphertexts in the closure whose key is not derivable yet.
    locked: BTreeSet<Term>,
    depth: usize,
}

impl PartialEq for Knowledge {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.depth == other.depth
    }
}

impl Eq for Knowledge {}

impl Hash for Knowledge {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.base.hash(state);
        self.depth.hash(state);
    }
}

impl Default for Knowledge {
    fn default() -> Self {
        Knowledge::new(DEFAULT_DEPTH)
    }
}

impl Knowledge {
    pub fn new(depth: usize) -> Self {
        Knowledge { base: BTreeSet::new(), analyzed: BTreeMap::new(), locked: BTreeSet::new(), depth }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = Term>, depth: usize) -> Self {
        let mut k = Knowledge::new(depth);
        for t in terms {
            k.learn(t);
        }
        k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn base(&self) -> &BTreeSet<Term> {
        &self.base
    }

    /// The destructor closure of `base`.
    pub fn analyzed(&self) -> impl Iterator<Item = &Term> {
        self.analyzed.keys()
    }

    pub fn provenance(&self, t: &Term) -> Option<&Provenance> {
        self.analyzed.get(t)
    }

    /// Adds an observed term. Returns false if it was already in `base`.
    pub fn learn(&mut self, t: Term) -> bool {
        if !self.base.insert(t.clone()) {
            return false;
        }
        if !self.analyzed.contains_key(&t) {
            self.saturate(vec![(t, Provenance::Known)]);
        } else {
            self.analyzed.insert(t, Provenance::Known);
        }
        true
    }

    fn saturate(&mut self, mut work: Vec<(Term, Provenance)>) {
        loop {
            let mut grew = false;
            while let Some((t, why)) = work.pop() {
                if self.analyzed.contains_key(&t) {
                    continue;
                }
                self.analyzed.insert(t.clone(), why);
                grew = true;
                match &t {
                    Term::Pair(l, r) => {
                        work.push((l.as_ref().clone(), Provenance::Left(t.clone())));
                        work.push((r.as_ref().clone(), Provenance::Right(t.clone())));
                    }
                    Term::SymEnc(..) | Term::IdEnc(..) => {
                        self.locked.insert(t.clone());
                    }
                    _ => {}
                }
            }
            if !grew {
                break;
            }
            // New material may have made some key derivable.
            let unlocked: Vec<Term> = self
                .locked
                .iter()
                .filter(|c| match c {
                    Term::SymEnc(_, k) | Term::IdEnc(_, k) => k.is_key() && self.can_derive(k),
                    _ => false,
                })
                .cloned()
                .collect();
            for c in unlocked {
                self.locked.remove(&c);
                match &c {
                    Term::SymEnc(m, k) => work.push((
                        m.as_ref().clone(),
                        Provenance::Decrypt { cipher: c.clone(), key: k.as_ref().clone() },
                    )),
                    Term::IdEnc(m, k) => work.push((
                        m.as_ref().clone(),
                        Provenance::DecryptId { cipher: c.clone(), key: k.as_ref().clone() },
                    )),
                    _ => unreachable!(),
                }
            }
            if work.is_empty() {
                break;
            }
        }
    }

    /// Exact derivability: destructor closure plus any number of constructor layers.
    pub fn can_derive(&self, t: &Term) -> bool {
        if self.analyzed.contains_key(t) {
            return true;
        }
        match t {
            Term::Pair(a, b) => self.can_derive(a) && self.can_derive(b),
            Term::SymEnc(m, k) | Term::IdEnc(m, k) => k.is_key() && self.can_derive(k) && self.can_derive(m),
            Term::Hash(x) => self.can_derive(x),
            _ => false,
        }
    }

    /// Derivability using at most `depth` nested constructor applications on
    /// top of the destructor closure.
    pub fn can_derive_within(&self, t: &Term, depth: usize) -> bool {
        if self.analyzed.contains_key(t) {
            return true;
        }
        if depth == 0 {
            return false;
        }
        match t {
            Term::Pair(a, b) => self.can_derive_within(a, depth - 1) && self.can_derive_within(b, depth - 1),
            Term::SymEnc(m, k) | Term::IdEnc(m, k) => {
                k.is_key() && self.can_derive_within(k, depth - 1) && self.can_derive_within(m, depth - 1)
            }
            Term::Hash(x) => self.can_derive_within(x, depth - 1),
            _ => false,
        }
    }

    /// [`Knowledge::can_derive_within`] at this knowledge's own depth bound.
    pub fn can_derive_bounded(&self, t: &Term) -> bool {
        self.can_derive_within(t, self.depth)
    }

    /// A derivation tree for `t`, if it is derivable.
    pub fn explain(&self, t: &Term) -> Option<Derivation> {
        if let Some(why) = self.analyzed.get(t) {
            return Some(match why {
                Provenance::Known => Derivation::Known(t.clone()),
                Provenance::Left(p) => Derivation::ProjLeft(Box::new(self.explain(p)?)),
                Provenance::Right(p) => Derivation::ProjRight(Box::new(self.explain(p)?)),
                Provenance::Decrypt { cipher, key } => Derivation::Decrypt {
                    cipher: Box::new(self.explain(cipher)?),
                    key: Box::new(self.explain(key)?),
                },
                Provenance::DecryptId { cipher, key } => Derivation::DecryptId {
                    cipher: Box::new(self.explain(cipher)?),
                    key: Box::new(self.explain(key)?),
                },
            });
        }
        match t {
            Term::Pair(a, b) => Some(Derivation::Pair(Box::new(self.explain(a)?), Box::new(self.explain(b)?))),
            Term::SymEnc(m, k) if k.is_key() => Some(Derivation::Encrypt {
                payload: Box::new(self.explain(m)?),
                key: Box::new(self.explain(k)?),
            }),
            Term::IdEnc(m, k) if k.is_key() => Some(Derivation::EncryptId {
                payload: Box::new(self.explain(m)?),
                key: Box::new(self.explain(k)?),
            }),
            Term::Hash(x) => Some(Derivation::Hash(Box::new(self.explain(x)?))),
            _ => None,
        }
    }
}

/// Returns the closure with the given constructor depth bound. The destructor
/// part is computed eagerly; constructions are answered on demand.
pub fn close(k: &Knowledge, depth: usize) -> Knowledge {
    let mut out = Knowledge::from_terms(k.base.iter().cloned(), depth);
    out.depth = depth;
    out
}

/// A proof that the attacker can compute a term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Derivation {
    Known(Term),
    ProjLeft(Box<Derivation>),
    ProjRight(Box<Derivation>),
    Decrypt { cipher: Box<Derivation>, key: Box<Derivation> },
    DecryptId { cipher: Box<Derivation>, key: Box<Derivation> },
    Pair(Box<Derivation>, Box<Derivation>),
    Encrypt { payload: Box<Derivation>, key: Box<Derivation> },
    EncryptId { payload: Box<Derivation>, key: Box<Derivation> },
    Hash(Box<Derivation>),
}

impl Derivation {
    /// Replays the derivation against `base`, returning the derived term.
    pub fn replay(&self, base: &BTreeSet<Term>) -> Result<Term, String> {
        match self {
            Derivation::Known(t) if base.contains(t) => Ok(t.clone()),
            Derivation::Known(t) => Err(format!("{t} is not in the base")),
            Derivation::ProjLeft(d) | Derivation::ProjRight(d) => match d.replay(base)? {
                Term::Pair(l, r) => Ok(if matches!(self, Derivation::ProjLeft(_)) { l } else { r }.as_ref().clone()),
                other => Err(format!("projection of non-pair {other}")),
            },
            Derivation::Decrypt { cipher, key } => {
                sym_decrypt(&cipher.replay(base)?, &key.replay(base)?).map_err(|e| e.to_string())
            }
            Derivation::DecryptId { cipher, key } => {
                id_decrypt(&cipher.replay(base)?, &key.replay(base)?).map_err(|e| e.to_string())
            }
            Derivation::Pair(a, b) => Ok(Term::pair(a.replay(base)?, b.replay(base)?)),
            Derivation::Encrypt { payload, key } => {
                sym_encrypt(payload.replay(base)?, key.replay(base)?).map_err(|e| e.to_string())
            }
            Derivation::EncryptId { payload, key } => {
                id_encrypt(payload.replay(base)?, key.replay(base)?).map_err(|e| e.to_string())
            }
            Derivation::Hash(d) => Ok(Term::hash(d.replay(base)?)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Derivation::Known(_) => 1,
            Derivation::ProjLeft(d) | Derivation::ProjRight(d) | Derivation::Hash(d) => 1 + d.size(),
            Derivation::Decrypt { cipher: a, key: b }
            | Derivation::DecryptId { cipher: a, key: b }
            | Derivation::Pair(a, b)
            | Derivation::Encrypt { payload: a, key: b }
            | Derivation::EncryptId { payload: a, key: b } => 1 + a.size() + b.size(),
        }
    }
}
