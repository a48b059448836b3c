//! Canonical byte encoding of terms.
//!
//! Preorder, one constructor byte per node:
//!
//! | byte | node   | body                                            |
//! |------|--------|-------------------------------------------------|
//! | 0x01 | name   | `u32` label length, label bytes, `u128` index   |
//! | 0x02 | key    | as name                                         |
//! | 0x03 | pair   | two length-prefixed children                    |
//! | 0x04 | senc   | payload, key (length-prefixed)                  |
//! | 0x05 | ienc   | payload, key (length-prefixed)                  |
//! | 0x06 | hash   | one length-prefixed child                       |
//! | 0x07 | tag    | one byte tag code                               |
//! | 0x08 | host   | role byte, `u32` label length, label bytes      |
//!
//! All integers are big-endian. Lengths count bytes of the child encoding.

use sha2::{Digest, Sha256};

use super::Term;

pub fn to_canonical_bytes(term: &Term) -> Vec<u8> {
    let mut out = Vec::new();
    encode(term, &mut out);
    out
}

fn encode(term: &Term, out: &mut Vec<u8>) {
    match term {
        Term::Name(a) | Term::Key(a) => {
            out.push(if matches!(term, Term::Name(_)) { 0x01 } else { 0x02 });
            put_bytes(a.label.as_bytes(), out);
            out.extend_from_slice(&a.index.to_be_bytes());
        }
        Term::Pair(l, r) | Term::SymEnc(l, r) | Term::IdEnc(l, r) => {
            out.push(match term {
                Term::Pair(..) => 0x03,
                Term::SymEnc(..) => 0x04,
                _ => 0x05,
            });
            put_child(l, out);
            put_child(r, out);
        }
        Term::Hash(inner) => {
            out.push(0x06);
            put_child(inner, out);
        }
        Term::Tag(tag) => {
            out.push(0x07);
            out.push(tag.code());
        }
        Term::Host(p) => {
            out.push(0x08);
            out.push(p.role.code());
            put_bytes(p.label.as_bytes(), out);
        }
    }
}

fn put_bytes(bytes: &[u8], out: &mut Vec<u8>) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn put_child(child: &Term, out: &mut Vec<u8>) {
    let mut buf = Vec::new();
    encode(child, &mut buf);
    put_bytes(&buf, out);
}

/// SHA-256 of the canonical encoding. Used only to label terms in exported traces.
pub fn concretize(term: &Term) -> [u8; 32] {
    Sha256::digest(to_canonical_bytes(term)).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Tag;

    #[test]
    fn layout_of_small_terms() {
        let t = Term::pair(Term::Tag(Tag::Msg2), Term::key("k", 7));
        let bytes = to_canonical_bytes(&t);
        let mut expected = vec![0x03, 0, 0, 0, 2, 0x07, 1, 0, 0, 0, 22, 0x02, 0, 0, 0, 1, b'k'];
        expected.extend_from_slice(&7u128.to_be_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn distinct_constructors_encode_differently() {
        let (m, k) = (Term::name("m", 0), Term::key("k", 0));
        let a = crate::crypto::sym_encrypt(m.clone(), k.clone()).unwrap();
        let b = crate::crypto::id_encrypt(m, k).unwrap();
        assert_ne!(concretize(&a), concretize(&b));
    }
}
