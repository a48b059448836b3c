//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code under test except to build values.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use chatsrp_core::Term;
use num_bigint::BigUint;
use proptest::prelude::*;

pub const ESCAPE: u64 = 0x9E37_79B9_7F4A_7C15;

/// One skew tent map step replayed in arbitrary precision.
pub fn tent_oracle(state: u64, a: u64) -> u64 {
    let one = BigUint::from(1u8) << 64;
    let s = BigUint::from(state);
    let a = BigUint::from(a);
    let raw: BigUint = if s < a { (&s << 64) / &a } else { ((&one - &s) << 64) / (&one - &a) };
    let rem: BigUint = raw % &one;
    let low = rem.iter_u64_digits().next().unwrap_or(0);
    if low == 0 || low == u64::MAX {
        low ^ ESCAPE
    } else {
        low
    }
}

pub fn count_ones(bytes: &[u8]) -> u64 {
    bytes.iter().map(|b| u64::from(b.count_ones())).sum()
}

/// Frequency test: the count of ones lies within five standard deviations of n/2.
pub fn monobit_ok(bytes: &[u8], n: usize) -> bool {
    let ones = count_ones(bytes) as f64;
    let n = n as f64;
    (ones - n / 2.0).abs() <= 5.0 * n.sqrt() / 2.0
}

/// Wald-Wolfowitz runs test at five standard deviations.
pub fn runs_ok(bytes: &[u8], n: usize) -> bool {
    let bit = |i: usize| (bytes[i / 8] >> (7 - i % 8)) & 1;
    let ones = (0..n).filter(|&i| bit(i) == 1).count() as f64;
    let zeros = n as f64 - ones;
    if ones == 0.0 || zeros == 0.0 {
        return false;
    }
    let runs = 1 + (1..n).filter(|&i| bit(i) != bit(i - 1)).count();
    let n = n as f64;
    let mean = 2.0 * ones * zeros / n + 1.0;
    let var = (mean - 1.0) * (mean - 2.0) / (n - 1.0);
    (runs as f64 - mean).abs() <= 5.0 * var.sqrt()
}

fn subterms_into(t: &Term, out: &mut BTreeSet<Term>) {
    if !out.insert(t.clone()) {
        return;
    }
    match t {
        Term::Pair(a, b) | Term::SymEnc(a, b) | Term::IdEnc(a, b) => {
            subterms_into(a, out);
            subterms_into(b, out);
        }
        Term::Hash(a) => subterms_into(a, out),
        _ => {}
    }
}

/// Every subterm of `t`, itself included.
pub fn subterms(t: &Term) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    subterms_into(t, &mut out);
    out
}

fn universe(base: &[Term], target: &Term) -> BTreeSet<Term> {
    let mut u = BTreeSet::new();
    for t in base.iter().chain(std::iter::once(target)) {
        subterms_into(t, &mut u);
    }
    u
}

fn destruct(known: &BTreeSet<Term>) -> Vec<Term> {
    let mut out = Vec::new();
    for t in known {
        match t {
            Term::Pair(a, b) => {
                out.push(a.as_ref().clone());
                out.push(b.as_ref().clone());
            }
            Term::SymEnc(m, k) | Term::IdEnc(m, k) if known.contains(k.as_ref()) => out.push(m.as_ref().clone()),
            _ => {}
        }
    }
    out
}

fn construct(known: &BTreeSet<Term>, u: &BTreeSet<Term>) -> Vec<Term> {
    u.iter()
        .filter(|t| !known.contains(*t))
        .filter(|t| match t {
            Term::Pair(a, b) => known.contains(a.as_ref()) && known.contains(b.as_ref()),
            Term::SymEnc(m, k) | Term::IdEnc(m, k) => {
                matches!(k.as_ref(), Term::Key(_)) && known.contains(m.as_ref()) && known.contains(k.as_ref())
            }
            Term::Hash(a) => known.contains(a.as_ref()),
            _ => false,
        })
        .cloned()
        .collect()
}

/// Brute-force Dolev-Yao derivability: saturate every rule over the finite
/// universe of subterms of the base and the target.
pub fn dy_derivable(base: &[Term], target: &Term) -> bool {
    let u = universe(base, target);
    let mut known: BTreeSet<Term> = base.iter().cloned().collect();
    loop {
        let before = known.len();
        let mut new = destruct(&known);
        new.extend(construct(&known, &u));
        known.extend(new);
        if known.len() == before {
            return known.contains(target);
        }
    }
}

/// Fewest nested constructor layers needed on top of the destructor closure,
/// or None if the target is not derivable at all.
pub fn dy_layers(base: &[Term], target: &Term) -> Option<usize> {
    let u = universe(base, target);
    let mut known: BTreeSet<Term> = base.iter().cloned().collect();
    loop {
        let before = known.len();
        known.extend(destruct(&known));
        if known.len() == before {
            break;
        }
    }
    for layer in 0.. {
        if known.contains(target) {
            return Some(layer);
        }
        let new = construct(&known, &u);
        if new.is_empty() {
            return None;
        }
        known.extend(new);
    }
    unreachable!()
}

/// Maximum matching by exhaustive search over assignments.
pub fn brute_matching(n_left: usize, n_right: usize, adj: &[Vec<usize>]) -> usize {
    fn go(i: usize, adj: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
        if i == adj.len() {
            return 0;
        }
        let mut best = go(i + 1, adj, used);
        for &r in &adj[i] {
            if !used[r] {
                used[r] = true;
                best = best.max(1 + go(i + 1, adj, used));
                used[r] = false;
            }
        }
        best
    }
    assert_eq!(adj.len(), n_left);
    go(0, adj, &mut vec![false; n_right])
}

/// Terms over a small alphabet so that random sets overlap often.
pub fn arb_term(depth: u32) -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        (0u128..3).prop_map(|i| Term::name("n", i)),
        (0u128..2).prop_map(|i| Term::key("k", i)),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        let key = (0u128..2).prop_map(|i| Term::key("k", i));
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
            (inner.clone(), key.clone()).prop_map(|(m, k)| Term::SymEnc(Arc::new(m), Arc::new(k))),
            (inner.clone(), key).prop_map(|(m, k)| Term::IdEnc(Arc::new(m), Arc::new(k))),
            inner.prop_map(Term::hash),
        ]
    })
}

pub fn arb_base() -> impl Strategy<Value = Vec<Term>> {
    prop::collection::vec(arb_term(3), 0..=8)
}
