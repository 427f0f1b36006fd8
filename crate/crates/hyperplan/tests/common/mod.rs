//! Shared oracles for integration tests: independent re-implementations used
//! to cross-check the library, deliberately written in the most direct
//! (slow, obviously-correct) style available.

#![allow(dead_code)]

use hyperplan::scltl::{Formula, Symbol};
use rand::Rng;

/// Direct semantic good-prefix check for PNF co-safe formulas.
///
/// `w` is a finite word; positions ≥ |w| behave as an endless "neutral"
/// symbol on which both an atom and its negation are false. A formula holds
/// on w·neutral^ω exactly when its obligations are discharged within w,
/// which for the co-safe fragment is equivalent to w being a good prefix.
pub fn holds_from(f: &Formula, w: &[Symbol], i: usize) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(p) => i < w.len() && w[i] & (1 << p) != 0,
        Formula::NegAtom(p) => i < w.len() && w[i] & (1 << p) == 0,
        Formula::And(cs) => cs.iter().all(|c| holds_from(c, w, i)),
        Formula::Or(cs) => cs.iter().any(|c| holds_from(c, w, i)),
        Formula::Next(g) => holds_from(g, w, (i + 1).min(w.len())),
        Formula::Until(l, r) => {
            let mut k = i;
            loop {
                if holds_from(r, w, k) {
                    return true;
                }
                if k >= w.len() || !holds_from(l, w, k) {
                    return false;
                }
                k += 1;
            }
        }
    }
}

pub fn is_good_prefix(f: &Formula, w: &[Symbol]) -> bool {
    holds_from(f, w, 0)
}

/// A finite word is accepted (has a good prefix) iff some prefix is good.
pub fn accepts_oracle(f: &Formula, w: &[Symbol]) -> bool {
    (0..=w.len()).any(|k| is_good_prefix(f, &w[..k]))
}

/// Random PNF co-safe formula over `num_aps` atoms.
pub fn random_formula(rng: &mut impl Rng, num_aps: usize, depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..4) {
            0 => Formula::True,
            1 => Formula::False,
            2 => Formula::Atom(rng.gen_range(0..num_aps)),
            _ => Formula::NegAtom(rng.gen_range(0..num_aps)),
        };
    }
    match rng.gen_range(0..4) {
        0 => Formula::And(vec![
            random_formula(rng, num_aps, depth - 1),
            random_formula(rng, num_aps, depth - 1),
        ]),
        1 => Formula::Or(vec![
            random_formula(rng, num_aps, depth - 1),
            random_formula(rng, num_aps, depth - 1),
        ]),
        2 => Formula::Next(Box::new(random_formula(rng, num_aps, depth - 1))),
        _ => Formula::Until(
            Box::new(random_formula(rng, num_aps, depth - 1)),
            Box::new(random_formula(rng, num_aps, depth - 1)),
        ),
    }
}

/// All words of length exactly `len` over `num_syms` symbols.
pub fn all_words(num_syms: usize, len: usize) -> Vec<Vec<Symbol>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * num_syms);
        for w in &out {
            for s in 0..num_syms {
                let mut w2 = w.clone();
                w2.push(s as Symbol);
                next.push(w2);
            }
        }
        out = next;
    }
    out
}
