//! Cross-checks the compiled DFAs against a brute-force semantic evaluator
//! over exhaustive word sets.

mod common;

use common::{accepts_oracle, all_words, random_formula};
use hyperplan::scltl::{parse, to_dfa, ApSet, Formula};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_formula_against_oracle(f: &Formula, ap: &ApSet, max_len: usize) {
    let d = to_dfa(f, ap).unwrap();
    for len in 0..=max_len {
        for w in all_words(ap.num_symbols(), len) {
            assert_eq!(
                d.accepts(&w),
                accepts_oracle(f, &w),
                "disagreement on formula {f:?} word {w:?}"
            );
        }
    }
}

#[test]
fn benchmark_formulas_match_oracle() {
    let ap = ApSet::new(["obs", "A", "B", "C"]).unwrap();
    let f = parse("(!obs U A) & (!(B|obs) U C)", &ap).unwrap();
    // 4 atoms: trim word length to keep the sweep fast but exhaustive.
    check_formula_against_oracle(&f, &ap, 4);

    let ap2 = ApSet::new(["a", "b"]).unwrap();
    for text in ["F a", "a U b", "F (a & F b)", "(!a U b) | X a", "a U (b & (a U !b))"] {
        let f = parse(text, &ap2).unwrap();
        check_formula_against_oracle(&f, &ap2, 6);
    }
}

#[test]
fn random_formulas_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ap = ApSet::new(["a", "b", "c"]).unwrap();
    for _ in 0..60 {
        let f = random_formula(&mut rng, 3, 3);
        check_formula_against_oracle(&f, &ap, 4);
    }
    let ap2 = ApSet::new(["a", "b"]).unwrap();
    for _ in 0..60 {
        let f = random_formula(&mut rng, 2, 4);
        check_formula_against_oracle(&f, &ap2, 6);
    }
}
