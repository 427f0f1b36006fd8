//! Behavioral tests for the perception layer on a synthetic 3-state chain:
//! CUSUM drift matches the KL rate, injected model switches are caught within
//! the window, false alarms are monotone in the threshold, and the inference
//! function is a pure function of the window suffix.

use hyperplan::game::{ConcurrentGame, HistoryRec};
use hyperplan::inference::{
    eta, history_obs, window_key, CusumState, Hypothesis, HypothesisSpace, TieRule,
};
use hyperplan::scltl::{parse, to_dfa, ApSet};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic 3-state cycle: P1 action 0 stays, action 1 advances; P2 has
/// a single action.
fn chain_game() -> ConcurrentGame {
    let ap = ApSet::new(["g"]).unwrap();
    let mut rows = Vec::new();
    for s in 0..3u32 {
        rows.push(vec![(s, 1.0)]);
        rows.push(vec![((s + 1) % 3, 1.0)]);
    }
    ConcurrentGame::new(
        3,
        0,
        ap,
        vec![0, 0, 1 << 0],
        vec!["stay".into(), "go".into()],
        vec!["w".into()],
        vec![vec![0]; 3],
        rows,
        (0..3).map(|s| format!("s{s}")).collect(),
    )
    .unwrap()
}

/// Hypothesis space where x predicts P1 plays `go` with probability `p_go[x]`
/// in every state.
fn space_with(g: &ConcurrentGame, p_go: &[f64]) -> HypothesisSpace {
    let hyps = p_go
        .iter()
        .map(|&p| {
            let dfa = to_dfa(&parse("F g", &g.ap).unwrap(), &g.ap).unwrap();
            let n = g.num_states * dfa.num_states;
            let p1 = vec![vec![1.0 - p, p]; n];
            let p2 = vec![vec![1.0]; n];
            Hypothesis::new(g, dfa, p1, p2).unwrap()
        })
        .collect();
    HypothesisSpace::new(hyps, 0).unwrap()
}

fn simulate_action(p_go: f64, rng: &mut impl Rng) -> usize {
    usize::from(rng.gen_bool(p_go))
}

#[test]
fn cusum_drift_matches_kl_rate() {
    let g = chain_game();
    let space = space_with(&g, &[0.8, 0.3]);
    // KL(x₁ ∥ x₀) per observation.
    let kl = 0.3 * (0.3f64 / 0.8).ln() + 0.7 * (0.7f64 / 0.2).ln();
    let steps = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut st = CusumState::new(2, 0, steps, f64::INFINITY, TieRule::LowestIndex);
    let mut s = 0usize;
    for _ in 0..steps {
        let a1 = simulate_action(0.3, &mut rng); // stream drawn from x₁'s model
        let (s_next, _) = {
            let row = g.row(s, a1, 0);
            (row[0].0 as usize, row[0].1)
        };
        let y = hyperplan::inference::Obs {
            s: s as u32,
            a1: a1 as u16,
            a2: 0,
            s_next: s_next as u32,
        };
        st.update(space.log_measures(&g, &y));
        s = s_next;
    }
    let slope = st.z[1] / steps as f64;
    assert!(
        (slope - kl).abs() < 0.1,
        "observed drift {slope:.4} per step vs KL rate {kl:.4}"
    );
}

/// Run one episode: `pre` nominal steps, then a switch to the alternative
/// model; return whether the detector's nominal is the alternative within
/// `window` steps after the switch.
fn detects_after_switch(
    g: &ConcurrentGame,
    space: &HypothesisSpace,
    p0: f64,
    p1: f64,
    window: usize,
    threshold: f64,
    pre: usize,
    rng: &mut impl Rng,
) -> bool {
    let mut st = CusumState::new(2, 0, window, threshold, TieRule::LowestIndex);
    let mut s = 0usize;
    for k in 0..pre + window {
        let p = if k < pre { p0 } else { p1 };
        let a1 = simulate_action(p, rng);
        let s_next = g.row(s, a1, 0)[0].0 as usize;
        let y = hyperplan::inference::Obs {
            s: s as u32,
            a1: a1 as u16,
            a2: 0,
            s_next: s_next as u32,
        };
        st.update(space.log_measures(&g, &y));
        st.detect_change(rng);
        s = s_next;
        if k >= pre && st.nominal == 1 {
            return true;
        }
    }
    st.nominal == 1
}

#[test]
fn switch_detected_within_window() {
    let g = chain_game();
    let space = space_with(&g, &[0.15, 0.85]);
    let mut hits = 0;
    let runs = 200;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        if detects_after_switch(&g, &space, 0.15, 0.85, 7, 0.3, 10, &mut rng) {
            hits += 1;
        }
    }
    assert!(
        hits as f64 / runs as f64 >= 0.9,
        "detected in only {hits}/{runs} runs"
    );
}

#[test]
fn false_alarms_monotone_in_threshold() {
    let g = chain_game();
    let space = space_with(&g, &[0.7, 0.3]);
    let mut rates = Vec::new();
    for &c in &[0.3, 1.0, 3.0] {
        let mut alarms = 0;
        let runs = 200;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
            let mut st = CusumState::new(2, 0, 7, c, TieRule::LowestIndex);
            let mut s = 0usize;
            let mut fired = false;
            for _ in 0..50 {
                let a1 = simulate_action(0.7, &mut rng); // nominal data
                let s_next = g.row(s, a1, 0)[0].0 as usize;
                let y = hyperplan::inference::Obs {
                    s: s as u32,
                    a1: a1 as u16,
                    a2: 0,
                    s_next: s_next as u32,
                };
                st.update(space.log_measures(&g, &y));
                if st.detect_change(&mut rng).is_some() {
                    fired = true;
                    break;
                }
                s = s_next;
            }
            if fired {
                alarms += 1;
            }
        }
        rates.push(alarms);
    }
    assert!(
        rates[0] >= rates[1] && rates[1] >= rates[2],
        "false-alarm counts not monotone over thresholds: {rates:?}"
    );
    assert!(rates[0] > rates[2], "thresholds indistinguishable: {rates:?}");
}

/// Random consistent history continuation on the chain.
fn extend_random(h: &mut HistoryRec, steps: usize, rng: &mut impl Rng) {
    for _ in 0..steps {
        let s = *h.states.last().unwrap();
        let a1 = rng.gen_range(0..2);
        let s_next = if a1 == 1 { (s + 1) % 3 } else { s };
        h.push(a1, 0, s_next);
    }
}

#[test]
fn eta_trajectories_agree_on_shared_suffixes() {
    let g = chain_game();
    let space = space_with(&g, &[0.8, 0.2]);
    let window = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        // Different random prefixes…
        let mut h1 = HistoryRec::start(0);
        let mut h2 = HistoryRec::start(0);
        extend_random(&mut h1, rng.gen_range(0..8), &mut rng);
        extend_random(&mut h2, rng.gen_range(0..8), &mut rng);
        // …steered to a common state, then a shared suffix of ≥ window moves.
        for h in [&mut h1, &mut h2] {
            let s = *h.states.last().unwrap();
            for _ in 0..(3 - s) % 3 {
                let t = (*h.states.last().unwrap() + 1) % 3;
                h.push(1, 0, t);
            }
        }
        let mut suffix = HistoryRec::start(0);
        extend_random(&mut suffix, window, &mut rng);
        for h in [&mut h1, &mut h2] {
            for (i, &(a1, a2)) in suffix.actions.iter().enumerate() {
                h.push(a1, a2, suffix.states[i + 1]);
            }
        }
        assert_eq!(window_key(&h1, window), window_key(&h2, window));
        assert!(h1.is_consistent(&g) && h2.is_consistent(&g));

        // Identical continuations must produce identical hypothesis
        // trajectories from any starting hypothesis.
        let mut cont = HistoryRec::start(*h1.states.last().unwrap());
        extend_random(&mut cont, rng.gen_range(1..=5), &mut rng);
        for x0 in 0..2 {
            let mut xs1 = vec![eta(&space, &g, window, 0.3, x0, &h1)];
            let mut xs2 = vec![eta(&space, &g, window, 0.3, x0, &h2)];
            let (mut e1, mut e2) = (h1.clone(), h2.clone());
            for (i, &(a1, a2)) in cont.actions.iter().enumerate() {
                e1.push(a1, a2, cont.states[i + 1]);
                e2.push(a1, a2, cont.states[i + 1]);
                xs1.push(eta(&space, &g, window, 0.3, *xs1.last().unwrap(), &e1));
                xs2.push(eta(&space, &g, window, 0.3, *xs2.last().unwrap(), &e2));
            }
            assert_eq!(xs1, xs2, "trajectories diverged on shared suffix");
        }
    }
    // Sanity: the observation projection used throughout matches move count.
    let h = HistoryRec::start(0);
    assert!(history_obs(&h).is_empty());
}
