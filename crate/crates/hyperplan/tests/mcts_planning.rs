//! Sampling-based search against the exact solver: on a small reachability
//! MDP the UCT-selected root action must match the value-iteration optimum
//! for nearly every seed.

use hyperplan::mcts::{search, SearchParams};
use hyperplan::solvers::{mdp_reachability_vi, ReachMdp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 6-state MDP. From the start, action 0 leads to an 80% shot at the goal;
/// action 1 to at best a 60% shot (with a tempting 50% shortcut).
fn six_state_mdp() -> ReachMdp {
    ReachMdp::new(
        &[2, 1, 2, 1, 1, 1],
        vec![
            vec![(1, 1.0)],           // s0, a0
            vec![(2, 1.0)],           // s0, a1
            vec![(5, 0.8), (4, 0.2)], // s1
            vec![(5, 0.5), (4, 0.5)], // s2, a0
            vec![(3, 1.0)],           // s2, a1
            vec![(5, 0.6), (4, 0.4)], // s3
            vec![(4, 1.0)],           // s4 self-loop
            vec![(5, 1.0)],           // s5 self-loop
        ],
        vec![false, false, false, false, false, true],
        vec![false, false, false, false, true, false],
        0,
    )
}

#[test]
fn uct_matches_vi_optimum_on_nearly_all_seeds() {
    let m = six_state_mdp();
    let (values, policy) = mdp_reachability_vi(&m).unwrap();
    assert!((values[0] - 0.8).abs() < 1e-6);
    let exact = policy[0] as usize;
    assert_eq!(exact, 0);

    let params = SearchParams {
        budget: 5_000,
        depth: 30,
        c: std::f64::consts::FRAC_1_SQRT_2,
        gamma: 0.95,
    };
    let mut matches = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4_000 + seed);
        let res = search(&m, 0u32, &params, &mut rng).unwrap();
        if res.action == exact {
            matches += 1;
        }
    }
    assert!(matches >= 95, "UCT matched VI on only {matches}/100 seeds");
}

#[test]
fn root_value_tracks_the_discounted_optimum
() {
    let m = six_state_mdp();
    // Optimal play reaches the goal in 2 steps with probability 0.8, so the
    // root mean under near-greedy play approaches 0.8·γ².
    let params = SearchParams {
        budget: 20_000,
        depth: 30,
        c: std::f64::consts::FRAC_1_SQRT_2,
        gamma: 0.95,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let res = search(&m, 0u32, &params, &mut rng).unwrap();
    assert_eq!(res.action, 0);
    let ideal = 0.8 * 0.95f64.powi(2);
    assert!(
        (res.value - ideal).abs() < 0.08,
        "root mean {} far from discounted optimum {ideal}",
        res.value
    );
}
