//! Cognitive-hierarchy opponent modeling: level-k policy stacks computed by
//! entropy-regulated value iteration on subgoal games, trajectory likelihoods
//! per level, and incremental Poisson estimation of the opponent's reasoning
//! depth.

use thiserror::Error;

use crate::game::{ConcurrentGame, HistoryRec};
use crate::solvers::SubgoalGame;

#[derive(Debug, Error)]
pub enum OpponentError {
    #[error("entropy-regulated value iteration did not converge")]
    NonConvergence,
    #[error("level {0} exceeds the stack cap")]
    BadLevel(usize),
}

/// Per-factor floor for trajectory likelihoods.
pub const LIKELIHOOD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct ChParams {
    /// Level cap K.
    pub levels: usize,
    /// Softmax temperature of the quantal best responses.
    pub tau: f64,
    /// Discount for the entropy-regulated solves (keeps them contractive).
    pub gamma: f64,
}

impl Default for ChParams {
    fn default() -> Self {
        ChParams { levels: 4, tau: 1e-2, gamma: 0.95 }
    }
}

/// Level-k policies for one subgoal game: π₂^(0..=K) and π₁^(0..K).
/// Level 0 randomizes equally over available actions; level k quantally best
/// responds to the opponent's level k−1.
pub struct LevelStack {
    /// p2[k][s][a₂].
    pub p2: Vec<Vec<Vec<f64>>>,
    /// p1[k][s][a₁], k < K.
    pub p1: Vec<Vec<Vec<f64>>>,
    pub tau: f64,
}

fn uniform_p1(g: &ConcurrentGame) -> Vec<Vec<f64>> {
    vec![vec![1.0 / g.num_a1() as f64; g.num_a1()]; g.num_states]
}

fn uniform_p2(g: &ConcurrentGame) -> Vec<Vec<f64>> {
    (0..g.num_states)
        .map(|s| {
            let av = g.avail2(s);
            let mut d = vec![0.0; g.num_a2()];
            for &a in av {
                d[a as usize] = 1.0 / av.len() as f64;
            }
            d
        })
        .collect()
}

/// Entropy-regulated single-agent solve: with the opponent's policy `mu`
/// marginalized in, iterate V(s) = τ·log Σ_a exp(Q(s,a)/τ) to the fixed point
/// and return the quantal policy π(a|s) ∝ exp(Q(s,a)/τ).
///
/// `for_p1` selects which player's reward and action set is optimized.
fn entropy_solve(
    sub: &SubgoalGame<'_>,
    mu: &[Vec<f64>],
    for_p1: bool,
    params: &ChParams,
) -> Result<Vec<Vec<f64>>, OpponentError> {
    let g = sub.game;
    let n = g.num_states;
    let mut v = vec![0.0f64; n];
    let q_values = |s: usize, v: &[f64]| -> Vec<f64> {
        let actions: Vec<usize> = if for_p1 {
            (0..g.num_a1()).collect()
        } else {
            g.avail2(s).iter().map(|&a| a as usize).collect()
        };
        actions
            .iter()
            .map(|&a| {
                let mut q = 0.0;
                if for_p1 {
                    for (a2, &w) in mu[s].iter().enumerate() {
                        if w > 0.0 {
                            q += w * sub.p1_reward(s, a, a2);
                            for &(t, p) in g.row(s, a, a2) {
                                q += w * p * params.gamma * v[t as usize];
                            }
                        }
                    }
                } else {
                    for (a1, &w) in mu[s].iter().enumerate() {
                        if w > 0.0 {
                            q += w * sub.p2_reward(s, a1, a);
                            for &(t, p) in g.row(s, a1, a) {
                                q += w * p * params.gamma * v[t as usize];
                            }
                        }
                    }
                }
                q
            })
            .collect()
    };
    let logsumexp = |qs: &[f64]| -> f64 {
        let m = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + params.tau * qs.iter().map(|&q| ((q - m) / params.tau).exp()).sum::<f64>().ln()
    };
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for s in 0..n {
            if sub.absorbing[s] {
                continue;
            }
            let next = logsumexp(&q_values(s, &v));
            delta = delta.max((next - v[s]).abs());
            v[s] = next;
        }
        if delta < 1e-6 {
            // Extract the quantal policy.
            let mut pol = Vec::with_capacity(n);
            for s in 0..n {
                let width = if for_p1 { g.num_a1() } else { g.num_a2() };
                let mut d = vec![0.0; width];
                if sub.absorbing[s] {
                    // Arbitrary but valid: uniform over the player's actions.
                    if for_p1 {
                        d = vec![1.0 / g.num_a1() as f64; width];
                    } else {
                        for &a in g.avail2(s) {
                            d[a as usize] = 1.0 / g.avail2(s).len() as f64;
                        }
                    }
                } else {
                    let qs = q_values(s, &v);
                    let m = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let ws: Vec<f64> =
                        qs.iter().map(|&q| ((q - m) / params.tau).exp()).collect();
                    let z: f64 = ws.iter().sum();
                    if for_p1 {
                        for (a, w) in ws.iter().enumerate() {
                            d[a] = w / z;
                        }
                    } else {
                        for (i, &a) in g.avail2(s).iter().enumerate() {
                            d[a as usize] = ws[i] / z;
                        }
                    }
                }
                pol.push(d);
            }
            return Ok(pol);
        }
    }
    Err(OpponentError::NonConvergence)
}

/// Alternating quantal best responses: π₂^(k) responds to π₁^(k−1) and
/// π₁^(k) to π₂^(k−1), from uniform level-0 policies.
pub fn build_level_stack(
    sub: &SubgoalGame<'_>,
    params: &ChParams,
) -> Result<LevelStack, OpponentError> {
    let g = sub.game;
    let mut p1 = vec![uniform_p1(g)];
    let mut p2 = vec![uniform_p2(g)];
    for k in 1..=params.levels {
        p2.push(entropy_solve(sub, &p1[k - 1], false, params)?);
        if k < params.levels {
            p1.push(entropy_solve(sub, &p2[k - 1], true, params)?);
        }
    }
    Ok(LevelStack { p2, p1, tau: params.tau })
}

/// rᵏ(ρ): probability of the observed play under the level-k opponent model,
/// rᵏ = Π_t P(s_{t+1}|s_t,(a¹_t,a²_t)) · π₂^(k)(a²_t|s_t), floored per factor.
pub fn trajectory_likelihood(
    g: &ConcurrentGame,
    stack: &LevelStack,
    k: usize,
    h: &HistoryRec,
) -> Result<f64, OpponentError> {
    if k >= stack.p2.len() {
        return Err(OpponentError::BadLevel(k));
    }
    let mut r = 1.0f64;
    for (i, &(a1, a2)) in h.actions.iter().enumerate() {
        let s = h.states[i];
        let pt: f64 = g
            .row(s, a1, a2)
            .iter()
            .filter(|&&(t, _)| t as usize == h.states[i + 1])
            .map(|&(_, p)| p)
            .sum();
        r *= (pt * stack.p2[k][s][a2]).max(LIKELIHOOD_FLOOR);
    }
    Ok(r)
}

/// Whether scores are softmaxed over the raw likelihoods (as printed in the
/// source equations) or their logs (robust on long traces).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreScale {
    #[default]
    Raw,
    Log,
}

/// σᵏ ∝ exp(rᵏ/τ), numerically stabilized by max subtraction.
pub fn level_scores(r: &[f64], tau: f64, scale: ScoreScale) -> Vec<f64> {
    let vals: Vec<f64> = match scale {
        ScoreScale::Raw => r.to_vec(),
        ScoreScale::Log => r.iter().map(|&x| x.max(LIKELIHOOD_FLOOR).ln()).collect(),
    };
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = vals.iter().map(|&x| ((x - m) / tau).exp()).collect();
    let z: f64 = ws.iter().sum();
    ws.into_iter().map(|w| w / z).collect()
}

/// pᵏ = λᵏ e^{−λ} / k!.
pub fn poisson_pmf(k: usize, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return f64::from(k == 0);
    }
    let mut fact = 1.0f64;
    for i in 1..=k {
        fact *= i as f64;
    }
    lambda.powi(k as i32) * (-lambda).exp() / fact
}

/// Running-average estimate of P2's reasoning depth: after each trajectory's
/// score vector σ, λ ← (i·λ + Kᵀσ)/(i+1) with K = (0, 1, …, K).
#[derive(Debug, Clone)]
pub struct PoissonEstimate {
    pub lambda: f64,
    pub count: usize,
    pub levels: usize,
    pub tau: f64,
}

impl PoissonEstimate {
    pub fn new(levels: usize, tau: f64) -> Self {
        PoissonEstimate { lambda: 0.0, count: 0, levels, tau }
    }

    /// Expected level under σ.
    pub fn expected_level(sigma: &[f64]) -> f64 {
        sigma.iter().enumerate().map(|(k, &p)| k as f64 * p).sum()
    }

    pub fn update(&mut self, sigma: &[f64]) {
        debug_assert_eq!(sigma.len(), self.levels + 1);
        let mean = Self::expected_level(sigma);
        self.lambda =
            (self.count as f64 * self.lambda + mean) / (self.count as f64 + 1.0);
        self.count += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scltl::ApSet;
    use crate::solvers::subgoal_game;

    /// Single-decision toy over atoms {g, c}: from s0, P2's action `toward`
    /// moves to the capture cell (P2's reward), `away` to a neutral absorbing
    /// cell. P1's actions are no-ops. Capture requires both p-atoms; to keep
    /// it simple the capture cell carries both.
    fn toy() -> ConcurrentGame {
        let ap = ApSet::new(["g", "c"]).unwrap();
        let c_bit = 1u32 << ap.index("c").unwrap();
        let mut rows = Vec::new();
        for s in 0..3u32 {
            for _a1 in 0..1 {
                for a2 in 0..2u32 {
                    let t = if s != 0 {
                        s
                    } else if a2 == 0 {
                        1 // capture cell
                    } else {
                        2 // neutral cell
                    };
                    rows.push(vec![(t, 1.0)]);
                }
            }
        }
        ConcurrentGame::new(
            3,
            0,
            ap,
            vec![0, c_bit, 0],
            vec!["idle".into()],
            vec!["toward".into(), "away".into()],
            vec![vec![0, 1]; 3],
            rows,
            vec!["s0".into(), "cap".into(), "far".into()],
        )
        .unwrap()
    }

    #[test]
    fn level_one_concentrates_on_dominant_action() {
        let g = toy();
        let sub = subgoal_game(&g, "g", &["c"]).unwrap();
        let params = ChParams { levels: 1, tau: 0.01, gamma: 0.95 };
        let stack = build_level_stack(&sub, &params).unwrap();
        // `toward` strictly dominates for P2 (immediate capture reward 1).
        assert!(stack.p2[1][0][0] >= 0.95, "π₂¹(toward|s0) = {}", stack.p2[1][0][0]);
        // Level 0 stays uniform.
        assert_eq!(stack.p2[0][0], vec![0.5, 0.5]);
    }

    #[test]
    fn high_temperature_flattens_to_uniform() {
        // Both outcomes absorbing, so the entropy bonus of future dithering
        // is symmetric and the softmax genuinely flattens as τ grows. (With
        // an asymmetric continuation, V = τ·logΣexp gives non-absorbing
        // states an entropy bonus ∝ τ and the high-τ policy chases it
        // instead — the uniform limit only holds under symmetric volume.)
        let mut g = toy();
        let g_bit = 1u32 << g.ap.index("g").unwrap();
        g.labels[2] = g_bit;
        let sub = subgoal_game(&g, "g", &["c"]).unwrap();
        let params = ChParams { levels: 2, tau: 1e6, gamma: 0.95 };
        let stack = build_level_stack(&sub, &params).unwrap();
        for d in &stack.p2[2] {
            for &p in d {
                assert!((p - 0.5).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn likelihood_multiplies_policy_and_transition() {
        let g = toy();
        let sub = subgoal_game(&g, "g", &["c"]).unwrap();
        let stack = build_level_stack(&sub, &ChParams::default()).unwrap();
        // Level 0 uniform over 2 actions, deterministic world, one step.
        let mut h = HistoryRec::start(0);
        h.push(0, 1, 2);
        let r = trajectory_likelihood(&g, &stack, 0, &h).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        // Two steps: second is absorbing self-loop, still uniform level-0.
        h.push(0, 0, 2);
        let r = trajectory_likelihood(&g, &stack, 0, &h).unwrap();
        assert!((r - 0.25).abs() < 1e-12);
        assert!(trajectory_likelihood(&g, &stack, 9, &h).is_err());
    }

    #[test]
    fn scores_softmax_properties() {
        let s = level_scores(&[0.3, 0.3, 0.3], 1.0, ScoreScale::Raw);
        for &p in &s {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let s = level_scores(&[0.0, 1.0], 1.0, ScoreScale::Raw);
        assert!((s[0] - 0.2689).abs() < 1e-3 && (s[1] - 0.7311).abs() < 1e-3);
        // Shift invariance.
        let a = level_scores(&[0.1, 0.4, 0.2], 0.5, ScoreScale::Raw);
        let b = level_scores(&[5.1, 5.4, 5.2], 0.5, ScoreScale::Raw);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let sum: f64 = a.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_pmf_values() {
        assert!((poisson_pmf(0, 1.7) - (-1.7f64).exp()).abs() < 1e-15);
        assert!((poisson_pmf(2, 2.0) - 0.2707).abs() < 1e-4);
        let total: f64 = (0..=40).map(|k| poisson_pmf(k, 5.0)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(poisson_pmf(0, 0.0), 1.0);
        assert_eq!(poisson_pmf(3, 0.0), 0.0);
    }

    #[test]
    fn lambda_running_mean() {
        let mut est = PoissonEstimate::new(2, 0.1);
        est.update(&[0.0, 0.0, 1.0]); // expected level 2
        assert!((est.lambda - 2.0).abs() < 1e-12);
        est.update(&[1.0, 0.0, 0.0]); // expected level 0
        assert!((est.lambda - 1.0).abs() < 1e-12);
        // Constant stream converges to its expected level (Cesàro mean).
        let sigma = [0.25, 0.5, 0.25];
        for _ in 0..1000 {
            est.update(&sigma);
        }
        assert!((est.lambda - PoissonEstimate::expected_level(&sigma)).abs() < 1e-2);
        assert!(est.lambda >= 0.0 && est.lambda <= est.levels as f64);
    }
}
