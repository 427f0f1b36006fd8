//! Zero-sum reachability solvers: matrix-game LP (simplex), reachability-MDP
//! value iteration, Shapley iteration for concurrent games against a DFA
//! objective, leader-follower (Stackelberg) responses, and subgoal games for
//! the cognitive-hierarchy opponent model.
//!
//! All planning is undiscounted reachability (stochastic shortest path with
//! absorbing targets); tie-breaking rules are deterministic everywhere so
//! identical inputs yield identical policies.

use thiserror::Error;

use crate::game::ConcurrentGame;
use crate::scltl::Dfa;

pub const VI_TOL: f64 = 1e-6;
/// Tighter stop for single-agent reachability VI: a sup-norm sweep change of
/// d only bounds the value error by d·ρ/(1−ρ), so stopping at 1e-6 can leave
/// errors of several 1e-6 on slow-mixing chains. 1e-9 keeps the returned
/// values within 1e-6 of the fixed point for any contraction rate ≤ 0.999.
pub const REACH_VI_TOL: f64 = 1e-9;
pub const VI_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("degenerate matrix game (empty action set)")]
    Degenerate,
    #[error("value iteration did not converge within {0} sweeps")]
    NonConvergence(usize),
}

// ---------------------------------------------------------------------------
// Matrix games
// ---------------------------------------------------------------------------

/// Stage game payoff matrix; the row player maximizes.
#[derive(Debug, Clone)]
pub struct MatrixGame {
    pub payoff: Vec<Vec<f64>>,
}

impl MatrixGame {
    pub fn rows(&self) -> usize {
        self.payoff.len()
    }
    pub fn cols(&self) -> usize {
        self.payoff.first().map_or(0, |r| r.len())
    }
}

/// Minimax value and optimal mixed strategies of a zero-sum matrix game.
///
/// Solved by the standard value-variable LP: after shifting entries positive,
/// maximize Σx s.t. Mᵀ·… — concretely the column player's normalized LP
/// `max Σy, M y ≤ 1, y ≥ 0` via a dense tableau simplex with Bland's rule,
/// which is deterministic (lexicographically smallest pivots), so the
/// returned strategies are unique for a given input.
pub fn solve_matrix_game(m: &MatrixGame) -> Result<(f64, Vec<f64>, Vec<f64>), SolverError> {
    let (nr, nc) = (m.rows(), m.cols());
    if nr == 0 || nc == 0 {
        return Err(SolverError::Degenerate);
    }
    // Fast path: pure saddle point (maximin == minimax over pure actions).
    let row_mins: Vec<f64> =
        m.payoff.iter().map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
    let col_maxs: Vec<f64> = (0..nc)
        .map(|j| (0..nr).map(|i| m.payoff[i][j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let maximin = row_mins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let minimax = col_maxs.iter().cloned().fold(f64::INFINITY, f64::min);
    if maximin == minimax {
        let i = row_mins.iter().position(|&v| v == maximin).unwrap();
        let j = col_maxs.iter().position(|&v| v == minimax).unwrap();
        let mut p = vec![0.0; nr];
        let mut q = vec![0.0; nc];
        p[i] = 1.0;
        q[j] = 1.0;
        return Ok((maximin, p, q));
    }

    // Shift all entries ≥ 1 so the game value is positive.
    let min_entry = row_mins.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min_entry;

    // Tableau: nc structural vars y, nr slacks, RHS. Constraints M'y + s = 1.
    let w = nc + nr + 1;
    let mut t = vec![vec![0.0f64; w]; nr + 1];
    for i in 0..nr {
        for j in 0..nc {
            t[i][j] = m.payoff[i][j] + shift;
        }
        t[i][nc + i] = 1.0;
        t[i][w - 1] = 1.0;
    }
    // Objective row: maximize Σy ⇒ minimize −Σy; store z-row as −c.
    for j in 0..nc {
        t[nr][j] = -1.0;
    }
    let mut basis: Vec<usize> = (nc..nc + nr).collect();

    const EPS: f64 = 1e-12;
    loop {
        // Bland: entering = smallest index with negative reduced cost.
        let Some(enter) = (0..nc + nr).find(|&j| t[nr][j] < -EPS) else { break };
        // Leaving: min ratio, ties by smallest row index.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in t.iter().enumerate().take(nr) {
            if row[enter] > EPS {
                let ratio = row[w - 1] / row[enter];
                if ratio < best - EPS {
                    best = ratio;
                    leave = Some(i);
                } else if (ratio - best).abs() <= EPS {
                    // Bland tie rule: smallest basis variable index.
                    if let Some(l) = leave {
                        if basis[i] < basis[l] {
                            leave = Some(i);
                        }
                    }
                }
            }
        }
        let Some(leave) = leave else {
            // Unbounded cannot happen: entries ≥ 1 bound Σy by 1.
            return Err(SolverError::Degenerate);
        };
        // Pivot.
        let piv = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..=nr {
            if i != leave && t[i][enter].abs() > 0.0 {
                let f = t[i][enter];
                for j in 0..w {
                    t[i][j] -= f * t[leave][j];
                }
            }
        }
        basis[leave] = enter;
    }

    let sum_y = t[nr][w - 1]; // optimal Σy (z-row RHS after maximization)
    let v_shifted = 1.0 / sum_y;
    let value = v_shifted - shift;
    // Column strategy from basic y variables.
    let mut q = vec![0.0; nc];
    for (i, &b) in basis.iter().enumerate() {
        if b < nc {
            q[b] = t[i][w - 1] * v_shifted;
        }
    }
    // Row strategy from duals: reduced costs of the slack columns.
    let mut p = vec![0.0; nr];
    for i in 0..nr {
        p[i] = t[nr][nc + i] * v_shifted;
    }
    // Clean tiny negatives and renormalize.
    for v in p.iter_mut().chain(q.iter_mut()) {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let ps: f64 = p.iter().sum();
    let qs: f64 = q.iter().sum();
    for v in p.iter_mut() {
        *v /= ps;
    }
    for v in q.iter_mut() {
        *v /= qs;
    }
    Ok((value, p, q))
}

// ---------------------------------------------------------------------------
// Reachability MDPs
// ---------------------------------------------------------------------------

/// Single-agent reachability MDP with per-state action counts and sparse rows.
#[derive(Debug, Clone)]
pub struct ReachMdp {
    offsets: Vec<u32>,
    rows: Vec<Vec<(u32, f64)>>,
    pub target: Vec<bool>,
    pub sink: Vec<bool>,
    pub init: usize,
}

impl ReachMdp {
    pub fn new(
        actions_per_state: &[usize],
        rows: Vec<Vec<(u32, f64)>>,
        target: Vec<bool>,
        sink: Vec<bool>,
        init: usize,
    ) -> Self {
        let mut offsets = Vec::with_capacity(actions_per_state.len() + 1);
        let mut acc = 0u32;
        offsets.push(0);
        for &n in actions_per_state {
            acc += n as u32;
            offsets.push(acc);
        }
        assert_eq!(acc as usize, rows.len());
        ReachMdp { offsets, rows, target, sink, init }
    }

    pub fn num_states(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_actions(&self, s: usize) -> usize {
        (self.offsets[s + 1] - self.offsets[s]) as usize
    }

    pub fn row(&self, s: usize, a: usize) -> &[(u32, f64)] {
        &self.rows[self.offsets[s] as usize + a]
    }
}

/// Value iteration for Pr(reach target): V(s) = max_a Σ P(s'|s,a) V(s'),
/// fixed at 1 on targets and 0 on sinks. Returns values and the argmax
/// policy (ties broken by smallest action id).
pub fn mdp_reachability_vi(m: &ReachMdp) -> Result<(Vec<f64>, Vec<u32>), SolverError> {
    let n = m.num_states();
    let mut v = vec![0.0f64; n];
    for s in 0..n {
        if m.target[s] {
            v[s] = 1.0;
        }
    }
    for _ in 0..VI_MAX_SWEEPS {
        let mut delta = 0.0f64;
        for s in 0..n {
            if m.target[s] || m.sink[s] {
                continue;
            }
            let mut best = 0.0f64;
            for a in 0..m.num_actions(s) {
                let q: f64 = m.row(s, a).iter().map(|&(t, p)| p * v[t as usize]).sum();
                if q > best {
                    best = q;
                }
            }
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < REACH_VI_TOL {
            let policy = extract_proper_policy(m, &v);
            return Ok((v, policy));
        }
    }
    Err(SolverError::NonConvergence(VI_MAX_SWEEPS))
}

/// Greedy policy extraction that avoids procrastination: at convergence,
/// actions that merely preserve the value (e.g. self-loops among value-1
/// states) tie with genuinely progressing ones, and a naive argmax can yield
/// a policy that never reaches the target. Settle states outward from the
/// targets instead: a state is fixed on the smallest value-optimal action
/// with positive probability of entering the already-settled region.
fn extract_proper_policy(m: &ReachMdp, v: &[f64]) -> Vec<u32> {
    let n = m.num_states();
    let mut policy = vec![0u32; n];
    let mut settled: Vec<bool> =
        (0..n).map(|s| m.target[s] || m.sink[s] || v[s] <= 0.0).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if settled[s] {
                continue;
            }
            let qs: Vec<f64> = (0..m.num_actions(s))
                .map(|a| m.row(s, a).iter().map(|&(t, p)| p * v[t as usize]).sum())
                .collect();
            let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (a, &q) in qs.iter().enumerate() {
                if q >= best - 1e-9
                    && m.row(s, a).iter().any(|&(t, p)| p > 0.0 && settled[t as usize])
                {
                    policy[s] = a as u32;
                    settled[s] = true;
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }
    policy
}

// ---------------------------------------------------------------------------
// Game × DFA products
// ---------------------------------------------------------------------------

/// Dense indexing of the product of a game with an objective DFA:
/// id = s·|Q| + q, with the initial automaton state already advanced by the
/// initial label, q₀ = δ(ι, L(s₀)).
pub struct GameDfaProduct<'a> {
    pub game: &'a ConcurrentGame,
    pub dfa: &'a Dfa,
}

impl<'a> GameDfaProduct<'a> {
    pub fn new(game: &'a ConcurrentGame, dfa: &'a Dfa) -> Self {
        GameDfaProduct { game, dfa }
    }

    pub fn num_states(&self) -> usize {
        self.game.num_states * self.dfa.num_states
    }

    #[inline]
    pub fn id(&self, s: usize, q: u32) -> usize {
        s * self.dfa.num_states + q as usize
    }

    #[inline]
    pub fn split(&self, id: usize) -> (usize, u32) {
        (id / self.dfa.num_states, (id % self.dfa.num_states) as u32)
    }

    pub fn init(&self) -> usize {
        let s0 = self.game.init;
        let q0 = self.dfa.step(self.dfa.init, self.game.label(s0));
        self.id(s0, q0)
    }

    /// Automaton successor for a game transition into s'.
    #[inline]
    pub fn q_next(&self, q: u32, s_next: usize) -> u32 {
        self.dfa.step(q, self.game.label(s_next))
    }
}

/// Shapley-iteration solution: symmetric-information equilibrium values and
/// per-product-state mixed strategies.
pub struct ShapleySolution {
    pub values: Vec<f64>,
    /// Per product state: distribution over all P1 actions.
    pub strat1: Vec<Vec<f64>>,
    /// Per product state: distribution over all P2 actions (0 off-availability).
    pub strat2: Vec<Vec<f64>>,
    pub init: usize,
    pub sweeps: usize,
}

/// Value iteration with a matrix-game solve per state (Shapley iteration) on
/// the product of `g` with `dfa`: targets are accepting automaton states,
/// losing sinks the automaton dead state.
pub fn shapley_vi(g: &ConcurrentGame, dfa: &Dfa) -> Result<ShapleySolution, SolverError> {
    let prod = GameDfaProduct::new(g, dfa);
    let n = prod.num_states();
    let mut v = vec![0.0f64; n];
    for id in 0..n {
        let (_, q) = prod.split(id);
        if dfa.is_accepting(q) {
            v[id] = 1.0;
        }
    }
    let build_matrix = |id: usize, v: &[f64]| -> MatrixGame {
        let (s, q) = prod.split(id);
        let a2s = g.avail2(s);
        let mut payoff = vec![vec![0.0f64; a2s.len()]; g.num_a1()];
        for (r, row) in payoff.iter_mut().enumerate() {
            for (c, &a2) in a2s.iter().enumerate() {
                row[c] = g
                    .row(s, r, a2 as usize)
                    .iter()
                    .map(|&(t, p)| p * v[prod.id(t as usize, prod.q_next(q, t as usize))])
                    .sum();
            }
        }
        MatrixGame { payoff }
    };
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        if sweeps > VI_MAX_SWEEPS {
            return Err(SolverError::NonConvergence(VI_MAX_SWEEPS));
        }
        let mut delta = 0.0f64;
        for id in 0..n {
            let (_, q) = prod.split(id);
            if dfa.is_accepting(q) || dfa.is_sink(q) {
                continue;
            }
            let (val, _, _) = solve_matrix_game(&build_matrix(id, &v))?;
            delta = delta.max((val - v[id]).abs());
            v[id] = val;
        }
        if delta < VI_TOL {
            break;
        }
    }
    // Final extraction sweep for the strategy profile.
    let mut strat1 = Vec::with_capacity(n);
    let mut strat2 = Vec::with_capacity(n);
    for id in 0..n {
        let (s, q) = prod.split(id);
        if dfa.is_accepting(q) || dfa.is_sink(q) {
            let mut p1 = vec![0.0; g.num_a1()];
            p1[0] = 1.0;
            let mut p2 = vec![0.0; g.num_a2()];
            p2[g.avail2(s)[0] as usize] = 1.0;
            strat1.push(p1);
            strat2.push(p2);
            continue;
        }
        let (_, p, qstrat) = solve_matrix_game(&build_matrix(id, &v))?;
        let mut p2 = vec![0.0; g.num_a2()];
        for (c, &a2) in g.avail2(s).iter().enumerate() {
            p2[a2 as usize] = qstrat[c];
        }
        strat1.push(p);
        strat2.push(p2);
    }
    Ok(ShapleySolution { values: v, strat1, strat2, init: prod.init(), sweeps })
}

/// Leader-follower response for one hypothesis objective: P2 commits an
/// action per product state, P1 best-responds knowing it. The fixed point
/// V(s,q) = min_{a₂} max_{a₁} Σ P(s'|s,a)·V(s',q') is the value of the
/// turn-based game where the leader reveals a₂ first; ties pick the smallest
/// action ids.
pub struct StackelbergSolution {
    pub values: Vec<f64>,
    /// Leader action per product state (index into the full A₂ set).
    pub p2_action: Vec<u16>,
    /// Follower best response per product state.
    pub p1_action: Vec<u16>,
    pub init: usize,
}

pub fn stackelberg_response(g: &ConcurrentGame, dfa_x: &Dfa) -> Result<StackelbergSolution, SolverError> {
    let prod = GameDfaProduct::new(g, dfa_x);
    let n = prod.num_states();
    let mut v = vec![0.0f64; n];
    for id in 0..n {
        let (_, q) = prod.split(id);
        if dfa_x.is_accepting(q) {
            v[id] = 1.0;
        }
    }
    let minmax = |id: usize, v: &[f64]| -> (f64, u16, u16) {
        let (s, q) = prod.split(id);
        let mut best_val = f64::INFINITY;
        let mut best_a2 = 0u16;
        let mut best_a1 = 0u16;
        for &a2 in g.avail2(s) {
            let mut inner_val = f64::NEG_INFINITY;
            let mut inner_a1 = 0u16;
            for a1 in 0..g.num_a1() {
                let qv: f64 = g
                    .row(s, a1, a2 as usize)
                    .iter()
                    .map(|&(t, p)| p * v[prod.id(t as usize, prod.q_next(q, t as usize))])
                    .sum();
                if qv > inner_val + 1e-12 {
                    inner_val = qv;
                    inner_a1 = a1 as u16;
                }
            }
            if inner_val < best_val - 1e-12 {
                best_val = inner_val;
                best_a2 = a2;
                best_a1 = inner_a1;
            }
        }
        (best_val, best_a2, best_a1)
    };
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        if sweeps > VI_MAX_SWEEPS {
            return Err(SolverError::NonConvergence(VI_MAX_SWEEPS));
        }
        let mut delta = 0.0f64;
        for id in 0..n {
            let (_, q) = prod.split(id);
            if dfa_x.is_accepting(q) || dfa_x.is_sink(q) {
                continue;
            }
            let (val, _, _) = minmax(id, &v);
            delta = delta.max((val - v[id]).abs());
            v[id] = val;
        }
        if delta < VI_TOL {
            break;
        }
    }
    let mut p2_action = vec![0u16; n];
    let mut p1_action = vec![0u16; n];
    for id in 0..n {
        let (s, q) = prod.split(id);
        if dfa_x.is_accepting(q) || dfa_x.is_sink(q) {
            p2_action[id] = g.avail2(s)[0];
            continue;
        }
        let (_, a2, a1) = minmax(id, &v);
        p2_action[id] = a2;
        p1_action[id] = a1;
    }
    Ok(StackelbergSolution { values: v, p2_action, p1_action, init: prod.init() })
}

// ---------------------------------------------------------------------------
// Subgoal games (cognitive hierarchy)
// ---------------------------------------------------------------------------

/// Zero-sum stage structure for one subgoal g: states satisfying
/// ¬φ_safe ∨ p_g are absorbing; P1's per-step payoff is the probability of
/// reaching the subgoal in one step, P2's the probability of capture.
pub struct SubgoalGame<'a> {
    pub game: &'a ConcurrentGame,
    pub subgoal_mask: u32,
    pub capture_mask: u32,
    pub absorbing: Vec<bool>,
}

impl<'a> SubgoalGame<'a> {
    pub fn is_subgoal(&self, s: usize) -> bool {
        self.game.label(s) & self.subgoal_mask == self.subgoal_mask
    }
    pub fn is_capture(&self, s: usize) -> bool {
        self.game.label(s) & self.capture_mask == self.capture_mask
    }
    /// E_{s'} 1(s' ⊨ p_g).
    pub fn p1_reward(&self, s: usize, a1: usize, a2: usize) -> f64 {
        self.game
            .row(s, a1, a2)
            .iter()
            .map(|&(t, p)| if self.is_subgoal(t as usize) { p } else { 0.0 })
            .sum()
    }
    /// E_{s'} 1(s' ⊨ ¬φ_safe).
    pub fn p2_reward(&self, s: usize, a1: usize, a2: usize) -> f64 {
        self.game
            .row(s, a1, a2)
            .iter()
            .map(|&(t, p)| if self.is_capture(t as usize) { p } else { 0.0 })
            .sum()
    }
}

/// Build the subgoal game for waypoint atom `subgoal`. `capture_atoms` are
/// the atoms whose conjunction violates φ_safe (e.g. ["p1","p2"]).
pub fn subgoal_game<'a>(
    g: &'a ConcurrentGame,
    subgoal: &str,
    capture_atoms: &[&str],
) -> Result<SubgoalGame<'a>, SolverError> {
    let sub_bit = g.ap.index(subgoal).ok_or(SolverError::Degenerate)?;
    let mut capture_mask = 0u32;
    for a in capture_atoms {
        capture_mask |= 1 << g.ap.index(a).ok_or(SolverError::Degenerate)?;
    }
    let subgoal_mask = 1u32 << sub_bit;
    let absorbing = (0..g.num_states)
        .map(|s| {
            g.label(s) & subgoal_mask == subgoal_mask
                || (capture_mask != 0 && g.label(s) & capture_mask == capture_mask)
        })
        .collect();
    Ok(SubgoalGame { game: g, subgoal_mask, capture_mask, absorbing })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mg(rows: &[&[f64]]) -> MatrixGame {
        MatrixGame { payoff: rows.iter().map(|r| r.to_vec()).collect() }
    }

    #[test]
    fn matching_pennies() {
        let (v, p, q) = solve_matrix_game(&mg(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert!(v.abs() < 1e-9);
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
        assert!((q[0] - 0.5).abs() < 1e-9 && (q[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn dominated_column() {
        // [[1,0],[0,0]]: column player plays the second column, value 0.
        let (v, _p, q) = solve_matrix_game(&mg(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap();
        assert!(v.abs() < 1e-9);
        assert!((q[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn saddle_point_fast_path() {
        let (v, p, q) = solve_matrix_game(&mg(&[&[3.0, 5.0], &[1.0, 2.0]])).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(p, vec![1.0, 0.0]);
        assert_eq!(q, vec![1.0, 0.0]);
    }

    #[test]
    fn classic_2x2_mixed() {
        // [[2,-1],[-1,1]]: value = (2·1 − 1)/(2+1+1+1) = 1/5.
        let (v, p, _q) = solve_matrix_game(&mg(&[&[2.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert!((v - 0.2).abs() < 1e-9, "v={v}");
        assert!((p[0] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn minimax_equalities_hold() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let nr = rng.gen_range(1..=4);
            let nc = rng.gen_range(1..=4);
            let m = MatrixGame {
                payoff: (0..nr)
                    .map(|_| (0..nc).map(|_| rng.gen_range(0.0..1.0)).collect())
                    .collect(),
            };
            let (v, p, q) = solve_matrix_game(&m).unwrap();
            // Row strategy guarantees ≥ v against every column and vice versa.
            for j in 0..nc {
                let got: f64 = (0..nr).map(|i| p[i] * m.payoff[i][j]).sum();
                assert!(got >= v - 1e-7, "row guarantee {got} < {v}");
            }
            for i in 0..nr {
                let got: f64 = (0..nc).map(|j| q[j] * m.payoff[i][j]).sum();
                assert!(got <= v + 1e-7, "col guarantee {got} > {v}");
            }
            let lo = m.payoff.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
            let hi = m.payoff.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn mdp_chain_with_self_loop() {
        // s →(a) m, m: 0.5 self-loop / 0.5 target. Eventual reach prob = 1.
        let rows = vec![
            vec![(1u32, 1.0)],             // s, a0
            vec![(1, 0.5), (2, 0.5)],      // m, a0
            vec![(2, 1.0)],                // t, a0 (absorbing target)
        ];
        let m = ReachMdp::new(
            &[1, 1, 1],
            rows,
            vec![false, false, true],
            vec![false, false, false],
            0,
        );
        let (v, _pi) = mdp_reachability_vi(&m).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-4);
        assert!((v[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn mdp_tie_breaks_to_smallest_action() {
        // Two actions with identical outcome distributions.
        let rows = vec![vec![(1u32, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]];
        let m = ReachMdp::new(&[2, 1], rows, vec![false, true], vec![false, false], 0);
        let (_v, pi) = mdp_reachability_vi(&m).unwrap();
        assert_eq!(pi[0], 0);
    }
}
