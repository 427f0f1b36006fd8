//! The dynamic-hypergame reachability MDP: P1 plans against an opponent who
//! acts on a best response to their *current hypothesis* about P1's objective,
//! while that hypothesis evolves through windowed change detection.
//!
//! The underlying transition system over unbounded histories is countably
//! infinite; only its finite quotient is built here, with each history
//! represented by its window suffix class. A state is the tuple
//! (s, [[h]], q, x): game state, history class, objective-automaton state,
//! and P2's current hypothesis. P2's action is marginalized into the
//! transition function, leaving a single-agent reachability MDP for P1.

use std::collections::HashMap;

use rand::Rng;
use rand::RngCore;
use thiserror::Error;

use crate::game::{ConcurrentGame, HistoryRec};
use crate::inference::{
    decode_window_key, eta_over_window, push_window_key, ClassInterner, HypothesisSpace, Obs,
};
use crate::scltl::Dfa;
use crate::solvers::{mdp_reachability_vi, ReachMdp, SolverError};

#[derive(Debug, Error)]
pub enum HypergameError {
    #[error("state cap {0} exceeded during hypergame construction")]
    StateCap(usize),
    #[error("history is inconsistent with the game at step {0}")]
    InconsistentHistory(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One state of the hypergame MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HyperState {
    pub s: u32,
    /// Interned window-suffix class of the history.
    pub class: u32,
    /// Automaton state of P1's true objective.
    pub q: u32,
    /// P2's current hypothesis index.
    pub x: u16,
}

/// Memoryless per-hypothesis opponent strategy: (x, s) → distribution
/// over A₂.
pub struct BsrOracle {
    /// dist[x][s][a₂].
    pub dist: Vec<Vec<Vec<f64>>>,
}

impl BsrOracle {
    /// Best-response strategies read straight off the solved hypothesis
    /// profiles (automaton state estimated from the current label).
    pub fn from_space(space: &HypothesisSpace, g: &ConcurrentGame) -> Self {
        let dist = space
            .hyps
            .iter()
            .map(|hyp| {
                (0..g.num_states).map(|s| hyp.p2[hyp.product_id(s)].clone()).collect()
            })
            .collect();
        BsrOracle { dist }
    }

    pub fn sample(&self, x: usize, s: usize, rng: &mut dyn RngCore) -> usize {
        sample_dist(&self.dist[x][s], rng)
    }
}

/// Sample an index from a dense probability vector.
pub fn sample_dist(dist: &[f64], rng: &mut dyn RngCore) -> usize {
    let mut u: f64 = rng.gen();
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

#[derive(Debug, Clone, Copy)]
pub struct HyperParams {
    /// Window length in observations (m+1).
    pub window: usize,
    /// CUSUM detection threshold c.
    pub threshold: f64,
    pub state_cap: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams { window: 2, threshold: 0.3, state_cap: 5_000_000 }
    }
}

pub struct HyperMdp {
    pub states: Vec<HyperState>,
    index: HashMap<HyperState, u32>,
    pub classes: ClassInterner,
    /// η output memoized per (hypothesis, window class).
    eta_memo: HashMap<(u16, u32), u16>,
    /// Single-agent view: |A₁| actions everywhere, P2 marginalized in;
    /// absorbing states self-loop.
    pub mdp: ReachMdp,
    pub init: u32,
    pub params: HyperParams,
}

impl HyperMdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn id_of(&self, v: &HyperState) -> Option<u32> {
        self.index.get(v).copied()
    }

    /// Deterministic successor bookkeeping for an observed joint transition:
    /// every state reachable under any available joint action was interned
    /// during construction, so this is a pure lookup.
    pub fn step_state(
        &self,
        g: &ConcurrentGame,
        dfa: &Dfa,
        id: u32,
        a1: usize,
        a2: usize,
        s_next: usize,
    ) -> Option<u32> {
        let v = self.states[id as usize];
        let y = Obs { s: v.s, a1: a1 as u16, a2: a2 as u16, s_next: s_next as u32 };
        let key = push_window_key(self.classes.key(v.class), &y, self.params.window);
        let class = self.classes.get(&key)?;
        let x = *self.eta_memo.get(&(v.x, class))?;
        let q = dfa.step(v.q, g.label(s_next));
        self.id_of(&HyperState { s: s_next as u32, class, q, x })
    }
}

/// Forward reachability exploration from the initial tuple. Successors are
/// interned for *every* available joint action (so the state space covers
/// arbitrary opponent behavior), while transition probabilities marginalize
/// P2's modeled strategy `bsr`.
pub fn build_hyper_mdp(
    g: &ConcurrentGame,
    dfa: &Dfa,
    space: &HypothesisSpace,
    bsr: &BsrOracle,
    params: HyperParams,
) -> Result<HyperMdp, HypergameError> {
    let mut classes = ClassInterner::new();
    let mut eta_memo: HashMap<(u16, u32), u16> = HashMap::new();
    let mut states: Vec<HyperState> = Vec::new();
    let mut index: HashMap<HyperState, u32> = HashMap::new();

    let init_class = classes.intern(Vec::new());
    let q0 = dfa.step(dfa.init, g.label(g.init));
    let v0 = HyperState {
        s: g.init as u32,
        class: init_class,
        q: q0,
        x: space.x0 as u16,
    };
    states.push(v0);
    index.insert(v0, 0);

    let num_a1 = g.num_a1();
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut actions_per_state: Vec<usize> = Vec::new();
    let mut target: Vec<bool> = Vec::new();
    let mut sink: Vec<bool> = Vec::new();

    let mut frontier = 0usize;
    while frontier < states.len() {
        let v = states[frontier];
        let absorbing = dfa.is_accepting(v.q) || dfa.is_sink(v.q);
        target.push(dfa.is_accepting(v.q));
        sink.push(dfa.is_sink(v.q));
        if absorbing {
            actions_per_state.push(1);
            rows.push(vec![(frontier as u32, 1.0)]);
            frontier += 1;
            continue;
        }
        actions_per_state.push(num_a1);
        let s = v.s as usize;
        let key = classes.key(v.class).to_vec();
        for a1 in 0..num_a1 {
            let mut row: HashMap<u32, f64> = HashMap::new();
            for &a2 in g.avail2(s) {
                let w2 = bsr.dist[v.x as usize][s][a2 as usize];
                for &(t, pt) in g.row(s, a1, a2 as usize) {
                    let y = Obs { s: v.s, a1: a1 as u16, a2, s_next: t };
                    let succ_key = push_window_key(&key, &y, params.window);
                    let class = classes.intern(succ_key);
                    let x = *eta_memo.entry((v.x, class)).or_insert_with(|| {
                        eta_over_window(
                            space,
                            g,
                            params.window,
                            params.threshold,
                            v.x as usize,
                            &decode_window_key(classes.key(class)),
                        ) as u16
                    });
                    let q = dfa.step(v.q, g.label(t as usize));
                    let succ = HyperState { s: t, class, q, x };
                    let id = *index.entry(succ).or_insert_with(|| {
                        states.push(succ);
                        (states.len() - 1) as u32
                    });
                    if states.len() > params.state_cap {
                        return Err(HypergameError::StateCap(params.state_cap));
                    }
                    if w2 > 0.0 && pt > 0.0 {
                        *row.entry(id).or_insert(0.0) += w2 * pt;
                    }
                }
            }
            let mut row: Vec<(u32, f64)> = row.into_iter().collect();
            row.sort_unstable_by_key(|&(id, _)| id);
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            debug_assert!((total - 1.0).abs() < 1e-9, "hypergame row sums to {total}");
            rows.push(row);
        }
        frontier += 1;
    }

    let mdp = ReachMdp::new(&actions_per_state, rows, target, sink, 0);
    Ok(HyperMdp {
        states,
        index,
        classes,
        eta_memo,
        mdp,
        init: 0,
        params,
    })
}

/// A synthesized deceptive policy with its value function.
pub struct Synthesis {
    pub values: Vec<f64>,
    /// Deterministic action per hypergame state.
    pub action: Vec<u32>,
    pub init_value: f64,
}

/// P1's subjectively rationalizable policy: maximize Pr(reach F̃) in the
/// hypergame MDP.
pub fn synthesize(h: &HyperMdp) -> Result<Synthesis, HypergameError> {
    let (values, action) = mdp_reachability_vi(&h.mdp)?;
    let init_value = values[h.init as usize];
    Ok(Synthesis { values, action, init_value })
}

/// The unique augmented state sequence of a history: ṽ₀ = (s₀, [[ε]], q₀, x₀)
/// and ṽ_{i+1} = (s_{i+1}, [[h_{i+1}]], δ(q_i, L(s_{i+1})), η(x_i, h_{i+1})).
pub fn augment(
    g: &ConcurrentGame,
    dfa: &Dfa,
    space: &HypothesisSpace,
    params: &HyperParams,
    classes: &mut ClassInterner,
    h: &HistoryRec,
) -> Result<Vec<HyperState>, HypergameError> {
    if !h.is_consistent(g) {
        let bad = h
            .actions
            .iter()
            .enumerate()
            .position(|(i, &(a1, a2))| {
                !g.row(h.states[i], a1, a2)
                    .iter()
                    .any(|&(t, p)| t as usize == h.states[i + 1] && p > 0.0)
            })
            .unwrap_or(0);
        return Err(HypergameError::InconsistentHistory(bad));
    }
    let mut out = Vec::with_capacity(h.states.len());
    let mut key: Vec<u64> = Vec::new();
    let mut q = dfa.step(dfa.init, g.label(h.states[0]));
    let mut x = space.x0;
    out.push(HyperState {
        s: h.states[0] as u32,
        class: classes.intern(key.clone()),
        q,
        x: x as u16,
    });
    for (i, &(a1, a2)) in h.actions.iter().enumerate() {
        let y = Obs {
            s: h.states[i] as u32,
            a1: a1 as u16,
            a2: a2 as u16,
            s_next: h.states[i + 1] as u32,
        };
        key = push_window_key(&key, &y, params.window);
        x = eta_over_window(
            space,
            g,
            params.window,
            params.threshold,
            x,
            &decode_window_key(&key),
        );
        q = dfa.step(q, g.label(h.states[i + 1]));
        out.push(HyperState {
            s: h.states[i + 1] as u32,
            class: classes.intern(key.clone()),
            q,
            x: x as u16,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Any P2 behavior the simulator can face.
pub trait P2Policy {
    fn act(
        &mut self,
        step: usize,
        s: usize,
        x: usize,
        g: &ConcurrentGame,
        rng: &mut dyn RngCore,
    ) -> usize;
}

/// P2 best-responds to their current hypothesis (the modeled behavior).
pub struct BsrActor<'a>(pub &'a BsrOracle);

impl P2Policy for BsrActor<'_> {
    fn act(&mut self, _k: usize, s: usize, x: usize, _g: &ConcurrentGame, rng: &mut dyn RngCore) -> usize {
        self.0.sample(x, s, rng)
    }
}

/// P2 plays a fixed per-state mixed strategy (e.g. the symmetric-information
/// equilibrium), ignoring hypotheses.
pub struct FixedActor<'a>(pub &'a [Vec<f64>]);

impl P2Policy for FixedActor<'_> {
    fn act(&mut self, _k: usize, s: usize, _x: usize, _g: &ConcurrentGame, rng: &mut dyn RngCore) -> usize {
        sample_dist(&self.0[s], rng)
    }
}

/// Uniform over available actions.
pub struct RandomActor;

impl P2Policy for RandomActor {
    fn act(&mut self, _k: usize, s: usize, _x: usize, g: &ConcurrentGame, rng: &mut dyn RngCore) -> usize {
        let av = g.avail2(s);
        av[(rng as &mut dyn RngCore).gen_range(0..av.len())] as usize
    }
}

/// Behaves like `before` until `switch_step`, then like `after` — used to
/// inject model deviations for the mismatch detectors.
pub struct ScriptedDeviation<A: P2Policy, B: P2Policy> {
    pub before: A,
    pub after: B,
    pub switch_step: usize,
}

impl<A: P2Policy, B: P2Policy> P2Policy for ScriptedDeviation<A, B> {
    fn act(&mut self, k: usize, s: usize, x: usize, g: &ConcurrentGame, rng: &mut dyn RngCore) -> usize {
        if k < self.switch_step {
            self.before.act(k, s, x, g, rng)
        } else {
            self.after.act(k, s, x, g, rng)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Satisfied,
    Failed,
    Timeout,
    /// Halted by the caller's per-step monitor (e.g. a mismatch detector).
    Stopped,
}

/// One executed step, reported to the monitor callback.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub s: usize,
    pub a1: usize,
    pub a2: usize,
    pub s_next: usize,
    /// Hypergame state id reached after the step.
    pub hyper_id: u32,
    pub q: u32,
    pub x: usize,
    pub class: u32,
}

/// Run the online loop: P1 follows the synthesized policy, P2 follows
/// `actor`. Terminates on an absorbing hypergame state, the horizon, or when
/// `monitor` returns true.
#[allow(clippy::too_many_arguments)]
pub fn simulate<R: Rng>(
    h: &HyperMdp,
    g: &ConcurrentGame,
    dfa: &Dfa,
    policy: &[u32],
    actor: &mut dyn P2Policy,
    horizon: usize,
    rng: &mut R,
    mut monitor: impl FnMut(&StepRecord) -> bool,
) -> (HistoryRec, Outcome) {
    let mut id = h.init;
    let mut hist = HistoryRec::start(h.states[id as usize].s as usize);
    for step in 0..horizon {
        let v = h.states[id as usize];
        if dfa.is_accepting(v.q) {
            return (hist, Outcome::Satisfied);
        }
        if dfa.is_sink(v.q) {
            return (hist, Outcome::Failed);
        }
        let s = v.s as usize;
        let a1 = policy[id as usize] as usize;
        let a2 = actor.act(step, s, v.x as usize, g, rng);
        let s_next = crate::game::sample_row(g.row(s, a1, a2), rng);
        hist.push(a1, a2, s_next);
        id = h
            .step_state(g, dfa, id, a1, a2, s_next)
            .expect("all joint-action successors are interned at build time");
        let v2 = h.states[id as usize];
        let rec = StepRecord {
            step,
            s,
            a1,
            a2,
            s_next,
            hyper_id: id,
            q: v2.q,
            x: v2.x as usize,
            class: v2.class,
        };
        if monitor(&rec) {
            return (hist, Outcome::Stopped);
        }
    }
    let v = h.states[id as usize];
    if dfa.is_accepting(v.q) {
        (hist, Outcome::Satisfied)
    } else if dfa.is_sink(v.q) {
        (hist, Outcome::Failed)
    } else {
        (hist, Outcome::Timeout)
    }
}
