//! UCT search over (hypergame) MDP states for instances too large for exact
//! value iteration. The tree resolves chance outcomes per (action, successor)
//! pair; rollouts are uniform-random over P1's actions with the opponent
//! model already marginalized into the simulator.

use std::cell::RefCell;
use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use rand::RngCore;
use thiserror::Error;

use crate::game::{sample_row, ConcurrentGame};
use crate::hypergame::{BsrOracle, HyperMdp, HyperParams, HyperState};
use crate::inference::{
    decode_window_key, eta_over_window, push_window_key, ClassInterner, HypothesisSpace, Obs,
};
use crate::scltl::Dfa;
use crate::solvers::ReachMdp;

#[derive(Debug, Error)]
pub enum MctsError {
    #[error("search budget must be positive")]
    ZeroBudget,
    #[error("root state is terminal")]
    TerminalRoot,
}

/// Sampling model the search plans against.
pub trait SearchModel {
    type State: Copy + Eq + Hash;
    /// Number of P1 actions at `s` (contiguous ids from 0).
    fn num_actions(&self, s: &Self::State) -> usize;
    /// Sample s′ ~ P(·|s, a) with the opponent model folded in.
    fn sample(&self, s: &Self::State, a: usize, rng: &mut dyn RngCore) -> Self::State;
    /// Some(reward) iff `s` is terminal (1 on goal, 0 on losing sink).
    fn terminal_reward(&self, s: &Self::State) -> Option<f64>;
}

impl SearchModel for ReachMdp {
    type State = u32;
    fn num_actions(&self, s: &u32) -> usize {
        ReachMdp::num_actions(self, *s as usize)
    }
    fn sample(&self, s: &u32, a: usize, mut rng: &mut dyn RngCore) -> u32 {
        sample_row(self.row(*s as usize, a), &mut rng) as u32
    }
    fn terminal_reward(&self, s: &u32) -> Option<f64> {
        if self.target[*s as usize] {
            Some(1.0)
        } else if self.sink[*s as usize] {
            Some(0.0)
        } else {
            None
        }
    }
}

impl SearchModel for HyperMdp {
    type State = u32;
    fn num_actions(&self, s: &u32) -> usize {
        self.mdp.num_actions(*s as usize)
    }
    fn sample(&self, s: &u32, a: usize, mut rng: &mut dyn RngCore) -> u32 {
        sample_row(self.mdp.row(*s as usize, a), &mut rng) as u32
    }
    fn terminal_reward(&self, s: &u32) -> Option<f64> {
        SearchModel::terminal_reward(&self.mdp, s)
    }
}

/// Hypergame transition model materialized on demand: the augmented states
/// (s, window class, q, x) are interned lazily as search and simulation
/// reach them, so worlds far too large for an exhaustive hypergame build
/// can still be planned in. P2 is marginalized by the BSR oracle.
pub struct LazyHyperModel<'a> {
    pub g: &'a ConcurrentGame,
    pub dfa: &'a Dfa,
    pub space: &'a HypothesisSpace,
    pub bsr: &'a BsrOracle,
    pub params: HyperParams,
    classes: RefCell<ClassInterner>,
    eta_memo: RefCell<HashMap<(u16, u32), u16>>,
}

impl<'a> LazyHyperModel<'a> {
    pub fn new(
        g: &'a ConcurrentGame,
        dfa: &'a Dfa,
        space: &'a HypothesisSpace,
        bsr: &'a BsrOracle,
        params: HyperParams,
    ) -> Self {
        LazyHyperModel {
            g,
            dfa,
            space,
            bsr,
            params,
            classes: RefCell::new(ClassInterner::new()),
            eta_memo: RefCell::new(HashMap::new()),
        }
    }

    /// Augmented initial state (empty history class).
    pub fn init_state(&self) -> HyperState {
        HyperState {
            s: self.g.init as u32,
            class: self.classes.borrow_mut().intern(Vec::new()),
            q: self.dfa.step(self.dfa.init, self.g.label(self.g.init)),
            x: self.space.x0 as u16,
        }
    }

    /// Deterministic bookkeeping for an observed joint transition.
    pub fn advance(&self, v: &HyperState, a1: usize, a2: usize, s_next: usize) -> HyperState {
        let y = Obs { s: v.s, a1: a1 as u16, a2: a2 as u16, s_next: s_next as u32 };
        let key = {
            let classes = self.classes.borrow();
            push_window_key(classes.key(v.class), &y, self.params.window)
        };
        let class = self.classes.borrow_mut().intern(key);
        let x = *self.eta_memo.borrow_mut().entry((v.x, class)).or_insert_with(|| {
            let suffix = decode_window_key(self.classes.borrow().key(class));
            eta_over_window(
                self.space,
                self.g,
                self.params.window,
                self.params.threshold,
                v.x as usize,
                &suffix,
            ) as u16
        });
        let q = self.dfa.step(v.q, self.g.label(s_next));
        HyperState { s: s_next as u32, class, q, x }
    }
}

impl SearchModel for LazyHyperModel<'_> {
    type State = HyperState;
    fn num_actions(&self, _s: &HyperState) -> usize {
        self.g.num_a1()
    }
    fn sample(&self, v: &HyperState, a1: usize, rng: &mut dyn RngCore) -> HyperState {
        let s = v.s as usize;
        let a2 = self.bsr.sample(v.x as usize, s, rng);
        let mut rng = rng;
        let s_next = sample_row(self.g.row(s, a1, a2), &mut rng);
        self.advance(v, a1, a2, s_next)
    }
    fn terminal_reward(&self, v: &HyperState) -> Option<f64> {
        if self.dfa.is_accepting(v.q) {
            Some(1.0)
        } else if self.dfa.is_sink(v.q) {
            Some(0.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    /// Number of search iterations.
    pub budget: usize,
    /// Maximum tree + rollout depth from the root.
    pub depth: usize,
    /// Exploration scalar.
    pub c: f64,
    /// Discount applied per step from the root during return accumulation.
    pub gamma: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { budget: 200, depth: 50, c: std::f64::consts::FRAC_1_SQRT_2, gamma: 0.8 }
    }
}

pub struct Node<S> {
    pub state: S,
    pub n: u32,
    /// Per-action visit counts and accumulated returns.
    pub n_a: Vec<u32>,
    pub q_a: Vec<f64>,
    /// Next action id not yet expanded (expansion in lowest-id order).
    next_untried: usize,
    pub terminal: Option<f64>,
}

pub struct SearchTree<S> {
    pub nodes: Vec<Node<S>>,
    /// (parent, action, successor) → child index.
    pub children: HashMap<(u32, u16, u32), u32>,
}

impl<S: Copy + Eq + Hash> SearchTree<S> {
    /// Child reached from `parent` by `action` resolving to the interned
    /// successor id `succ_id`.
    pub fn child(&self, parent: u32, action: usize, succ_id: u32) -> Option<u32> {
        self.children.get(&(parent, action as u16, succ_id)).copied()
    }
}

/// UCB1 pick over a node's actions: argmax of mean + c·√(2·ln N / N_a), ties
/// to the lowest action id. All actions must have been tried at least once.
pub fn ucb_pick(q_a: &[f64], n_a: &[u32], n_parent: u32, c: f64) -> usize {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for a in 0..q_a.len() {
        let mean = q_a[a] / n_a[a] as f64;
        let bonus = c * (2.0 * (n_parent as f64).ln() / n_a[a] as f64).sqrt();
        let val = mean + bonus;
        if val > best_val + 1e-12 {
            best_val = val;
            best = a;
        }
    }
    best
}

pub struct SearchResult<S> {
    pub action: usize,
    /// Mean return of the chosen root action.
    pub value: f64,
    pub tree: SearchTree<S>,
}

/// Full UCT search from `root`; returns the root action with the highest mean
/// return (exploration term dropped at the final selection, ties to the
/// lowest id).
pub fn search<M: SearchModel>(
    model: &M,
    root: M::State,
    params: &SearchParams,
    rng: &mut impl Rng,
) -> Result<SearchResult<M::State>, MctsError> {
    if params.budget == 0 {
        return Err(MctsError::ZeroBudget);
    }
    if model.terminal_reward(&root).is_some() {
        return Err(MctsError::TerminalRoot);
    }
    let mut tree = SearchTree { nodes: Vec::new(), children: HashMap::new() };
    tree.nodes.push(new_node(model, root));
    // Interned state ids for chance-node resolution keys.
    let mut state_ids: HashMap<M::State, u32> = HashMap::new();
    state_ids.insert(root, 0);

    for _ in 0..params.budget {
        // --- tree policy ---
        // Edges (parent, action) descended this iteration; `v` is always the
        // node at the end of the partial path.
        let mut path: Vec<(u32, usize)> = Vec::new();
        let mut v = 0u32;
        let mut depth = 0usize;
        let delta: f64 = loop {
            let node = &tree.nodes[v as usize];
            if let Some(r) = node.terminal {
                break discounted(r, depth, params.gamma);
            }
            if depth >= params.depth {
                break 0.0;
            }
            let a = if node.next_untried < node.n_a.len() {
                // Expansion: lowest untried action id first.
                let a = node.next_untried;
                tree.nodes[v as usize].next_untried += 1;
                a
            } else {
                ucb_pick(&node.q_a, &node.n_a, node.n, params.c)
            };
            let s_next = model.sample(&tree.nodes[v as usize].state, a, rng);
            let next_id = state_ids.len() as u32;
            let sid = *state_ids.entry(s_next).or_insert(next_id);
            path.push((v, a));
            depth += 1;
            match tree.children.get(&(v, a as u16, sid)) {
                Some(&child) => v = child,
                None => {
                    // New (action, outcome) edge: add the child and roll out
                    // the default policy from it.
                    let child = tree.nodes.len() as u32;
                    tree.nodes.push(new_node(model, s_next));
                    tree.children.insert((v, a as u16, sid), child);
                    v = child;
                    break rollout(model, &s_next, depth, params, rng);
                }
            }
        };
        backup(&mut tree, &path, v, delta);
    }

    let root_node = &tree.nodes[0];
    let mut action = 0usize;
    let mut best = f64::NEG_INFINITY;
    for a in 0..root_node.n_a.len() {
        if root_node.n_a[a] == 0 {
            continue;
        }
        let mean = root_node.q_a[a] / root_node.n_a[a] as f64;
        if mean > best + 1e-12 {
            best = mean;
            action = a;
        }
    }
    Ok(SearchResult { action, value: best, tree })
}

fn new_node<M: SearchModel>(model: &M, s: M::State) -> Node<M::State> {
    let terminal = model.terminal_reward(&s);
    let k = if terminal.is_some() { 0 } else { model.num_actions(&s) };
    Node { state: s, n: 0, n_a: vec![0; k], q_a: vec![0.0; k], next_untried: 0, terminal }
}

fn discounted(r: f64, steps: usize, gamma: f64) -> f64 {
    r * gamma.powi(steps as i32)
}

/// Uniform-random P1 rollout, truncated at the depth limit; returns the
/// discounted terminal reward (0 on truncation).
fn rollout<M: SearchModel>(
    model: &M,
    start: &M::State,
    depth_from_root: usize,
    params: &SearchParams,
    rng: &mut impl Rng,
) -> f64 {
    let mut s = *start;
    let mut depth = depth_from_root;
    loop {
        if let Some(r) = model.terminal_reward(&s) {
            return discounted(r, depth, params.gamma);
        }
        if depth >= params.depth {
            return 0.0;
        }
        let a = rng.gen_range(0..model.num_actions(&s));
        s = model.sample(&s, a, rng);
        depth += 1;
    }
}

/// Increment visit counts and add the (already discounted) return along the
/// root path; `last` is the node the descent stopped at.
fn backup<S: Copy + Eq + Hash>(
    tree: &mut SearchTree<S>,
    path: &[(u32, usize)],
    last: u32,
    delta: f64,
) {
    for &(v, a) in path {
        let node = &mut tree.nodes[v as usize];
        node.n += 1;
        node.n_a[a] += 1;
        node.q_a[a] += delta;
    }
    tree.nodes[last as usize].n += 1;
}
