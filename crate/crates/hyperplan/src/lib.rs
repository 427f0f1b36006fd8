//! Synthesis and evaluation of deceptive strategies in two-player concurrent
//! stochastic games with temporal-logic objectives.
//!
//! Pipeline: co-safe LTL objectives are compiled to DFAs ([`scltl`]), the
//! interaction is modeled as a simultaneous-move stochastic game ([`game`]),
//! the opponent's evolving perception is tracked by sliding-window CUSUM
//! inference over a finite hypothesis space ([`inference`]), and the whole
//! interaction is folded into a single-agent reachability MDP over
//! (state, history-class, automaton-state, hypothesis) tuples ([`hypergame`])
//! solved by value iteration ([`solvers`]) or UCT search ([`mcts`]).
//! Statistical mismatch tests ([`detect`]) validate the opponent model online,
//! and a cognitive-hierarchy model ([`opponent`]) provides level-k opponent
//! policies plus estimation of the opponent's reasoning depth. [`harness`]
//! ties everything into reproducible experiments.

pub mod detect;
pub mod game;
pub mod harness;
pub mod hypergame;
pub mod inference;
pub mod mcts;
pub mod opponent;
pub mod scltl;
pub mod solvers;
