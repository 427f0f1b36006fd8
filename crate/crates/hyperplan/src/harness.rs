//! Reproducible experiment runner: TOML experiment specs, scenario assembly
//! (world → objective DFA → hypothesis profiles → hypergame), Monte Carlo
//! episode loops with derived per-episode seeds, delay sweeps, online
//! mismatch demos, opponent-depth estimation, and CSV emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{policy_lr_test, DofConvention, TestReport};
use crate::game::{build_world, sample_row, ConcurrentGame, GridConfig, HistoryRec};
use crate::hypergame::{
    build_hyper_mdp, sample_dist, simulate, synthesize, BsrActor, BsrOracle, HyperParams,
    Outcome, P2Policy, RandomActor, ScriptedDeviation, Synthesis,
};
use crate::inference::{Hypothesis, HypothesisSpace, Obs};
use crate::mcts::{search, LazyHyperModel, SearchParams};
use crate::opponent::{
    build_level_stack, level_scores, poisson_pmf, trajectory_likelihood, ChParams,
    PoissonEstimate, ScoreScale,
};
use crate::scltl::{parse, to_dfa, Dfa};
use crate::solvers::{shapley_vi, stackelberg_response, subgoal_game, ShapleySolution};

#[derive(Debug, Error)]
#[error("{stage}: {msg}")]
pub struct HarnessError {
    /// Pipeline stage the failure came from.
    pub stage: &'static str,
    pub msg: String,
}

fn err(stage: &'static str, msg: impl ToString) -> HarnessError {
    HarnessError { stage, msg: msg.to_string() }
}

// ---------------------------------------------------------------------------
// Experiment specification
// ---------------------------------------------------------------------------

fn default_window() -> usize {
    2
}
fn default_threshold() -> f64 {
    0.3
}
fn default_alpha() -> f64 {
    0.05
}
fn default_test() -> String {
    "policy".into()
}
fn default_profile() -> String {
    "stackelberg".into()
}
fn default_levels() -> usize {
    4
}
fn default_tau() -> f64 {
    1e-2
}
fn default_score_scale() -> String {
    "raw".into()
}
fn default_planner() -> String {
    "vi".into()
}
fn default_budget() -> usize {
    200
}
fn default_depth() -> usize {
    50
}
fn default_c() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}
fn default_gamma() -> f64 {
    0.8
}
fn default_p1() -> String {
    "deceptive".into()
}
fn default_p2_actor() -> String {
    "bsr".into()
}
fn default_episodes() -> usize {
    2000
}
fn default_horizon() -> usize {
    200
}
fn default_seed() -> u64 {
    7
}

/// One experiment configuration, loadable from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// World config: a path (relative to the spec file) or a bundled preset
    /// name.
    pub world: String,
    /// P1's objective.
    pub formula: String,
    /// P2's candidate objectives for P1, in hypothesis-index order.
    #[serde(default)]
    pub hypotheses: Vec<String>,
    /// P2's prior hypothesis index.
    #[serde(default)]
    pub nominal: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Mismatch test: "policy" or "matrix".
    #[serde(default = "default_test")]
    pub test: String,
    /// Per-hypothesis profile solver: "stackelberg" (trap worlds) or
    /// "level-k" (pursuit worlds).
    #[serde(default = "default_profile")]
    pub profile: String,
    /// level-k only: subgoal waypoint atom per hypothesis.
    #[serde(default)]
    pub subgoals: Vec<String>,
    /// level-k only: atoms whose conjunction means capture.
    #[serde(default)]
    pub capture_atoms: Vec<String>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Level-score softmax input: "raw" trajectory probabilities (default)
    /// or their "log", which stays discriminative on long traces.
    #[serde(default = "default_score_scale")]
    pub score_scale: String,
    /// "vi" (exact, builds the full hypergame) or "mcts" (lazy, per-step
    /// search).
    #[serde(default = "default_planner")]
    pub planner: String,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_c")]
    pub exploration: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// P1 behavior: "deceptive" (hypergame policy) or "nash" (symmetric
    /// equilibrium baseline).
    #[serde(default = "default_p1")]
    pub p1: String,
    /// P2 behavior: "bsr", "nash", or "random".
    #[serde(default = "default_p2_actor")]
    pub p2_actor: String,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Mismatch demos: step at which P2 abandons the modeled policy.
    #[serde(default)]
    pub deviation_step: Option<usize>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| err("spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(err("spec", "episodes must be ≥ 1"));
        }
        if self.p1 == "deceptive" && self.hypotheses.is_empty() {
            return Err(err("spec", "deceptive play needs a hypothesis list"));
        }
        if !self.hypotheses.is_empty() && self.nominal >= self.hypotheses.len() {
            return Err(err("spec", "nominal hypothesis index out of range"));
        }
        if self.profile == "level-k" && self.subgoals.len() != self.hypotheses.len() {
            return Err(err("spec", "level-k profiles need one subgoal per hypothesis"));
        }
        for (field, value, allowed) in [
            ("test", &self.test, &["policy", "matrix"][..]),
            ("profile", &self.profile, &["stackelberg", "level-k"][..]),
            ("planner", &self.planner, &["vi", "mcts"][..]),
            ("p1", &self.p1, &["deceptive", "nash"][..]),
            ("p2_actor", &self.p2_actor, &["bsr", "nash", "random"][..]),
            ("score_scale", &self.score_scale, &["raw", "log"][..]),
        ] {
            if !allowed.contains(&value.as_str()) {
                return Err(err("spec", format!("{field} must be one of {allowed:?}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bundled presets
// ---------------------------------------------------------------------------

/// Bundled world and experiment configs (geometry reconstructions).
pub fn builtin_preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "world1" => include_str!("../presets/world1.toml"),
        "world2" => include_str!("../presets/world2.toml"),
        "pursuit" => include_str!("../presets/pursuit.toml"),
        "pursuit_close" => include_str!("../presets/pursuit_close.toml"),
        "world1_asym" => include_str!("../presets/world1_asym.toml"),
        "world1_sym" => include_str!("../presets/world1_sym.toml"),
        "world2_delay" => include_str!("../presets/world2_delay.toml"),
        "world2_mismatch" => include_str!("../presets/world2_mismatch.toml"),
        "pursuit_exp1" => include_str!("../presets/pursuit_exp1.toml"),
        "pursuit_exp2" => include_str!("../presets/pursuit_exp2.toml"),
        "pursuit_exp3" => include_str!("../presets/pursuit_exp3.toml"),
        "pursuit_exp4" => include_str!("../presets/pursuit_exp4.toml"),
        "lambda_validation" => include_str!("../presets/lambda_validation.toml"),
        _ => return None,
    })
}

/// Load an experiment spec from a bundled preset name or a filesystem path.
/// Returns the spec plus the directory used to resolve relative paths.
pub fn load_spec(name_or_path: &str) -> Result<(ExperimentSpec, Option<PathBuf>), HarnessError> {
    if let Some(text) = builtin_preset(name_or_path) {
        return Ok((ExperimentSpec::from_toml(text)?, None));
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| err("spec", format!("{name_or_path}: {e}")))?;
    let base = path.parent().map(Path::to_path_buf);
    Ok((ExperimentSpec::from_toml(&text)?, base))
}

/// Load a world config from a bundled preset name or a path relative to
/// `base`.
pub fn load_world(world: &str, base: Option<&Path>) -> Result<GridConfig, HarnessError> {
    let text = if let Some(text) = builtin_preset(world) {
        text.to_string()
    } else {
        let path = match base {
            Some(b) if Path::new(world).is_relative() => b.join(world),
            _ => PathBuf::from(world),
        };
        std::fs::read_to_string(&path)
            .map_err(|e| err("world", format!("{}: {e}", path.display())))?
    };
    GridConfig::from_toml(&text).map_err(|e| err("world", e))
}

// ---------------------------------------------------------------------------
// Scenario assembly
// ---------------------------------------------------------------------------

/// Everything the episode loops need, fully solved.
pub struct Scenario {
    pub cfg: GridConfig,
    pub game: ConcurrentGame,
    pub dfa: Dfa,
    pub space: HypothesisSpace,
    pub bsr: BsrOracle,
    pub params: HyperParams,
}

/// Expand a per-game-state policy to product (s,q) indexing.
fn expand_over_q(per_state: &[Vec<f64>], nq: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(per_state.len() * nq);
    for row in per_state {
        for _ in 0..nq {
            out.push(row.clone());
        }
    }
    out
}

pub fn build_scenario(
    spec: &ExperimentSpec,
    base: Option<&Path>,
) -> Result<Scenario, HarnessError> {
    let cfg = load_world(&spec.world, base)?;
    let game = build_world(&cfg).map_err(|e| err("world", e))?;
    let formula = parse(&spec.formula, &game.ap).map_err(|e| err("formula", e))?;
    let dfa = to_dfa(&formula, &game.ap).map_err(|e| err("formula", e))?;

    let mut hyps = Vec::with_capacity(spec.hypotheses.len());
    for (i, text) in spec.hypotheses.iter().enumerate() {
        let f = parse(text, &game.ap).map_err(|e| err("formula", e))?;
        let dfa_x = to_dfa(&f, &game.ap).map_err(|e| err("formula", e))?;
        let hyp = match spec.profile.as_str() {
            "stackelberg" => {
                let sol =
                    stackelberg_response(&game, &dfa_x).map_err(|e| err("solve", e))?;
                Hypothesis::from_stackelberg(&game, dfa_x, &sol)
                    .map_err(|e| err("inference", e))?
            }
            _ => {
                let caps: Vec<&str> =
                    spec.capture_atoms.iter().map(String::as_str).collect();
                let sub = subgoal_game(&game, &spec.subgoals[i], &caps)
                    .map_err(|e| err("solve", e))?;
                let ch = ChParams { levels: spec.levels, tau: spec.tau, ..Default::default() };
                let stack = build_level_stack(&sub, &ch).map_err(|e| err("solve", e))?;
                let nq = dfa_x.num_states;
                let p1 = expand_over_q(stack.p1.last().unwrap(), nq);
                let p2 = expand_over_q(stack.p2.last().unwrap(), nq);
                Hypothesis::new(&game, dfa_x, p1, p2).map_err(|e| err("inference", e))?
            }
        };
        hyps.push(hyp);
    }
    let space = HypothesisSpace::new(hyps, spec.nominal).map_err(|e| err("inference", e))?;
    let bsr = BsrOracle::from_space(&space, &game);
    let params = HyperParams {
        window: spec.window,
        threshold: spec.threshold,
        ..Default::default()
    };
    Ok(Scenario { cfg, game, dfa, space, bsr, params })
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub label: String,
    pub episodes: usize,
    pub successes: usize,
    /// Empirical completion rate.
    pub rate: f64,
    /// Binomial standard error √(p(1−p)/n).
    pub std_error: f64,
    pub mean_length: f64,
    /// Solver value at the initial state, where an exact solve exists.
    pub value: Option<f64>,
    /// Episodes halted by the mismatch detector.
    pub detector_stops: usize,
}

impl ResultRow {
    pub fn from_counts(label: String, successes: usize, episodes: usize, total_len: usize) -> Self {
        let p = successes as f64 / episodes as f64;
        ResultRow {
            label,
            episodes,
            successes,
            rate: p,
            std_error: (p * (1.0 - p) / episodes as f64).sqrt(),
            mean_length: total_len as f64 / episodes as f64,
            value: None,
            detector_stops: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("label,episodes,successes,rate,std_error,mean_length,value,detector_stops\n");
        for r in &self.rows {
            let value = r.value.map_or(String::new(), |v| format!("{v:.6}"));
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.3},{},{}",
                r.label, r.episodes, r.successes, r.rate, r.std_error, r.mean_length,
                value, r.detector_stops
            )
            .unwrap();
        }
        out
    }
}

/// Per-episode seed derivation (splitmix64 of master ⊕ index), so episodes
/// are independent yet fully determined by the master seed.
pub fn derive_seed(master: u64, episode: u64) -> u64 {
    let mut z = master
        .wrapping_add(episode.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Episode loops
// ---------------------------------------------------------------------------

/// P2 plays the symmetric-equilibrium mixed strategy, tracking the objective
/// automaton state from the observed state sequence.
pub struct NashActor<'a> {
    dfa: &'a Dfa,
    /// Per product state (s·|Q|+q) distribution over P2 actions.
    strat2: &'a [Vec<f64>],
    q: Option<u32>,
}

impl<'a> NashActor<'a> {
    pub fn new(dfa: &'a Dfa, strat2: &'a [Vec<f64>]) -> Self {
        NashActor { dfa, strat2, q: None }
    }
}

impl P2Policy for NashActor<'_> {
    fn act(
        &mut self,
        _step: usize,
        s: usize,
        _x: usize,
        g: &ConcurrentGame,
        rng: &mut dyn rand::RngCore,
    ) -> usize {
        let q = match self.q {
            None => self.dfa.step(self.dfa.init, g.label(s)),
            Some(q) => self.dfa.step(q, g.label(s)),
        };
        // `act` sees each state of the play exactly once, in order, so the
        // automaton state can be replayed incrementally.
        self.q = Some(q);
        sample_dist(&self.strat2[s * self.dfa.num_states + q as usize], rng)
    }
}

/// Simulate both players following fixed product-state mixed strategies.
/// Returns (steps, outcome).
fn run_profile_episode(
    g: &ConcurrentGame,
    dfa: &Dfa,
    strat1: &[Vec<f64>],
    strat2: &[Vec<f64>],
    horizon: usize,
    rng: &mut impl Rng,
) -> (usize, Outcome) {
    let mut s = g.init;
    let mut q = dfa.step(dfa.init, g.label(s));
    for step in 0..horizon {
        if dfa.is_accepting(q) {
            return (step, Outcome::Satisfied);
        }
        if dfa.is_sink(q) {
            return (step, Outcome::Failed);
        }
        let id = s * dfa.num_states + q as usize;
        let a1 = sample_dist(&strat1[id], rng);
        let a2 = sample_dist(&strat2[id], rng);
        s = sample_row(g.row(s, a1, a2), rng);
        q = dfa.step(q, g.label(s));
    }
    let outcome = if dfa.is_accepting(q) {
        Outcome::Satisfied
    } else if dfa.is_sink(q) {
        Outcome::Failed
    } else {
        Outcome::Timeout
    };
    (horizon, outcome)
}

fn make_actor<'a>(
    spec: &ExperimentSpec,
    scn: &'a Scenario,
    nash: Option<&'a ShapleySolution>,
) -> Result<Box<dyn P2Policy + 'a>, HarnessError> {
    Ok(match spec.p2_actor.as_str() {
        "bsr" => Box::new(BsrActor(&scn.bsr)),
        "random" => Box::new(RandomActor),
        _ => {
            let sol = nash.ok_or_else(|| err("solve", "nash actor needs a Shapley solve"))?;
            Box::new(NashActor::new(&scn.dfa, &sol.strat2))
        }
    })
}

/// Run one experiment configuration end to end.
pub fn run_experiment(
    spec: &ExperimentSpec,
    base: Option<&Path>,
) -> Result<ResultTable, HarnessError> {
    spec.validate()?;
    let mut row = match spec.p1.as_str() {
        "nash" => run_nash_rows(spec, base)?,
        _ if spec.planner == "mcts" => run_deceptive_mcts(spec, base)?,
        _ => run_deceptive_vi(spec, base)?,
    };
    row.label = spec.name.clone();
    Ok(ResultTable { rows: vec![row] })
}

/// Symmetric-information baseline: both players follow the Shapley profile.
fn run_nash_rows(spec: &ExperimentSpec, base: Option<&Path>) -> Result<ResultRow, HarnessError> {
    let cfg = load_world(&spec.world, base)?;
    let game = build_world(&cfg).map_err(|e| err("world", e))?;
    let formula = parse(&spec.formula, &game.ap).map_err(|e| err("formula", e))?;
    let dfa = to_dfa(&formula, &game.ap).map_err(|e| err("formula", e))?;
    let sol = shapley_vi(&game, &dfa).map_err(|e| err("solve", e))?;
    let (mut wins, mut total_len) = (0usize, 0usize);
    for i in 0..spec.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, i as u64));
        let (len, outcome) = run_profile_episode(
            &game,
            &dfa,
            &sol.strat1,
            &sol.strat2,
            spec.horizon,
            &mut rng,
        );
        total_len += len;
        wins += usize::from(outcome == Outcome::Satisfied);
    }
    let mut row = ResultRow::from_counts(spec.name.clone(), wins, spec.episodes, total_len);
    row.value = Some(sol.values[sol.init]);
    Ok(row)
}

/// Deceptive P1 with the exact hypergame solve.
fn run_deceptive_vi(
    spec: &ExperimentSpec,
    base: Option<&Path>,
) -> Result<ResultRow, HarnessError> {
    let scn = build_scenario(spec, base)?;
    let hyper = build_hyper_mdp(&scn.game, &scn.dfa, &scn.space, &scn.bsr, scn.params)
        .map_err(|e| err("hypergame", e))?;
    let syn: Synthesis = synthesize(&hyper).map_err(|e| err("solve", e))?;
    let nash = if spec.p2_actor == "nash" {
        Some(shapley_vi(&scn.game, &scn.dfa).map_err(|e| err("solve", e))?)
    } else {
        None
    };
    let (mut wins, mut total_len) = (0usize, 0usize);
    for i in 0..spec.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, i as u64));
        let mut actor = make_actor(spec, &scn, nash.as_ref())?;
        let (hist, outcome) = simulate(
            &hyper,
            &scn.game,
            &scn.dfa,
            &syn.action,
            actor.as_mut(),
            spec.horizon,
            &mut rng,
            |_| false,
        );
        total_len += hist.len();
        wins += usize::from(outcome == Outcome::Satisfied);
    }
    let mut row = ResultRow::from_counts(spec.name.clone(), wins, spec.episodes, total_len);
    row.value = Some(syn.init_value);
    Ok(row)
}

/// Deceptive P1 planning online with UCT over the lazily materialized
/// hypergame (for worlds too large to build exhaustively).
fn run_deceptive_mcts(
    spec: &ExperimentSpec,
    base: Option<&Path>,
) -> Result<ResultRow, HarnessError> {
    let scn = build_scenario(spec, base)?;
    let params = SearchParams {
        budget: spec.budget,
        depth: spec.depth,
        c: spec.exploration,
        gamma: spec.gamma,
    };
    let nash = if spec.p2_actor == "nash" {
        Some(shapley_vi(&scn.game, &scn.dfa).map_err(|e| err("solve", e))?)
    } else {
        None
    };
    let (mut wins, mut total_len) = (0usize, 0usize);
    for i in 0..spec.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, i as u64));
        let mut actor = make_actor(spec, &scn, nash.as_ref())?;
        // Fresh model per episode: the lazily interned window classes and
        // eta memo would otherwise accumulate across the whole run.
        let model = LazyHyperModel::new(&scn.game, &scn.dfa, &scn.space, &scn.bsr, scn.params);
        let mut v = model.init_state();
        let mut outcome = Outcome::Timeout;
        let mut steps = 0usize;
        for step in 0..spec.horizon {
            if scn.dfa.is_accepting(v.q) {
                outcome = Outcome::Satisfied;
                break;
            }
            if scn.dfa.is_sink(v.q) {
                outcome = Outcome::Failed;
                break;
            }
            let a1 = search(&model, v, &params, &mut rng)
                .map_err(|e| err("planner", e))?
                .action;
            let s = v.s as usize;
            let a2 = actor.act(step, s, v.x as usize, &scn.game, &mut rng);
            let s_next = sample_row(scn.game.row(s, a1, a2), &mut rng);
            v = model.advance(&v, a1, a2, s_next);
            steps = step + 1;
        }
        if steps == spec.horizon {
            if scn.dfa.is_accepting(v.q) {
                outcome = Outcome::Satisfied;
            } else if scn.dfa.is_sink(v.q) {
                outcome = Outcome::Failed;
            }
        }
        total_len += steps;
        wins += usize::from(outcome == Outcome::Satisfied);
    }
    Ok(ResultRow::from_counts(spec.name.clone(), wins, spec.episodes, total_len))
}

// ---------------------------------------------------------------------------
// Delay sweep
// ---------------------------------------------------------------------------

/// Re-run the experiment with the trap reallocation cooldown k swept over
/// `ks`, reporting the exact initial value and empirical rate per k.
pub fn run_delay_sweep(
    spec: &ExperimentSpec,
    base: Option<&Path>,
    ks: &[usize],
) -> Result<ResultTable, HarnessError> {
    let cfg = load_world(&spec.world, base)?;
    let mut table = ResultTable::default();
    for &k in ks {
        let mut cfg_k = cfg.clone();
        cfg_k.cooldown = k;
        let mut spec_k = spec.clone();
        spec_k.name = format!("{}_k{k}", spec.name);
        let row = run_deceptive_vi_with_cfg(&spec_k, cfg_k)?;
        table.rows.push(row);
    }
    Ok(table)
}

/// As [`run_deceptive_vi`] but with an already-loaded (possibly modified)
/// world config.
fn run_deceptive_vi_with_cfg(
    spec: &ExperimentSpec,
    cfg: GridConfig,
) -> Result<ResultRow, HarnessError> {
    let game = build_world(&cfg).map_err(|e| err("world", e))?;
    let formula = parse(&spec.formula, &game.ap).map_err(|e| err("formula", e))?;
    let dfa = to_dfa(&formula, &game.ap).map_err(|e| err("formula", e))?;
    let mut hyps = Vec::new();
    for text in &spec.hypotheses {
        let f = parse(text, &game.ap).map_err(|e| err("formula", e))?;
        let dfa_x = to_dfa(&f, &game.ap).map_err(|e| err("formula", e))?;
        let sol = stackelberg_response(&game, &dfa_x).map_err(|e| err("solve", e))?;
        hyps.push(
            Hypothesis::from_stackelberg(&game, dfa_x, &sol).map_err(|e| err("inference", e))?,
        );
    }
    let space = HypothesisSpace::new(hyps, spec.nominal).map_err(|e| err("inference", e))?;
    let bsr = BsrOracle::from_space(&space, &game);
    let params = HyperParams {
        window: spec.window,
        threshold: spec.threshold,
        ..Default::default()
    };
    let hyper =
        build_hyper_mdp(&game, &dfa, &space, &bsr, params).map_err(|e| err("hypergame", e))?;
    let syn = synthesize(&hyper).map_err(|e| err("solve", e))?;
    let (mut wins, mut total_len) = (0usize, 0usize);
    for i in 0..spec.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, i as u64));
        let mut actor = BsrActor(&bsr);
        let (hist, outcome) = simulate(
            &hyper,
            &game,
            &dfa,
            &syn.action,
            &mut actor,
            spec.horizon,
            &mut rng,
            |_| false,
        );
        total_len += hist.len();
        wins += usize::from(outcome == Outcome::Satisfied);
    }
    let mut row = ResultRow::from_counts(spec.name.clone(), wins, spec.episodes, total_len);
    row.value = Some(syn.init_value);
    Ok(row)
}

// ---------------------------------------------------------------------------
// Online mismatch demo
// ---------------------------------------------------------------------------

/// One detector evaluation along a run.
#[derive(Debug, Clone)]
pub struct MismatchPoint {
    pub step: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
}

#[derive(Debug, Clone)]
pub struct MismatchRun {
    /// Per-step detector trace of the run.
    pub points: Vec<MismatchPoint>,
    /// First step at which the test rejected, if any.
    pub rejection_step: Option<usize>,
}

pub fn mismatch_csv(run: &MismatchRun) -> String {
    let mut out = String::from("step,statistic,threshold,reject\n");
    for p in &run.points {
        writeln!(out, "{},{:.6},{:.6},{}", p.step, p.statistic, p.threshold, p.reject)
            .unwrap();
    }
    out
}

/// Online deviation detection: P1 follows the deceptive policy, P2 follows
/// the modeled BSR behavior until `deviation_step`, then plays uniformly at
/// random. After every step, a likelihood-ratio test of P2's observed actions
/// against the modeled policy is evaluated on the history so far.
///
/// The episode keeps running (up to the horizon) even after the objective
/// resolves, since the detector watches P2's behavior, not the task.
pub fn run_mismatch_demo(
    spec: &ExperimentSpec,
    base: Option<&Path>,
    seed: u64,
) -> Result<MismatchRun, HarnessError> {
    let scn = build_scenario(spec, base)?;
    let hyper = build_hyper_mdp(&scn.game, &scn.dfa, &scn.space, &scn.bsr, scn.params)
        .map_err(|e| err("hypergame", e))?;
    let syn = synthesize(&hyper).map_err(|e| err("solve", e))?;
    let deviation = spec.deviation_step.unwrap_or(usize::MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actor = ScriptedDeviation {
        before: BsrActor(&scn.bsr),
        after: RandomActor,
        switch_step: deviation,
    };

    let model = LazyHyperModel::new(&scn.game, &scn.dfa, &scn.space, &scn.bsr, scn.params);
    let mut v = model.init_state();
    let mut groups: Vec<u32> = Vec::new();
    let mut actions: Vec<usize> = Vec::new();
    let mut predicted: Vec<f64> = Vec::new();
    let mut points = Vec::new();
    let mut rejection_step = None;

    for step in 0..spec.horizon {
        let s = v.s as usize;
        let x = v.x as usize;
        // P1's policy is defined while the hypergame state is live; once the
        // objective has resolved P1 just holds still (the detector only
        // watches P2).
        let a1 = match hyper.id_of(&v) {
            Some(id) if !scn.dfa.is_accepting(v.q) && !scn.dfa.is_sink(v.q) => {
                syn.action[id as usize] as usize
            }
            _ => 0,
        };
        let a2 = actor.act(step, s, x, &scn.game, &mut rng);
        let s_next = sample_row(scn.game.row(s, a1, a2), &mut rng);
        groups.push(((x as u32) << 24) | s as u32);
        actions.push(a2);
        predicted.push(scn.bsr.dist[x][s][a2]);
        v = model.advance(&v, a1, a2, s_next);

        let rep: TestReport =
            policy_lr_test(&groups, &actions, &predicted, spec.alpha, DofConvention::FreeParams)
                .map_err(|e| err("detector", e))?;
        points.push(MismatchPoint {
            step,
            statistic: rep.statistic,
            threshold: rep.threshold,
            reject: rep.reject,
        });
        if rep.reject {
            rejection_step = Some(step);
            break;
        }
    }
    Ok(MismatchRun { points, rejection_step })
}

// ---------------------------------------------------------------------------
// Opponent-depth (λ) validation
// ---------------------------------------------------------------------------

/// Truncated Poisson(λ̃) sample on 0..=cap.
pub fn sample_truncated_poisson(lambda: f64, cap: usize, rng: &mut impl Rng) -> usize {
    let weights: Vec<f64> = (0..=cap).map(|k| poisson_pmf(k, lambda)).collect();
    let z: f64 = weights.iter().sum();
    let mut u: f64 = rng.gen::<f64>() * z;
    for (k, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return k;
        }
    }
    cap
}

/// λ-estimation protocol: P2's true depth is drawn per trajectory from a
/// truncated Poisson(λ̃); trajectories of `traj_len` joint steps are scored
/// against the level stack and the running estimate λ̂ is recorded after each.
/// Returns the λ̂ trajectory.
#[allow(clippy::too_many_arguments)]
pub fn run_lambda_validation(
    spec: &ExperimentSpec,
    base: Option<&Path>,
    true_lambda: f64,
    trajectories: usize,
    traj_len: usize,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let cfg = load_world(&spec.world, base)?;
    let game = build_world(&cfg).map_err(|e| err("world", e))?;
    let caps: Vec<&str> = spec.capture_atoms.iter().map(String::as_str).collect();
    let subgoal = spec
        .subgoals
        .first()
        .ok_or_else(|| err("spec", "λ validation needs at least one subgoal"))?;
    let sub = subgoal_game(&game, subgoal, &caps).map_err(|e| err("solve", e))?;
    let ch = ChParams { levels: spec.levels, tau: spec.tau, ..Default::default() };
    let stack = build_level_stack(&sub, &ch).map_err(|e| err("solve", e))?;

    let scale = if spec.score_scale == "log" { ScoreScale::Log } else { ScoreScale::Raw };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = PoissonEstimate::new(spec.levels, spec.tau);
    let mut out = Vec::with_capacity(trajectories);
    for _ in 0..trajectories {
        let level = sample_truncated_poisson(true_lambda, spec.levels, &mut rng);
        let mut h = HistoryRec::start(game.init);
        let mut s = game.init;
        for _ in 0..traj_len {
            let a1 = rng.gen_range(0..game.num_a1());
            let a2 = sample_dist(&stack.p2[level][s], &mut rng);
            let s_next = sample_row(game.row(s, a1, a2), &mut rng);
            h.push(a1, a2, s_next);
            s = s_next;
        }
        let r: Vec<f64> = (0..=spec.levels)
            .map(|k| trajectory_likelihood(&game, &stack, k, &h))
            .collect::<Result<_, _>>()
            .map_err(|e| err("solve", e))?;
        let sigma = level_scores(&r, spec.tau, scale);
        est.update(&sigma);
        out.push(est.lambda);
    }
    Ok(out)
}

pub fn lambda_csv(estimates: &[f64]) -> String {
    let mut out = String::from("trajectory,lambda_hat\n");
    for (i, l) in estimates.iter().enumerate() {
        writeln!(out, "{},{:.6}", i + 1, l).unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Trajectory logging
// ---------------------------------------------------------------------------

/// Line-delimited trajectory log of one simulated episode under the exact
/// planner; one record per step.
pub fn log_episode(
    spec: &ExperimentSpec,
    base: Option<&Path>,
    seed: u64,
) -> Result<String, HarnessError> {
    let scn = build_scenario(spec, base)?;
    let nash = if spec.p2_actor == "nash" {
        Some(shapley_vi(&scn.game, &scn.dfa).map_err(|e| err("solve", e))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actor = make_actor(spec, &scn, nash.as_ref())?;
    let mut out = String::new();
    if spec.planner == "mcts" {
        let model = LazyHyperModel::new(&scn.game, &scn.dfa, &scn.space, &scn.bsr, scn.params);
        let params = SearchParams {
            budget: spec.budget,
            depth: spec.depth,
            c: spec.exploration,
            gamma: spec.gamma,
        };
        let mut v = model.init_state();
        let mut outcome = Outcome::Timeout;
        let mut steps = 0usize;
        for step in 0..spec.horizon {
            if scn.dfa.is_accepting(v.q) {
                outcome = Outcome::Satisfied;
                break;
            }
            if scn.dfa.is_sink(v.q) {
                outcome = Outcome::Failed;
                break;
            }
            let a1 = search(&model, v, &params, &mut rng)
                .map_err(|e| err("planner", e))?
                .action;
            let s = v.s as usize;
            let a2 = actor.act(step, s, v.x as usize, &scn.game, &mut rng);
            let s_next = sample_row(scn.game.row(s, a1, a2), &mut rng);
            let prev = v;
            v = model.advance(&v, a1, a2, s_next);
            writeln!(
                out,
                "step={step} s={} a1={a1} a2={a2} s_next={s_next} q={} x={} class={}",
                prev.s, v.q, v.x, v.class
            )
            .unwrap();
            steps = step + 1;
        }
        if steps == spec.horizon && scn.dfa.is_accepting(v.q) {
            outcome = Outcome::Satisfied;
        }
        writeln!(out, "outcome={outcome:?} steps={steps}").unwrap();
        return Ok(out);
    }
    let hyper = build_hyper_mdp(&scn.game, &scn.dfa, &scn.space, &scn.bsr, scn.params)
        .map_err(|e| err("hypergame", e))?;
    let syn = synthesize(&hyper).map_err(|e| err("solve", e))?;
    let (hist, outcome) = simulate(
        &hyper,
        &scn.game,
        &scn.dfa,
        &syn.action,
        actor.as_mut(),
        spec.horizon,
        &mut rng,
        |rec| {
            writeln!(
                out,
                "step={} s={} a1={} a2={} s_next={} q={} x={} class={}",
                rec.step, rec.s, rec.a1, rec.a2, rec.s_next, rec.q, rec.x, rec.class
            )
            .unwrap();
            false
        },
    );
    writeln!(out, "outcome={outcome:?} steps={}", hist.len()).unwrap();
    Ok(out)
}

/// Observations of a logged trajectory (for `infer` replays).
pub fn parse_trajectory(text: &str) -> Result<Vec<Obs>, HarnessError> {
    let mut out = Vec::new();
    for line in text.lines() {
        if !line.starts_with("step=") {
            continue;
        }
        let mut s = None;
        let mut a1 = None;
        let mut a2 = None;
        let mut s_next = None;
        for tok in line.split_whitespace() {
            let (k, val) = tok
                .split_once('=')
                .ok_or_else(|| err("trace", format!("bad token `{tok}`")))?;
            let n: u32 = val.parse().map_err(|e| err("trace", format!("{tok}: {e}")))?;
            match k {
                "s" => s = Some(n),
                "a1" => a1 = Some(n as u16),
                "a2" => a2 = Some(n as u16),
                "s_next" => s_next = Some(n),
                _ => {}
            }
        }
        match (s, a1, a2, s_next) {
            (Some(s), Some(a1), Some(a2), Some(s_next)) => {
                out.push(Obs { s, a1, a2, s_next })
            }
            _ => return Err(err("trace", format!("incomplete record `{line}`"))),
        }
    }
    Ok(out)
}
