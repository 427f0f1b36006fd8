//! Two-player simultaneous-move stochastic transition systems
//! ⟨S, A₁×A₂, P, s₀, AP, L⟩ and the benchmark grid worlds: pursuit worlds
//! (two agents, four compass moves each) and trap worlds (a robot vs. a trap
//! controller that reallocates ℓ traps among n slots, optionally with a
//! reallocation cooldown of k steps folded into the state).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scltl::{ApSet, Symbol};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("transition row for state {state} joint action ({a1},{a2}) sums to {sum}")]
    BadRow { state: usize, a1: usize, a2: usize, sum: f64 },
    #[error("action ({a1},{a2}) unavailable at state {state}")]
    UnavailableAction { state: usize, a1: usize, a2: usize },
}

/// Simultaneous-move stochastic game with dense state ids.
#[derive(Debug, Clone)]
pub struct ConcurrentGame {
    pub num_states: usize,
    pub init: usize,
    pub ap: ApSet,
    /// L: S → 2^AP.
    pub labels: Vec<Symbol>,
    pub a1_names: Vec<String>,
    pub a2_names: Vec<String>,
    /// Per-state available P2 actions (P1's actions are always all available).
    avail2: Vec<Vec<u16>>,
    /// Sparse rows indexed by (s * |A1| + a1) * |A2| + a2. Unavailable joint
    /// actions have empty rows.
    succ: Vec<Vec<(u32, f64)>>,
    /// Human-readable state names for logs and dumps.
    pub state_names: Vec<String>,
}

impl ConcurrentGame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        init: usize,
        ap: ApSet,
        labels: Vec<Symbol>,
        a1_names: Vec<String>,
        a2_names: Vec<String>,
        avail2: Vec<Vec<u16>>,
        succ: Vec<Vec<(u32, f64)>>,
        state_names: Vec<String>,
    ) -> Result<Self, GameError> {
        let g = ConcurrentGame {
            num_states,
            init,
            ap,
            labels,
            a1_names,
            a2_names,
            avail2,
            succ,
            state_names,
        };
        if g.labels.len() != num_states || g.avail2.len() != num_states {
            return Err(GameError::InvalidConfig("labels/avail2 length mismatch".into()));
        }
        if g.succ.len() != num_states * g.num_a1() * g.num_a2() {
            return Err(GameError::InvalidConfig("transition table length mismatch".into()));
        }
        for s in 0..num_states {
            for a1 in 0..g.num_a1() {
                for &a2 in g.avail2(s) {
                    let row = g.row(s, a1, a2 as usize);
                    let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(GameError::BadRow { state: s, a1, a2: a2 as usize, sum });
                    }
                    if row.iter().any(|&(t, p)| t as usize >= num_states || p < 0.0) {
                        return Err(GameError::InvalidConfig(format!(
                            "bad successor entry at state {s}"
                        )));
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn num_a1(&self) -> usize {
        self.a1_names.len()
    }

    pub fn num_a2(&self) -> usize {
        self.a2_names.len()
    }

    pub fn avail2(&self, s: usize) -> &[u16] {
        &self.avail2[s]
    }

    #[inline]
    pub fn row(&self, s: usize, a1: usize, a2: usize) -> &[(u32, f64)] {
        &self.succ[(s * self.num_a1() + a1) * self.num_a2() + a2]
    }

    pub fn label(&self, s: usize) -> Symbol {
        self.labels[s]
    }

    /// Sample a successor from P(·|s,(a1,a2)).
    pub fn step(
        &self,
        s: usize,
        a1: usize,
        a2: usize,
        rng: &mut impl Rng,
    ) -> Result<usize, GameError> {
        if a1 >= self.num_a1() || !self.avail2[s].contains(&(a2 as u16)) {
            return Err(GameError::UnavailableAction { state: s, a1, a2 });
        }
        Ok(sample_row(self.row(s, a1, a2), rng))
    }
}

/// Sample from a sparse probability row (assumed normalized).
#[inline]
pub fn sample_row(row: &[(u32, f64)], rng: &mut impl Rng) -> usize {
    if row.len() == 1 {
        return row[0].0 as usize;
    }
    let mut u: f64 = rng.gen();
    for &(t, p) in row {
        u -= p;
        if u <= 0.0 {
            return t as usize;
        }
    }
    row.last().expect("empty transition row").0 as usize
}

/// A play prefix s₀a₀s₁a₁…s_n.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryRec {
    pub states: Vec<usize>,
    pub actions: Vec<(usize, usize)>,
}

impl HistoryRec {
    pub fn start(s0: usize) -> Self {
        HistoryRec { states: vec![s0], actions: Vec::new() }
    }

    pub fn push(&mut self, a1: usize, a2: usize, s_next: usize) {
        self.actions.push((a1, a2));
        self.states.push(s_next);
    }

    /// Number of moves taken.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Projection onto states.
    pub fn state_seq(&self) -> &[usize] {
        &self.states
    }

    /// Every step must have positive probability in `g`.
    pub fn is_consistent(&self, g: &ConcurrentGame) -> bool {
        self.states.len() == self.actions.len() + 1
            && self.actions.iter().enumerate().all(|(i, &(a1, a2))| {
                g.row(self.states[i], a1, a2)
                    .iter()
                    .any(|&(t, p)| t as usize == self.states[i + 1] && p > 0.0)
            })
    }
}

// ---------------------------------------------------------------------------
// Grid worlds
// ---------------------------------------------------------------------------

/// Declarative grid-world description, loadable from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub name: String,
    /// "pursuit" (two mobile agents) or "trap" (robot vs. trap controller).
    pub kind: String,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub obstacles: Vec<[usize; 2]>,
    /// Region/waypoint atoms: name → cell.
    #[serde(default)]
    pub waypoints: BTreeMap<String, [usize; 2]>,
    pub p1_start: [usize; 2],
    #[serde(default)]
    pub p2_start: Option<[usize; 2]>,
    /// Proximity threshold ξ (Manhattan) for the p₁ label (pursuit worlds).
    #[serde(default)]
    pub xi: usize,
    /// Control area p₂ := P1's x ≥ this column (pursuit worlds).
    #[serde(default)]
    pub control_min_x: Option<usize>,
    /// Trap worlds: slot cells, number of simultaneous traps ℓ, cooldown k.
    #[serde(default)]
    pub trap_slots: Vec<[usize; 2]>,
    #[serde(default)]
    pub trap_count: usize,
    #[serde(default)]
    pub cooldown: usize,
    /// Index into the placement list P2 starts with (trap worlds).
    #[serde(default)]
    pub initial_placement: usize,
    /// P1 slip model [intended, left-orthogonal, right-orthogonal];
    /// omitted = deterministic moves.
    #[serde(default)]
    pub slip: Option<[f64; 3]>,
}

impl GridConfig {
    pub fn from_toml(text: &str) -> Result<Self, GameError> {
        let cfg: GridConfig =
            toml::from_str(text).map_err(|e| GameError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: String| Err(GameError::InvalidConfig(m));
        if self.width == 0 || self.height == 0 {
            return bad("empty grid".into());
        }
        let in_bounds = |c: &[usize; 2]| c[0] < self.width && c[1] < self.height;
        let is_obstacle = |c: &[usize; 2]| self.obstacles.contains(c);
        for (what, cell) in self
            .waypoints
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain(std::iter::once(("p1_start", &self.p1_start)))
            .chain(self.p2_start.iter().map(|c| ("p2_start", c)))
            .chain(self.trap_slots.iter().map(|c| ("trap slot", c)))
        {
            if !in_bounds(cell) {
                return bad(format!("{what} out of bounds: {cell:?}"));
            }
            if what != "trap slot" && is_obstacle(cell) {
                return bad(format!("{what} on an obstacle: {cell:?}"));
            }
        }
        match self.kind.as_str() {
            "pursuit" => {
                if self.p2_start.is_none() {
                    return bad("pursuit world needs p2_start".into());
                }
            }
            "trap" => {
                if self.trap_count == 0 || self.trap_count > self.trap_slots.len() {
                    return bad("trap_count must be in 1..=|trap_slots|".into());
                }
            }
            k => return bad(format!("unknown world kind `{k}`")),
        }
        if let Some(sl) = self.slip {
            let sum: f64 = sl.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || sl.iter().any(|&p| p < 0.0) {
                return bad("slip probabilities must be nonnegative and sum to 1".into());
            }
        }
        Ok(())
    }

    fn passable(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && !self.obstacles.contains(&[x as usize, y as usize])
    }
}

/// Compass moves, fixed order (action id = index).
pub const DIRS: [(i64, i64); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];
pub const DIR_NAMES: [&str; 4] = ["U", "D", "L", "R"];

fn dir_name_list() -> Vec<String> {
    DIR_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Cells reachable in a grid, indexed densely (row-major over passable cells).
struct CellIndex {
    cells: Vec<[usize; 2]>,
    id: Vec<Option<u16>>, // by y * width + x
    width: usize,
}

impl CellIndex {
    fn new(cfg: &GridConfig) -> Self {
        let mut cells = Vec::new();
        let mut id = vec![None; cfg.width * cfg.height];
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                if cfg.passable(x as i64, y as i64) {
                    id[y * cfg.width + x] = Some(cells.len() as u16);
                    cells.push([x, y]);
                }
            }
        }
        CellIndex { cells, id, width: cfg.width }
    }

    fn get(&self, c: [usize; 2]) -> Option<u16> {
        self.id[c[1] * self.width + c[0]]
    }

    fn len(&self) -> usize {
        self.cells.len()
    }
}

/// Target cell of a move with wall/obstacle bounce-back.
fn move_cell(cfg: &GridConfig, from: [usize; 2], dir: usize) -> [usize; 2] {
    let (dx, dy) = DIRS[dir];
    let (nx, ny) = (from[0] as i64 + dx, from[1] as i64 + dy);
    if cfg.passable(nx, ny) {
        [nx as usize, ny as usize]
    } else {
        from
    }
}

/// P1's move distribution under the slip model: intended direction with the
/// first weight, the two orthogonal directions with the others.
fn slipped_moves(cfg: &GridConfig, from: [usize; 2], dir: usize) -> Vec<([usize; 2], f64)> {
    let Some(slip) = cfg.slip else {
        return vec![(move_cell(cfg, from, dir), 1.0)];
    };
    // Orthogonal pairs: U/D ↔ L/R.
    let (o1, o2) = if dir < 2 { (2, 3) } else { (0, 1) };
    let mut out: Vec<([usize; 2], f64)> = Vec::new();
    for (d, p) in [(dir, slip[0]), (o1, slip[1]), (o2, slip[2])] {
        if p == 0.0 {
            continue;
        }
        let cell = move_cell(cfg, from, d);
        match out.iter_mut().find(|(c, _)| *c == cell) {
            Some((_, q)) => *q += p,
            None => out.push((cell, p)),
        }
    }
    out
}

/// Pursuit world: joint state (P1 cell, P2 cell), both players move in four
/// compass directions; bouncing off walls/obstacles leaves the mover in
/// place. Labels: waypoint atoms on P1's cell, p1 = Manhattan distance ≤ ξ,
/// p2 = P1 inside the control area.
pub fn build_pursuit_world(cfg: &GridConfig) -> Result<ConcurrentGame, GameError> {
    cfg.validate()?;
    if cfg.kind != "pursuit" {
        return Err(GameError::InvalidConfig(format!("expected pursuit world, got {}", cfg.kind)));
    }
    let idx = CellIndex::new(cfg);
    let n = idx.len();
    let num_states = n * n;
    let wp_names: Vec<&String> = cfg.waypoints.keys().collect();
    let mut ap_names: Vec<String> = wp_names.iter().map(|s| s.to_string()).collect();
    ap_names.push("p1".into());
    ap_names.push("p2".into());
    let ap = ApSet::new(ap_names).map_err(|e| GameError::InvalidConfig(e.to_string()))?;

    let mut labels = vec![0u32; num_states];
    let mut state_names = vec![String::new(); num_states];
    for c1 in 0..n {
        for c2 in 0..n {
            let s = c1 * n + c2;
            let p1c = idx.cells[c1];
            let p2c = idx.cells[c2];
            let mut sym = 0u32;
            for (i, name) in wp_names.iter().enumerate() {
                if cfg.waypoints[*name] == p1c {
                    sym |= 1 << i;
                }
            }
            let dist = p1c[0].abs_diff(p2c[0]) + p1c[1].abs_diff(p2c[1]);
            if dist <= cfg.xi {
                sym |= 1 << ap.index("p1").unwrap();
            }
            if let Some(cx) = cfg.control_min_x {
                if p1c[0] >= cx {
                    sym |= 1 << ap.index("p2").unwrap();
                }
            }
            labels[s] = sym;
            state_names[s] =
                format!("p1@({},{}) p2@({},{})", p1c[0], p1c[1], p2c[0], p2c[1]);
        }
    }

    let mut succ = Vec::with_capacity(num_states * 16);
    for c1 in 0..n {
        for c2 in 0..n {
            for a1 in 0..4 {
                let p1_moves = slipped_moves(cfg, idx.cells[c1], a1);
                for a2 in 0..4 {
                    let p2_cell = move_cell(cfg, idx.cells[c2], a2);
                    let c2n = idx.get(p2_cell).unwrap() as usize;
                    let row: Vec<(u32, f64)> = p1_moves
                        .iter()
                        .map(|&(cell, p)| ((idx.get(cell).unwrap() as usize * n + c2n) as u32, p))
                        .collect();
                    succ.push(row);
                }
            }
        }
    }

    let c1 = idx.get(cfg.p1_start).unwrap() as usize;
    let c2 = idx.get(cfg.p2_start.unwrap()).unwrap() as usize;
    ConcurrentGame::new(
        num_states,
        c1 * n + c2,
        ap,
        labels,
        dir_name_list(),
        dir_name_list(),
        vec![vec![0, 1, 2, 3]; num_states],
        succ,
        state_names,
    )
}

/// All size-ℓ subsets of 0..n in lexicographic order.
fn combinations(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, l: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == l {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, l, cur, out);
            cur.pop();
        }
    }
    rec(0, n, l, &mut cur, &mut out);
    out
}

/// Trap world: P1 is a mobile robot; P2 reallocates ℓ traps among the
/// configured slot cells. State = (P1 cell, placement, cooldown). P2's
/// actions are the C(n,ℓ) placements plus a no-op; changing the placement is
/// only legal at cooldown 0 and restarts the cooldown at k. The `obs` atom
/// holds whenever P1 stands on a currently trapped cell.
pub fn build_trap_world(cfg: &GridConfig) -> Result<ConcurrentGame, GameError> {
    cfg.validate()?;
    if cfg.kind != "trap" {
        return Err(GameError::InvalidConfig(format!("expected trap world, got {}", cfg.kind)));
    }
    let idx = CellIndex::new(cfg);
    let n_cells = idx.len();
    let placements = combinations(cfg.trap_slots.len(), cfg.trap_count);
    let n_pl = placements.len();
    let noop = n_pl; // action id of "keep current placement"
    let k = cfg.cooldown;
    let n_cd = k + 1;
    let num_states = n_cells * n_pl * n_cd;

    let mut ap_names: Vec<String> = vec!["obs".into()];
    ap_names.extend(cfg.waypoints.keys().cloned());
    let ap = ApSet::new(ap_names).map_err(|e| GameError::InvalidConfig(e.to_string()))?;

    // Per-placement bitmask over slot ids → trapped cell ids.
    let trapped_cells: Vec<Vec<u16>> = placements
        .iter()
        .map(|pl| pl.iter().filter_map(|&slot| idx.get(cfg.trap_slots[slot])).collect())
        .collect();

    let enc = |cell: usize, pl: usize, cd: usize| (cell * n_pl + pl) * n_cd + cd;

    let mut labels = vec![0u32; num_states];
    let mut state_names = vec![String::new(); num_states];
    for cell in 0..n_cells {
        for pl in 0..n_pl {
            for cd in 0..n_cd {
                let s = enc(cell, pl, cd);
                let mut sym = 0u32;
                if trapped_cells[pl].contains(&(cell as u16)) {
                    sym |= 1; // obs
                }
                for (i, (name, wcell)) in cfg.waypoints.iter().enumerate() {
                    let _ = name;
                    if idx.get(*wcell) == Some(cell as u16) {
                        sym |= 1 << (i + 1);
                    }
                }
                labels[s] = sym;
                let c = idx.cells[cell];
                state_names[s] = format!(
                    "p1@({},{}) traps={:?} cd={}",
                    c[0], c[1], placements[pl], cd
                );
            }
        }
    }

    let mut a2_names: Vec<String> =
        placements.iter().map(|pl| format!("place{pl:?}")).collect();
    a2_names.push("noop".into());
    let num_a2 = n_pl + 1;

    let mut avail2 = vec![Vec::new(); num_states];
    let mut succ = vec![Vec::new(); num_states * 4 * num_a2];
    for cell in 0..n_cells {
        for pl in 0..n_pl {
            for cd in 0..n_cd {
                let s = enc(cell, pl, cd);
                let acts: Vec<u16> = if cd == 0 {
                    (0..num_a2 as u16).collect()
                } else {
                    vec![noop as u16]
                };
                for a1 in 0..4 {
                    let moves = slipped_moves(cfg, idx.cells[cell], a1);
                    for &a2 in &acts {
                        let (pl_next, cd_next) = if (a2 as usize) == noop || (a2 as usize) == pl {
                            (pl, cd.saturating_sub(1))
                        } else {
                            (a2 as usize, k)
                        };
                        let row: Vec<(u32, f64)> = moves
                            .iter()
                            .map(|&(c, p)| {
                                (enc(idx.get(c).unwrap() as usize, pl_next, cd_next) as u32, p)
                            })
                            .collect();
                        succ[(s * 4 + a1) * num_a2 + a2 as usize] = row;
                    }
                }
                avail2[s] = acts;
            }
        }
    }

    if cfg.initial_placement >= n_pl {
        return Err(GameError::InvalidConfig("initial_placement out of range".into()));
    }
    let init = enc(
        idx.get(cfg.p1_start)
            .ok_or_else(|| GameError::InvalidConfig("p1_start not passable".into()))? as usize,
        cfg.initial_placement,
        0,
    );
    ConcurrentGame::new(
        num_states,
        init,
        ap,
        labels,
        dir_name_list(),
        a2_names,
        avail2,
        succ,
        state_names,
    )
}

/// Build whichever world the config describes.
pub fn build_world(cfg: &GridConfig) -> Result<ConcurrentGame, GameError> {
    match cfg.kind.as_str() {
        "pursuit" => build_pursuit_world(cfg),
        "trap" => build_trap_world(cfg),
        k => Err(GameError::InvalidConfig(format!("unknown world kind `{k}`"))),
    }
}
