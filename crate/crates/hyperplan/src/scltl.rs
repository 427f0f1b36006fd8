//! Syntactically co-safe LTL: parsing, positive normal form, and compilation
//! into complete DFAs that accept exactly the good prefixes.
//!
//! A finite word w is a *good prefix* of φ if every infinite continuation of w
//! satisfies φ. For the co-safe fragment (negation only on atoms, temporal
//! operators limited to X, F, U) the good prefixes form a regular language.
//!
//! Compilation works by formula progression: the states of the automaton are
//! the residual formulas obtained by consuming one symbol at a time,
//!
//!   prog(φ₁ U φ₂, σ) = prog(φ₂, σ) ∨ (prog(φ₁, σ) ∧ φ₁ U φ₂)
//!
//! interned up to a canonical form. The result is deterministic and total by
//! construction; it is then minimized by partition refinement. The accepting
//! state is the fully-discharged residual ⊤, i.e. acceptance follows the
//! *informative*-prefix reading: every obligation, including tautological
//! ones like a ∨ ¬a, must be discharged by symbols actually read. This makes
//! the accepting set absorbing and matches direct evaluation of the word
//! padded with a neutral end-of-input symbol.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Declared atomic propositions. Symbols are bitmasks over this set, so at
/// most 31 atoms are supported (far beyond anything practical here).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApSet {
    names: Vec<String>,
}

/// One symbol σ ∈ 2^AP, encoded as a bitmask (bit i = atom i holds).
pub type Symbol = u32;

impl ApSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, ScltlError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() > 31 {
            return Err(ScltlError::TooManyAtoms(names.len()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ScltlError::DuplicateAtom(n.clone()));
            }
        }
        Ok(ApSet { names })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of symbols |2^AP|.
    pub fn num_symbols(&self) -> usize {
        1usize << self.names.len()
    }

    /// Build a symbol from the atoms that hold.
    pub fn symbol<'a>(&self, atoms: impl IntoIterator<Item = &'a str>) -> Symbol {
        let mut s = 0u32;
        for a in atoms {
            let i = self.index(a).unwrap_or_else(|| panic!("undeclared atom {a}"));
            s |= 1 << i;
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum ScltlError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("undeclared atom `{0}`")]
    UndeclaredAtom(String),
    #[error("formula outside the co-safe fragment: negation applied to {0}")]
    NotCoSafe(&'static str),
    #[error("too many atoms ({0}); at most 31 supported")]
    TooManyAtoms(usize),
    #[error("duplicate atom `{0}`")]
    DuplicateAtom(String),
    #[error("DFA construction exceeded the state cap of {0}")]
    StateCap(usize),
    #[error("bad automaton dump: {0}")]
    BadDump(String),
}

/// scLTL formula in positive normal form: negation occurs only on atoms,
/// F φ is stored as ⊤ U φ.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(usize),
    NegAtom(usize),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    /// Canonical form: And/Or flattened, children sorted and deduplicated,
    /// boolean identities applied. Interning states during DFA construction
    /// relies on this being a normal form for the combinations progression
    /// produces.
    fn simplify(self) -> Formula {
        match self {
            Formula::And(children) => {
                let mut out: Vec<Formula> = Vec::new();
                for c in children {
                    match c.simplify() {
                        Formula::True => {}
                        Formula::False => return Formula::False,
                        Formula::And(gs) => out.extend(gs),
                        g => out.push(g),
                    }
                }
                out.sort();
                out.dedup();
                // p ∧ ¬p is unsatisfiable
                for c in &out {
                    if let Formula::Atom(p) = c {
                        if out.contains(&Formula::NegAtom(*p)) {
                            return Formula::False;
                        }
                    }
                }
                match out.len() {
                    0 => Formula::True,
                    1 => out.pop().unwrap(),
                    _ => Formula::And(out),
                }
            }
            Formula::Or(children) => {
                let mut out: Vec<Formula> = Vec::new();
                for c in children {
                    match c.simplify() {
                        Formula::False => {}
                        Formula::True => return Formula::True,
                        Formula::Or(gs) => out.extend(gs),
                        g => out.push(g),
                    }
                }
                out.sort();
                out.dedup();
                // Note: p ∨ ¬p is NOT rewritten to ⊤. Acceptance follows the
                // informative-prefix reading (obligations discharged by symbols
                // actually read), under which a tautology over future symbols
                // is still an undischarged obligation.
                match out.len() {
                    0 => Formula::False,
                    1 => out.pop().unwrap(),
                    _ => Formula::Or(out),
                }
            }
            Formula::Next(f) => match f.simplify() {
                // ⊤ and ⊥ are time-invariant; X needs no symbol to resolve them.
                Formula::True => Formula::True,
                Formula::False => Formula::False,
                g => Formula::Next(Box::new(g)),
            },
            Formula::Until(l, r) => {
                let l = l.simplify();
                let r = r.simplify();
                match (&l, &r) {
                    (_, Formula::True) => Formula::True,
                    (_, Formula::False) => Formula::False,
                    _ => Formula::Until(Box::new(l), Box::new(r)),
                }
            }
            f => f,
        }
    }

    /// One-step derivative: the residual obligation after reading `sym`.
    fn progress(&self, sym: Symbol) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(p) => {
                if sym & (1 << p) != 0 {
                    Formula::True
                } else {
                    Formula::False
                }
            }
            Formula::NegAtom(p) => {
                if sym & (1 << p) == 0 {
                    Formula::True
                } else {
                    Formula::False
                }
            }
            Formula::And(cs) => {
                Formula::And(cs.iter().map(|c| c.progress(sym)).collect()).simplify()
            }
            Formula::Or(cs) => Formula::Or(cs.iter().map(|c| c.progress(sym)).collect()).simplify(),
            Formula::Next(f) => (**f).clone(),
            Formula::Until(l, r) => Formula::Or(vec![
                r.progress(sym),
                Formula::And(vec![l.progress(sym), self.clone()]).simplify(),
            ])
            .simplify(),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Raw AST before negation pushdown.
#[derive(Debug, Clone)]
enum Raw {
    True,
    False,
    Atom(usize),
    Not(Box<Raw>),
    And(Box<Raw>, Box<Raw>),
    Or(Box<Raw>, Box<Raw>),
    Next(Box<Raw>),
    Finally(Box<Raw>),
    Until(Box<Raw>, Box<Raw>),
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    ap: &'a ApSet,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> ScltlError {
        ScltlError::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    /// Word starting at the cursor: identifier or keyword.
    fn word(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let end = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if end == 0 {
            None
        } else {
            Some(&rest[..end])
        }
    }

    // Precedence, loosest to tightest: |  &  U  unary.
    fn parse_or(&mut self) -> Result<Raw, ScltlError> {
        let mut lhs = self.parse_and()?;
        while self.eat('|') {
            let rhs = self.parse_and()?;
            lhs = Raw::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Raw, ScltlError> {
        let mut lhs = self.parse_until()?;
        while self.eat('&') {
            let rhs = self.parse_until()?;
            lhs = Raw::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_until(&mut self) -> Result<Raw, ScltlError> {
        let lhs = self.parse_unary()?;
        self.skip_ws();
        if self.word() == Some("U") {
            self.pos += 1;
            let rhs = self.parse_until()?; // right-associative
            Ok(Raw::Until(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn parse_unary(&mut self) -> Result<Raw, ScltlError> {
        if self.eat('!') {
            return Ok(Raw::Not(Box::new(self.parse_unary()?)));
        }
        if self.eat('(') {
            let inner = self.parse_or()?;
            if !self.eat(')') {
                return Err(self.err("expected `)`"));
            }
            return Ok(inner);
        }
        let Some(w) = self.word() else {
            return Err(self.err("expected formula"));
        };
        match w {
            "X" | "F" => {
                self.pos += 1;
                let inner = self.parse_unary()?;
                Ok(if w == "X" { Raw::Next(Box::new(inner)) } else { Raw::Finally(Box::new(inner)) })
            }
            "true" => {
                self.pos += w.len();
                Ok(Raw::True)
            }
            "false" => {
                self.pos += w.len();
                Ok(Raw::False)
            }
            "U" => Err(self.err("`U` is an infix operator")),
            name => match self.ap.index(name) {
                Some(i) => {
                    self.pos += name.len();
                    Ok(Raw::Atom(i))
                }
                None => Err(ScltlError::UndeclaredAtom(name.to_string())),
            },
        }
    }
}

/// Push negations down to atoms. `neg` = parity of enclosing negations.
fn to_pnf(raw: &Raw, neg: bool) -> Result<Formula, ScltlError> {
    Ok(match raw {
        Raw::True => {
            if neg {
                Formula::False
            } else {
                Formula::True
            }
        }
        Raw::False => {
            if neg {
                Formula::True
            } else {
                Formula::False
            }
        }
        Raw::Atom(p) => {
            if neg {
                Formula::NegAtom(*p)
            } else {
                Formula::Atom(*p)
            }
        }
        Raw::Not(f) => to_pnf(f, !neg)?,
        Raw::And(l, r) => {
            let (l, r) = (to_pnf(l, neg)?, to_pnf(r, neg)?);
            if neg {
                Formula::Or(vec![l, r])
            } else {
                Formula::And(vec![l, r])
            }
        }
        Raw::Or(l, r) => {
            let (l, r) = (to_pnf(l, neg)?, to_pnf(r, neg)?);
            if neg {
                Formula::And(vec![l, r])
            } else {
                Formula::Or(vec![l, r])
            }
        }
        Raw::Next(f) => Formula::Next(Box::new(to_pnf(f, neg)?)),
        Raw::Finally(f) => {
            if neg {
                return Err(ScltlError::NotCoSafe("an eventuality (¬F becomes G)"));
            }
            Formula::Until(Box::new(Formula::True), Box::new(to_pnf(f, false)?))
        }
        Raw::Until(l, r) => {
            if neg {
                return Err(ScltlError::NotCoSafe("an until (¬U becomes a release)"));
            }
            Formula::Until(Box::new(to_pnf(l, false)?), Box::new(to_pnf(r, false)?))
        }
    })
}

/// Parse a co-safe LTL formula over the declared atoms into PNF.
pub fn parse(text: &str, ap: &ApSet) -> Result<Formula, ScltlError> {
    let mut p = Parser { text, pos: 0, ap };
    let raw = p.parse_or()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.err("trailing input"));
    }
    Ok(to_pnf(&raw, false)?.simplify())
}

// ---------------------------------------------------------------------------
// DFA
// ---------------------------------------------------------------------------

/// Complete DFA over 2^AP. `trans[q * num_symbols + sym]` is the successor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    pub num_states: usize,
    pub num_aps: usize,
    pub trans: Vec<u32>,
    pub init: u32,
    pub accepting: Vec<bool>,
    /// Dead state (non-accepting, absorbing), if the language has one.
    pub sink: Option<u32>,
}

impl Dfa {
    pub fn num_symbols(&self) -> usize {
        1usize << self.num_aps
    }

    #[inline]
    pub fn step(&self, q: u32, sym: Symbol) -> u32 {
        self.trans[q as usize * self.num_symbols() + sym as usize]
    }

    pub fn is_accepting(&self, q: u32) -> bool {
        self.accepting[q as usize]
    }

    pub fn is_sink(&self, q: u32) -> bool {
        self.sink == Some(q)
    }

    /// State sequence q₀=ι, q_{i+1} = δ(q_i, w_i). Length |w|+1.
    pub fn run(&self, w: &[Symbol]) -> Vec<u32> {
        let mut qs = Vec::with_capacity(w.len() + 1);
        let mut q = self.init;
        qs.push(q);
        for &s in w {
            q = self.step(q, s);
            qs.push(q);
        }
        qs
    }

    /// True iff the run visits an accepting state (some prefix is good).
    pub fn accepts(&self, w: &[Symbol]) -> bool {
        self.run(w).iter().any(|&q| self.is_accepting(q))
    }

    /// Line-oriented textual dump; `parse_dump` round-trips bit-exactly.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("states {}\n", self.num_states));
        out.push_str(&format!("aps {}\n", self.num_aps));
        out.push_str(&format!("init {}\n", self.init));
        let acc: Vec<String> = (0..self.num_states)
            .filter(|&q| self.accepting[q])
            .map(|q| q.to_string())
            .collect();
        out.push_str(&format!("accept {}\n", acc.join(",")));
        if let Some(k) = self.sink {
            out.push_str(&format!("sink {k}\n"));
        }
        for q in 0..self.num_states {
            for sym in 0..self.num_symbols() {
                out.push_str(&format!("trans {q} {sym} {}\n", self.trans[q * self.num_symbols() + sym]));
            }
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Dfa, ScltlError> {
        let bad = |m: &str| ScltlError::BadDump(m.to_string());
        let mut num_states = None;
        let mut num_aps = None;
        let mut init = None;
        let mut accept: Vec<u32> = Vec::new();
        let mut sink = None;
        let mut triples: Vec<(usize, usize, u32)> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            match it.next() {
                Some("states") => {
                    num_states = Some(
                        it.next()
                            .ok_or_else(|| bad("states"))?
                            .parse()
                            .map_err(|_| bad("states"))?,
                    )
                }
                Some("aps") => {
                    num_aps =
                        Some(it.next().ok_or_else(|| bad("aps"))?.parse().map_err(|_| bad("aps"))?)
                }
                Some("init") => {
                    init = Some(
                        it.next().ok_or_else(|| bad("init"))?.parse().map_err(|_| bad("init"))?,
                    )
                }
                Some("accept") => {
                    for part in it.next().unwrap_or("").split(',').filter(|p| !p.is_empty()) {
                        accept.push(part.parse().map_err(|_| bad("accept"))?);
                    }
                }
                Some("sink") => {
                    sink = Some(
                        it.next().ok_or_else(|| bad("sink"))?.parse().map_err(|_| bad("sink"))?,
                    )
                }
                Some("trans") => {
                    let q: usize =
                        it.next().ok_or_else(|| bad("trans"))?.parse().map_err(|_| bad("trans"))?;
                    let sym: usize =
                        it.next().ok_or_else(|| bad("trans"))?.parse().map_err(|_| bad("trans"))?;
                    let to: u32 =
                        it.next().ok_or_else(|| bad("trans"))?.parse().map_err(|_| bad("trans"))?;
                    triples.push((q, sym, to));
                }
                _ => return Err(bad(&format!("unknown line `{line}`"))),
            }
        }
        let num_states: usize = num_states.ok_or_else(|| bad("missing states"))?;
        let num_aps: usize = num_aps.ok_or_else(|| bad("missing aps"))?;
        let nsym = 1usize << num_aps;
        let mut trans = vec![u32::MAX; num_states * nsym];
        for (q, sym, to) in triples {
            if q >= num_states || sym >= nsym || to as usize >= num_states {
                return Err(bad("transition out of range"));
            }
            trans[q * nsym + sym] = to;
        }
        if trans.iter().any(|&t| t == u32::MAX) {
            return Err(bad("incomplete transition table"));
        }
        let mut accepting = vec![false; num_states];
        for a in accept {
            *accepting.get_mut(a as usize).ok_or_else(|| bad("accept out of range"))? = true;
        }
        Ok(Dfa {
            num_states,
            num_aps,
            trans,
            init: init.ok_or_else(|| bad("missing init"))?,
            accepting,
            sink,
        })
    }
}

impl fmt::Display for Dfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

/// Default cap on intermediate DFA states.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Compile a PNF co-safe formula into the minimal complete DFA accepting
/// exactly the words with a good prefix.
pub fn to_dfa(f: &Formula, ap: &ApSet) -> Result<Dfa, ScltlError> {
    to_dfa_capped(f, ap, DEFAULT_STATE_CAP)
}

pub fn to_dfa_capped(f: &Formula, ap: &ApSet, cap: usize) -> Result<Dfa, ScltlError> {
    let nsym = ap.num_symbols();
    let init_formula = f.clone().simplify();

    // Residual-formula exploration.
    let mut ids: HashMap<Formula, u32> = HashMap::new();
    let mut states: Vec<Formula> = Vec::new();
    let mut trans: Vec<u32> = Vec::new();
    ids.insert(init_formula.clone(), 0);
    states.push(init_formula);
    let mut next = 0usize;
    while next < states.len() {
        let cur = states[next].clone();
        for sym in 0..nsym {
            let succ = cur.progress(sym as Symbol);
            let id = match ids.get(&succ) {
                Some(&id) => id,
                None => {
                    if states.len() >= cap {
                        return Err(ScltlError::StateCap(cap));
                    }
                    let id = states.len() as u32;
                    ids.insert(succ.clone(), id);
                    states.push(succ);
                    id
                }
            };
            trans.push(id);
        }
        next += 1;
    }
    let n = states.len();

    // Accepting = the fully-discharged residual ⊤ (informative prefixes).
    let accepting: Vec<bool> = states.iter().map(|s| *s == Formula::True).collect();

    // Moore partition refinement starting from {accepting, rest}.
    let mut block: Vec<u32> = accepting.iter().map(|&a| a as u32).collect();
    loop {
        let mut sig_ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut new_block = vec![0u32; n];
        for q in 0..n {
            let mut sig = Vec::with_capacity(nsym + 1);
            sig.push(block[q]);
            for s in 0..nsym {
                sig.push(block[trans[q * nsym + s] as usize]);
            }
            let next_id = sig_ids.len() as u32;
            let id = *sig_ids.entry(sig).or_insert(next_id);
            new_block[q] = id;
        }
        let stable = sig_ids.len() == block.iter().collect::<std::collections::HashSet<_>>().len();
        block = new_block;
        if stable {
            break;
        }
    }

    // Renumber blocks in order of first appearance (exploration order), which
    // makes recompilation canonical. Keep only blocks reachable from init.
    let num_blocks = *block.iter().max().unwrap() as usize + 1;
    let mut order = vec![u32::MAX; num_blocks];
    let mut kept = 0u32;
    let mut min_trans = Vec::new();
    let mut min_acc = Vec::new();
    let mut queue = vec![block[0]];
    // BFS over blocks from the initial block, via one representative state each.
    let mut rep = vec![usize::MAX; num_blocks];
    for q in (0..n).rev() {
        rep[block[q] as usize] = q;
    }
    let block_succ = |b: u32, sym: usize| -> u32 { block[trans[rep[b as usize] * nsym + sym] as usize] };
    order[block[0] as usize] = 0;
    kept += 1;
    let mut head = 0;
    while head < queue.len() {
        let b = queue[head];
        head += 1;
        for sym in 0..nsym {
            let sb = block_succ(b, sym);
            if order[sb as usize] == u32::MAX {
                order[sb as usize] = kept;
                kept += 1;
                queue.push(sb);
            }
        }
    }
    for &b in &queue {
        let q = rep[b as usize];
        for sym in 0..nsym {
            min_trans.push(order[block[trans[q * nsym + sym] as usize] as usize]);
        }
        min_acc.push(accepting[q]);
    }
    let n_min = queue.len();

    // The dead state (if any) is the unique non-accepting absorbing state.
    let mut sink = None;
    for q in 0..n_min {
        if !min_acc[q] && (0..nsym).all(|s| min_trans[q * nsym + s] == q as u32) {
            sink = Some(q as u32);
            break;
        }
    }

    Ok(Dfa {
        num_states: n_min,
        num_aps: ap.len(),
        trans: min_trans,
        init: 0,
        accepting: min_acc,
        sink,
    })
}
