//! Extracting a sequence of automata from a membership teacher.
//!
//! [`lstar_extract`] runs the L* algorithm with Maler–Pnueli counterexample
//! handling (every suffix of a counterexample becomes a column) and
//! returns each hypothesis it emits. The stand-in for a trained network is
//! [`TruncatedCfgTeacher`], which accepts the words of a grammar up to a
//! length and nesting depth; [`NoisyTeacher`] corrupts its answers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::automata::{format_word, Dfa, StateId, Token, Word};
use crate::cfg::earley::Parser;
use crate::cfg::sample::{sample, WeightedCfg};
use crate::cfg::{Cfg, Symbol};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("flip probability {0} outside [0, 0.05]")]
    FlipProbability(f64),
    #[error("length band {0}..={1} is empty")]
    EmptyBand(usize, usize),
}

/// Answers membership and equivalence queries.
pub trait Teacher {
    fn alphabet(&self) -> Vec<Token>;

    fn membership(&self, w: &[Token]) -> bool;

    /// False only when no word starting with `prefix` is accepted.
    fn may_extend(&self, _prefix: &[Token]) -> bool {
        true
    }

    /// Longest accepted word, when bounded.
    fn max_len(&self) -> Option<usize> {
        None
    }

    /// Every accepted word up to `max_len`, shortest first and then in
    /// token order, when the teacher can list them.
    fn positives(&self, _max_len: usize) -> Option<Vec<Word>> {
        None
    }

    /// Words to test hypotheses on beyond exhaustive enumeration.
    fn samples(&self, _n: usize, _seed: u64) -> Vec<Word> {
        Vec::new()
    }

    fn equivalence(&self, h: &Dfa, cfg: &EquivalenceConfig) -> Option<Word>
    where
        Self: Sized,
    {
        equivalence_by_sampling_and_enumeration(self, h, cfg)
    }
}

/// Nesting depth of one derivation: the largest number of depth-counting
/// productions on a root-to-leaf path. When a grammar marks no production,
/// every production counts and depth is the derivation tree's height.
struct DepthTable {
    nts: Vec<String>,
    prods: Vec<(usize, Vec<DSym>, u32)>,
}

#[derive(Clone)]
enum DSym {
    T(Token),
    N(usize),
}

const NONE: u32 = u32::MAX;

impl DepthTable {
    fn new(g: &Cfg) -> DepthTable {
        let nts = g.nonterminal_order();
        let idx = |n: &str| nts.iter().position(|m| m == n).expect("known nonterminal");
        let any_marked = g.productions().iter().any(|p| p.deepens);
        let prods = g
            .productions()
            .iter()
            .map(|p| {
                let rhs = p
                    .rhs
                    .iter()
                    .map(|s| match s {
                        Symbol::T(t) => DSym::T(t.clone()),
                        Symbol::N(n) => DSym::N(idx(n)),
                    })
                    .collect();
                (idx(&p.lhs), rhs, u32::from(p.deepens || !any_marked))
            })
            .collect();
        DepthTable { nts, prods }
    }

    /// Smallest depth over all derivations of `w` from the start symbol
    /// (index 0), or `None` when `w` is not derivable.
    fn min_depth(&self, w: &[Token]) -> Option<u32> {
        let n = w.len();
        let k = self.nts.len();
        // best[a][i][j] for the span w[i..j]
        let mut best = vec![vec![vec![NONE; n + 1]; n + 1]; k];
        for len in 0..=n {
            for i in 0..=n - len {
                let j = i + len;
                loop {
                    let mut changed = false;
                    for (lhs, rhs, d) in &self.prods {
                        let c = self.span_cost(rhs, i, j, w, &best);
                        if c != NONE && c + d < best[*lhs][i][j] {
                            best[*lhs][i][j] = c + d;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
            }
        }
        let v = best[0][0][n];
        (v != NONE).then_some(v)
    }

    /// Least over splits of `w[i..j]` among `rhs` of the largest part cost.
    fn span_cost(&self, rhs: &[DSym], i: usize, j: usize, w: &[Token], best: &[Vec<Vec<u32>>]) -> u32 {
        let mut reach: Vec<u32> = vec![NONE; j - i + 1];
        reach[0] = 0;
        for s in rhs {
            let mut next = vec![NONE; j - i + 1];
            for (off, &c) in reach.iter().enumerate() {
                if c == NONE {
                    continue;
                }
                let pos = i + off;
                match s {
                    DSym::T(t) => {
                        if pos < j && &w[pos] == t {
                            next[off + 1] = next[off + 1].min(c);
                        }
                    }
                    DSym::N(m) => {
                        for e in pos..=j {
                            let part = best[*m][pos][e];
                            if part != NONE {
                                next[e - i] = next[e - i].min(c.max(part));
                            }
                        }
                    }
                }
            }
            reach = next;
        }
        reach[j - i]
    }
}

/// Words of one nonterminal, bucketed by length.
#[derive(Clone, Default)]
struct Bucket {
    set: HashSet<Word>,
    by_len: Vec<Vec<Word>>,
}

impl Bucket {
    fn insert(&mut self, w: Word) -> bool {
        if self.set.contains(&w) {
            return false;
        }
        if self.by_len.len() <= w.len() {
            self.by_len.resize(w.len() + 1, Vec::new());
        }
        self.by_len[w.len()].push(w.clone());
        self.set.insert(w);
        true
    }

    fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    fn upto(&self, room: usize) -> impl Iterator<Item = &Word> {
        self.by_len.iter().take(room + 1).flatten()
    }
}

/// Expands `rhs` into words of length at most `max_len`, taking the
/// nonterminal at position `i` from `source(i, m)`.
fn expand<'a>(
    rhs: &[DSym],
    max_len: usize,
    min_len: &[usize],
    source: &dyn Fn(usize, usize) -> Option<&'a Bucket>,
) -> Vec<Word> {
    let sym_min = |s: &DSym| match s {
        DSym::T(_) => 1,
        DSym::N(m) => min_len[*m],
    };
    let mut partial: Vec<Word> = vec![Vec::new()];
    for (i, s) in rhs.iter().enumerate() {
        let rest: usize = rhs[i + 1..].iter().map(sym_min).fold(0, usize::saturating_add);
        let mut next = Vec::new();
        for p in &partial {
            let Some(room) = max_len.checked_sub(p.len()).and_then(|r| r.checked_sub(rest)) else {
                continue;
            };
            match s {
                DSym::T(t) if room >= 1 => {
                    let mut q = p.clone();
                    q.push(t.clone());
                    next.push(q);
                }
                DSym::T(_) => {}
                DSym::N(m) => {
                    for x in source(i, *m).into_iter().flat_map(|b| b.upto(room)) {
                        let mut q = p.clone();
                        q.extend(x.iter().cloned());
                        next.push(q);
                    }
                }
            }
        }
        partial = next;
    }
    partial
}

/// Every word with a derivation of depth at most `max_depth` and length at
/// most `max_len`, built bottom-up one depth level at a time. Within a level
/// the non-deepening productions are closed semi-naively: every round uses
/// at least one word first found in the round before.
fn truncated_language(table: &DepthTable, max_depth: usize, max_len: usize) -> HashSet<Word> {
    let k = table.nts.len();
    let mut min_len = vec![usize::MAX; k];
    loop {
        let mut changed = false;
        for (lhs, rhs, _) in &table.prods {
            let l = rhs.iter().fold(0usize, |a, s| {
                a.saturating_add(match s {
                    DSym::T(_) => 1,
                    DSym::N(m) => min_len[*m],
                })
            });
            if l < min_len[*lhs] {
                min_len[*lhs] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // levels[d][a]: words of nonterminal `a` within depth `d`
    let mut levels: Vec<Vec<Bucket>> = Vec::new();
    for d in 0..=max_depth {
        let mut cur: Vec<Bucket> = levels.last().cloned().unwrap_or_else(|| vec![Bucket::default(); k]);
        let mut delta: Vec<Bucket> = vec![Bucket::default(); k];
        // Level d-1 is already closed under the non-deepening productions,
        // so only deepening ones (and, at depth 0, terminal-only ones) seed it.
        for (lhs, rhs, cost) in &table.prods {
            let c = *cost as usize;
            if c > d || (c == 0 && d > 0) {
                continue;
            }
            let words = if c == 0 {
                expand(rhs, max_len, &min_len, &|_, _| None)
            } else {
                let lower = &levels[d - c];
                expand(rhs, max_len, &min_len, &|_, m| Some(&lower[m]))
            };
            for w in words {
                if !cur[*lhs].set.contains(&w) {
                    delta[*lhs].insert(w);
                }
            }
        }
        while delta.iter().any(|b| !b.is_empty()) {
            for (a, b) in delta.iter().enumerate() {
                for w in &b.set {
                    cur[a].insert(w.clone());
                }
            }
            let mut fresh: Vec<Bucket> = vec![Bucket::default(); k];
            for (lhs, rhs, cost) in &table.prods {
                if *cost != 0 {
                    continue;
                }
                for (i, _) in rhs.iter().enumerate().filter(|(_, s)| matches!(s, DSym::N(_))) {
                    let words = expand(rhs, max_len, &min_len, &|j, m| Some(if j == i { &delta[m] } else { &cur[m] }));
                    for w in words {
                        if !cur[*lhs].set.contains(&w) {
                            fresh[*lhs].insert(w);
                        }
                    }
                }
            }
            delta = fresh;
        }
        levels.push(cur);
    }
    levels.pop().map(|mut l| l.swap_remove(0).set).unwrap_or_default()
}

/// Every word of length at most `max_len` the grammar derives, ignoring
/// nesting depth.
pub fn grammar_words(g: &Cfg, max_len: usize) -> HashSet<Word> {
    let mut table = DepthTable::new(g);
    for p in &mut table.prods {
        p.2 = 0;
    }
    truncated_language(&table, 0, max_len)
}

/// The words of a grammar up to a length and nesting depth.
pub struct TruncatedCfgTeacher {
    pub grammar: Cfg,
    pub max_depth: usize,
    pub max_len: usize,
    parser: Parser,
    depth: DepthTable,
    weighted: WeightedCfg,
    language: OnceLock<(HashSet<Word>, Vec<Word>)>,
}

impl TruncatedCfgTeacher {
    pub fn new(grammar: Cfg, max_depth: usize, max_len: usize) -> TruncatedCfgTeacher {
        let parser = Parser::new(&grammar);
        let depth = DepthTable::new(&grammar);
        let weighted = WeightedCfg::uniform(grammar.clone());
        TruncatedCfgTeacher { grammar, max_depth, max_len, parser, depth, weighted, language: OnceLock::new() }
    }

    fn language(&self) -> &(HashSet<Word>, Vec<Word>) {
        self.language.get_or_init(|| {
            let set = truncated_language(&self.depth, self.max_depth, self.max_len);
            let mut list: Vec<Word> = set.iter().cloned().collect();
            list.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
            log::debug!("truncated language has {} words", list.len());
            (set, list)
        })
    }

    /// The accepted words, shortest first.
    pub fn words(&self) -> &[Word] {
        &self.language().1
    }

    /// Smallest derivation depth of `w`, if the grammar derives it.
    pub fn depth(&self, w: &[Token]) -> Option<usize> {
        if !self.parser.accepts(w) {
            return None;
        }
        self.depth.min_depth(w).map(|d| d as usize)
    }
}

pub fn truncated_membership(t: &TruncatedCfgTeacher, w: &[Token]) -> bool {
    w.len() <= t.max_len && t.language().0.contains(w)
}

impl Teacher for TruncatedCfgTeacher {
    fn alphabet(&self) -> Vec<Token> {
        self.grammar.terminals.iter().cloned().collect()
    }

    fn membership(&self, w: &[Token]) -> bool {
        truncated_membership(self, w)
    }

    fn may_extend(&self, prefix: &[Token]) -> bool {
        if prefix.len() > self.max_len {
            return false;
        }
        let mut c = self.parser.chart();
        prefix.iter().all(|t| c.push(t))
    }

    fn max_len(&self) -> Option<usize> {
        Some(self.max_len)
    }

    fn samples(&self, n: usize, seed: u64) -> Vec<Word> {
        sample(&self.weighted, n, self.max_len, seed, Exec::Sequential).unwrap_or_default()
    }

    fn positives(&self, max_len: usize) -> Option<Vec<Word>> {
        Some(self.words().iter().take_while(|w| w.len() <= max_len).cloned().collect())
    }
}

/// Membership flip probability for words with length in `min..=max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBand {
    pub min: usize,
    pub max: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoisePolicy {
    Flip { bands: Vec<LengthBand> },
    /// These words are accepted whatever the inner teacher says.
    Accept { words: Vec<String> },
}

/// A teacher whose answers are corrupted as a fixed function of the seed
/// and the word.
pub struct NoisyTeacher<T: Teacher> {
    pub inner: T,
    pub policy: NoisePolicy,
    pub seed: u64,
    forced: BTreeSet<Word>,
    log: Mutex<BTreeMap<Word, bool>>,
}

pub fn corrupt<T: Teacher>(inner: T, policy: NoisePolicy, seed: u64) -> Result<NoisyTeacher<T>, LearnerError> {
    let mut forced = BTreeSet::new();
    match &policy {
        NoisePolicy::Flip { bands } => {
            for b in bands {
                if !(0.0..=0.05).contains(&b.probability) {
                    return Err(LearnerError::FlipProbability(b.probability));
                }
                if b.min > b.max {
                    return Err(LearnerError::EmptyBand(b.min, b.max));
                }
            }
        }
        NoisePolicy::Accept { words } => {
            forced = words.iter().map(|w| crate::automata::parse_word(w)).collect();
        }
    }
    Ok(NoisyTeacher { inner, policy, seed, forced, log: Mutex::new(BTreeMap::new()) })
}

impl<T: Teacher> NoisyTeacher<T> {
    fn unit(&self, w: &[Token]) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for t in w {
            h.update(t.as_str().as_bytes());
            h.update([0]);
        }
        let d = h.finalize();
        let x = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        (x >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Words answered differently from the inner teacher so far, with the
    /// answer given.
    pub fn corruption_log(&self) -> BTreeMap<Word, bool> {
        self.log.lock().expect("log lock").clone()
    }
}

impl<T: Teacher> Teacher for NoisyTeacher<T> {
    fn alphabet(&self) -> Vec<Token> {
        let mut a: BTreeSet<Token> = self.inner.alphabet().into_iter().collect();
        a.extend(self.forced.iter().flatten().cloned());
        a.into_iter().collect()
    }

    fn membership(&self, w: &[Token]) -> bool {
        let truth = self.inner.membership(w);
        let answer = match &self.policy {
            NoisePolicy::Accept { .. } => truth || self.forced.contains(w),
            NoisePolicy::Flip { bands } => {
                let p = bands.iter().find(|b| (b.min..=b.max).contains(&w.len())).map_or(0.0, |b| b.probability);
                if p > 0.0 && self.unit(w) < p {
                    !truth
                } else {
                    truth
                }
            }
        };
        if answer != truth {
            self.log.lock().expect("log lock").insert(w.to_vec(), answer);
        }
        answer
    }

    fn may_extend(&self, prefix: &[Token]) -> bool {
        self.inner.may_extend(prefix) || self.forced.iter().any(|w| w.starts_with(prefix))
    }

    fn max_len(&self) -> Option<usize> {
        let forced = self.forced.iter().map(Vec::len).max().unwrap_or(0);
        self.inner.max_len().map(|m| m.max(forced))
    }

    fn positives(&self, max_len: usize) -> Option<Vec<Word>> {
        let mut out: Vec<Word> = self.inner.positives(max_len)?.into_iter().filter(|w| self.membership(w)).collect();
        out.extend(self.forced.iter().filter(|w| w.len() <= max_len).cloned());
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out.dedup();
        Some(out)
    }

    fn samples(&self, n: usize, seed: u64) -> Vec<Word> {
        let mut s = self.inner.samples(n, seed);
        s.extend(self.forced.iter().cloned());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    /// All words up to this length (capped by the teacher's own bound) are
    /// compared.
    pub exhaustive_len: usize,
    pub samples: usize,
    pub seed: u64,
    /// Return the shortest disagreement. When off, sampled words are tried
    /// first and the longest disagreement among them is returned.
    pub shortest_first: bool,
    /// Cap on prefixes visited by the exhaustive phase.
    pub budget: usize,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig { exhaustive_len: 10, samples: 2000, seed: 0, shortest_first: true, budget: 2_000_000 }
    }
}

fn shortest_lex(a: Option<Word>, b: Option<Word>) -> Option<Word> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if (y.len(), &y) < (x.len(), &x) { y } else { x }),
        (x, y) => x.or(y),
    }
}

/// Breadth-first walk over prefixes in token order. A prefix is expanded
/// while the hypothesis can still accept within the bound, or, when
/// `teacher_side` is set, while the teacher may extend it. Returns the
/// first word on which the two disagree.
fn layered_search<T: Teacher + ?Sized>(t: &T, h: &Dfa, bound: usize, budget: usize, teacher_side: bool) -> Option<Word> {
    let sigma = t.alphabet();
    let dist: HashMap<StateId, usize> = h.distance_to_accept();
    let mut layer: Vec<(Word, Option<StateId>)> = vec![(Vec::new(), Some(h.initial()))];
    let mut visited = 0usize;
    for k in 0..=bound {
        for (w, q) in &layer {
            let hy = q.is_some_and(|q| h.is_accepting(q));
            if (hy || teacher_side) && hy != t.membership(w) {
                return Some(w.clone());
            }
        }
        if k == bound {
            break;
        }
        let remaining = bound - k - 1;
        let mut next = Vec::new();
        for (w, q) in &layer {
            for a in &sigma {
                let q2 = q.and_then(|q| h.next(q, a));
                let h_live = q2.is_some_and(|q2| dist.get(&q2).is_some_and(|d| *d <= remaining));
                let mut w2 = w.clone();
                w2.push(a.clone());
                if h_live || (teacher_side && t.may_extend(&w2)) {
                    next.push((w2, q2));
                }
            }
        }
        visited += next.len();
        if visited > budget {
            log::debug!("exhaustive comparison stopped after {visited} prefixes at length {}", k + 1);
            return None;
        }
        layer = next;
    }
    None
}

fn exhaustive_disagreement<T: Teacher + ?Sized>(t: &T, h: &Dfa, bound: usize, budget: usize) -> Option<Word> {
    match t.positives(bound) {
        Some(pos) => {
            let missed = pos.into_iter().find(|w| !h.accepts(w));
            shortest_lex(layered_search(t, h, bound, budget, false), missed)
        }
        None => layered_search(t, h, bound, budget, true),
    }
}

/// Compares a hypothesis with the teacher on every word up to the
/// exhaustive bound, then on sampled words.
pub fn equivalence_by_sampling_and_enumeration<T: Teacher + ?Sized>(
    t: &T,
    h: &Dfa,
    cfg: &EquivalenceConfig,
) -> Option<Word> {
    let bound = t.max_len().map_or(cfg.exhaustive_len, |m| m.min(cfg.exhaustive_len));
    let mut sampled = t.samples(cfg.samples, cfg.seed);
    sampled.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    sampled.dedup();
    let wrong = |w: &Word| h.accepts(w) != t.membership(w);
    if cfg.shortest_first {
        exhaustive_disagreement(t, h, bound, cfg.budget).or_else(|| sampled.into_iter().find(wrong))
    } else {
        sampled.into_iter().rev().find(wrong).or_else(|| exhaustive_disagreement(t, h, bound, cfg.budget))
    }
}

/// Rows indexed by prefix, columns by suffix. Prefixes are prefix-closed
/// and pairwise distinct; suffixes are suffix-closed.
#[derive(Debug, Clone)]
pub struct ObservationTable {
    pub alphabet: Vec<Token>,
    pub prefixes: Vec<Word>,
    pub suffixes: Vec<Word>,
    entries: HashMap<Word, bool>,
    pub queries: usize,
}

impl ObservationTable {
    pub fn new(alphabet: Vec<Token>) -> ObservationTable {
        ObservationTable {
            alphabet,
            prefixes: vec![Vec::new()],
            suffixes: vec![Vec::new()],
            entries: HashMap::new(),
            queries: 0,
        }
    }

    fn ask<T: Teacher + ?Sized>(&mut self, t: &T, w: Word) -> bool {
        if let Some(&b) = self.entries.get(&w) {
            return b;
        }
        self.queries += 1;
        let b = t.membership(&w);
        self.entries.insert(w, b);
        b
    }

    pub fn row<T: Teacher + ?Sized>(&mut self, t: &T, u: &[Token]) -> Vec<bool> {
        let suffixes = self.suffixes.clone();
        suffixes
            .iter()
            .map(|e| {
                let mut w = u.to_vec();
                w.extend(e.iter().cloned());
                self.ask(t, w)
            })
            .collect()
    }

    /// An extension `u·a` whose row matches no prefix row.
    pub fn find_unclosed<T: Teacher + ?Sized>(&mut self, t: &T) -> Option<Word> {
        let prefixes = self.prefixes.clone();
        let rows: BTreeSet<Vec<bool>> = prefixes.iter().map(|u| self.row(t, u)).collect();
        for u in &prefixes {
            for a in self.alphabet.clone() {
                let mut ua = u.clone();
                ua.push(a);
                if !rows.contains(&self.row(t, &ua)) {
                    return Some(ua);
                }
            }
        }
        None
    }

    pub fn close<T: Teacher + ?Sized>(&mut self, t: &T) {
        while let Some(ua) = self.find_unclosed(t) {
            self.prefixes.push(ua);
        }
    }

    /// Whether equal prefix rows stay equal after every one-token extension.
    pub fn is_consistent<T: Teacher + ?Sized>(&mut self, t: &T) -> bool {
        let prefixes = self.prefixes.clone();
        for (i, u) in prefixes.iter().enumerate() {
            for v in &prefixes[i + 1..] {
                if self.row(t, u) != self.row(t, v) {
                    continue;
                }
                for a in self.alphabet.clone() {
                    let (mut ua, mut va) = (u.clone(), v.clone());
                    ua.push(a.clone());
                    va.push(a);
                    if self.row(t, &ua) != self.row(t, &va) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn add_counterexample(&mut self, w: &[Token]) {
        for i in 0..=w.len() {
            let s = w[i..].to_vec();
            if !self.suffixes.contains(&s) {
                self.suffixes.push(s);
            }
        }
    }

    /// The automaton of a closed table, minimized and without the reject
    /// sink.
    pub fn hypothesis<T: Teacher + ?Sized>(&mut self, t: &T) -> Dfa {
        let prefixes = self.prefixes.clone();
        let rows: Vec<Vec<bool>> = prefixes.iter().map(|u| self.row(t, u)).collect();
        let state_of = |r: &Vec<bool>| StateId(rows.iter().position(|x| x == r).expect("closed table") as u64);
        let mut transitions = Vec::new();
        for (i, u) in prefixes.iter().enumerate() {
            for a in self.alphabet.clone() {
                let mut ua = u.clone();
                ua.push(a.clone());
                let r = self.row(t, &ua);
                transitions.push((StateId(i as u64), a, state_of(&r)));
            }
        }
        let accepting: Vec<StateId> = (0..prefixes.len()).filter(|&i| rows[i][0]).map(|i| StateId(i as u64)).collect();
        let states: Vec<StateId> = (0..prefixes.len()).map(|i| StateId(i as u64)).collect();
        Dfa::new(self.alphabet.iter().cloned(), states, StateId(0), accepting, transitions)
            .expect("table automaton is deterministic")
            .minimize()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LStarConfig {
    pub max_iters: usize,
    #[serde(with = "millis")]
    pub time_budget: Duration,
    pub equivalence: EquivalenceConfig,
}

impl Default for LStarConfig {
    fn default() -> Self {
        LStarConfig { max_iters: 200, time_budget: Duration::from_secs(600), equivalence: EquivalenceConfig::default() }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Equivalent,
    MaxIters,
    TimeBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionMeta {
    pub stop: StopReason,
    pub membership_queries: usize,
    pub equivalence_queries: usize,
    /// Counterexamples in the order they were returned.
    pub counterexamples: Vec<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub hypotheses: Vec<Dfa>,
    pub meta: ExtractionMeta,
}

/// Runs L* and returns every hypothesis, first to last.
pub fn lstar_extract<T: Teacher>(t: &T, cfg: &LStarConfig) -> Result<Extraction, LearnerError> {
    if cfg.max_iters == 0 {
        return Err(LearnerError::NoIterations);
    }
    let start = Instant::now();
    let mut table = ObservationTable::new(t.alphabet());
    let mut hypotheses: Vec<Dfa> = Vec::new();
    let mut cexs: Vec<Word> = Vec::new();
    let mut equivalence_queries = 0;
    let stop = loop {
        table.close(t);
        let mut h = table.hypothesis(t);
        // A counterexample can survive one refinement; keep adding its
        // prefixes as rows until the hypothesis agrees with it.
        while let Some(w) = cexs.iter().find(|w| h.accepts(w) != t.membership(w)).cloned() {
            for i in 1..=w.len() {
                if !table.prefixes.contains(&w[..i].to_vec()) {
                    table.prefixes.push(w[..i].to_vec());
                }
            }
            table.close(t);
            h = table.hypothesis(t);
        }
        log::debug!("hypothesis {} with {} states", hypotheses.len() + 1, h.num_states());
        hypotheses.push(h.clone());
        if hypotheses.len() >= cfg.max_iters {
            break StopReason::MaxIters;
        }
        if start.elapsed() > cfg.time_budget {
            break StopReason::TimeBudget;
        }
        equivalence_queries += 1;
        match t.equivalence(&h, &cfg.equivalence) {
            None => break StopReason::Equivalent,
            Some(w) => {
                log::debug!("counterexample {}", format_word(&w));
                table.add_counterexample(&w);
                cexs.push(w);
            }
        }
    };
    Ok(Extraction {
        hypotheses,
        meta: ExtractionMeta {
            stop,
            membership_queries: table.queries,
            equivalence_queries,
            counterexamples: cexs.iter().map(|w| format_word(w)).collect(),
            elapsed_ms: start.elapsed().as_millis() as u64,
        },
    })
}

/// Marks bracket productions as depth-counting: those of the form
/// `x … y` with terminals `x`, `y` where the same left-hand side also has
/// a production `x … N … y` wrapping a nonterminal.
pub fn mark_bracket_depth(g: &Cfg) -> Cfg {
    let ends = |p: &crate::cfg::Production| match (p.rhs.first(), p.rhs.last()) {
        (Some(Symbol::T(x)), Some(Symbol::T(y))) if p.rhs.len() >= 2 => Some((x.clone(), y.clone())),
        _ => None,
    };
    let wrappers: BTreeSet<(String, Token, Token)> = g
        .productions()
        .iter()
        .filter(|p| p.rhs.iter().any(|s| s.as_nonterminal().is_some()))
        .filter_map(|p| ends(p).map(|(x, y)| (p.lhs.clone(), x, y)))
        .collect();
    g.with_productions(g.productions().iter().map(|p| {
        let deepens = ends(p).is_some_and(|(x, y)| wrappers.contains(&(p.lhs.clone(), x, y)));
        crate::cfg::Production { deepens, ..p.clone() }
    }))
}

/// Every word the teacher accepts up to `max_len`, shortest first.
pub fn teacher_language<T: Teacher + ?Sized>(t: &T, max_len: usize) -> Vec<Word> {
    let sigma = t.alphabet();
    let mut out = Vec::new();
    let mut queue = VecDeque::from([Vec::new()]);
    while let Some(w) = queue.pop_front() {
        if t.membership(&w) {
            out.push(w.clone());
        }
        if w.len() == max_len {
            continue;
        }
        for a in &sigma {
            let mut w2 = w.clone();
            w2.push(a.clone());
            if t.may_extend(&w2) {
                queue.push_back(w2);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anbn() -> Cfg {
        Cfg::parse_text("S ::= a S b | a b").unwrap()
    }

    fn dyck1() -> Cfg {
        mark_bracket_depth(&Cfg::parse_text("S ::= S S | ( S ) | ( )").unwrap())
    }

    fn w(s: &str) -> Word {
        Token::chars(s)
    }

    #[test]
    fn truncation() {
        let t = TruncatedCfgTeacher::new(dyck1(), 2, 8);
        assert!(t.membership(&w("(())")));
        assert!(t.membership(&w("()()()()")));
        assert!(!t.membership(&w("((()))")));
        assert!(!t.membership(&w("()()()()()")));
        assert!(!t.membership(&w("(x)")));
        let t = TruncatedCfgTeacher::new(anbn(), 3, 6);
        assert!(!t.membership(&w("aaaabbbb")));
        assert_eq!(t.depth(&w("aaabbb")), Some(3));
    }

    #[test]
    fn depth_takes_the_shallowest_derivation() {
        let g = mark_bracket_depth(&Cfg::parse_text("S ::= ( S ) | ( T ) | x\nT ::= ( ( x ) )").unwrap());
        let t = TruncatedCfgTeacher::new(g, 5, 20);
        // `T ::= ( ( x ) )` wraps no nonterminal, so it does not count.
        assert_eq!(t.depth(&w("(((x)))")), Some(1));
        assert_eq!(t.depth(&w("((x))")), Some(2));
        let e = Cfg::parse_text("S ::= A S | ε\nA ::= a").unwrap();
        let t = TruncatedCfgTeacher::new(e, 10, 10);
        assert_eq!(t.depth(&[]), Some(1));
        assert_eq!(t.depth(&w("aa")), Some(3));
    }

    #[test]
    fn generated_language_matches_depth_oracle() {
        let grammars = [
            dyck1(),
            anbn(),
            mark_bracket_depth(&Cfg::parse_text("S ::= S S | ( S ) | [ S ] | ( ) | [ ] | a").unwrap()),
            Cfg::parse_text("S ::= X S Y | X Y\nX ::= a | b c\nY ::= d | ε").unwrap(),
        ];
        for g in grammars {
            let t = TruncatedCfgTeacher::new(g.clone(), 3, 8);
            let listed: BTreeSet<Word> = t.words().iter().cloned().collect();
            let sigma: Vec<Token> = g.terminals.iter().cloned().collect();
            let mut all = vec![Vec::new()];
            let mut layer = vec![Vec::new()];
            for _ in 0..8 {
                layer = layer
                    .iter()
                    .flat_map(|p: &Word| sigma.iter().map(move |a| [p.clone(), vec![a.clone()]].concat()))
                    .filter(|p| t.may_extend(p))
                    .collect();
                all.extend(layer.iter().cloned());
            }
            let by_depth: BTreeSet<Word> = all.into_iter().filter(|x| t.depth(x).is_some_and(|d| d <= 3)).collect();
            assert_eq!(listed, by_depth, "{g}");
        }
    }

    #[test]
    fn anbn_final_hypothesis_is_the_truncated_set() {
        let t = TruncatedCfgTeacher::new(anbn(), 3, 6);
        let x = lstar_extract(&t, &LStarConfig::default()).unwrap();
        assert_eq!(x.meta.stop, StopReason::Equivalent);
        let last = x.hypotheses.last().unwrap();
        let got = last.enumerate_language(6).unwrap();
        let want: BTreeSet<Word> = ["ab", "aabb", "aaabbb"].iter().map(|s| w(s)).collect();
        assert_eq!(got, want);
        assert!(x.hypotheses[0].is_empty_language());
    }

    #[test]
    fn empty_language_gives_one_hypothesis() {
        let t = TruncatedCfgTeacher::new(anbn(), 0, 6);
        let x = lstar_extract(&t, &LStarConfig::default()).unwrap();
        assert_eq!(x.hypotheses.len(), 1);
        assert!(x.hypotheses[0].is_empty_language());
    }

    #[test]
    fn shortest_counterexample_first() {
        let t = TruncatedCfgTeacher::new(anbn(), 3, 6);
        let h = Dfa::new(
            [Token::new("a"), Token::new("b")],
            [],
            StateId(0),
            [StateId(2)],
            [(StateId(0), Token::new("a"), StateId(1)), (StateId(1), Token::new("b"), StateId(2))],
        )
        .unwrap();
        assert_eq!(equivalence_by_sampling_and_enumeration(&t, &h, &EquivalenceConfig::default()), Some(w("aabb")));
    }

    #[test]
    fn flip_noise_is_deterministic_and_logged() {
        let policy = NoisePolicy::Flip { bands: vec![LengthBand { min: 0, max: 8, probability: 0.05 }] };
        let a = corrupt(TruncatedCfgTeacher::new(dyck1(), 2, 8), policy.clone(), 3).unwrap();
        let b = corrupt(TruncatedCfgTeacher::new(dyck1(), 2, 8), policy, 3).unwrap();
        let words = teacher_language(&TruncatedCfgTeacher::new(dyck1(), 2, 8), 8);
        for x in &words {
            assert_eq!(a.membership(x), b.membership(x));
        }
        assert_eq!(a.corruption_log(), b.corruption_log());
        let bad = NoisePolicy::Flip { bands: vec![LengthBand { min: 0, max: 8, probability: 0.2 }] };
        assert!(corrupt(TruncatedCfgTeacher::new(dyck1(), 2, 8), bad, 0).is_err());
        let zero = NoisePolicy::Flip { bands: vec![LengthBand { min: 0, max: 8, probability: 0.0 }] };
        let z = corrupt(TruncatedCfgTeacher::new(dyck1(), 2, 8), zero, 0).unwrap();
        assert!(words.iter().all(|x| z.membership(x)));
    }

    #[test]
    fn table_is_closed_and_consistent_after_extraction_round() {
        let t = TruncatedCfgTeacher::new(dyck1(), 2, 8);
        let mut table = ObservationTable::new(t.alphabet());
        table.add_counterexample(&w("(())"));
        table.close(&t);
        assert!(table.find_unclosed(&t).is_none());
        assert!(table.is_consistent(&t));
        let h = table.hypothesis(&t);
        assert!(h.accepts(&w("(())")));
    }
}
