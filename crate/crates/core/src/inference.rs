//! Recovering a rule set from a sequence of automata.
//!
//! Each consecutive pair is split into existing and new parts; every
//! pattern head yields one new pattern, which is attributed to the enabled
//! instance whose join state it was grafted at. Enabled instances are not
//! carried by the sequence, so they are replayed on a shadow list that is
//! moved along the parallel-state maps.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::automata::{parallel_state_map, Dfa, StateId, Transition};
use crate::patterns::{compose, find_instance, CompositionOp, Pattern, PatternId, PatternPair, PlacedPattern};
use crate::prs::{Prs, PrsRule};

pub const DEFAULT_THRESHOLD: usize = 2;

/// New states and transitions reachable from one pattern head without
/// passing through existing transitions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Relevant {
    pub states: BTreeSet<StateId>,
    pub transitions: BTreeSet<Transition>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaDecomposition {
    /// Existing state of the later automaton to its parallel state in the
    /// earlier one.
    pub parallel: BTreeMap<StateId, StateId>,
    pub new_states: BTreeSet<StateId>,
    pub new_transitions: BTreeSet<Transition>,
    /// Existing states with outgoing new transitions.
    pub heads: BTreeSet<StateId>,
    pub relevant: BTreeMap<StateId, Relevant>,
    /// States of the later automaton reached alongside two different
    /// earlier states.
    pub conflicts: usize,
}

impl DeltaDecomposition {
    pub fn is_empty(&self) -> bool {
        self.new_states.is_empty() && self.new_transitions.is_empty()
    }

    /// Heads whose relevant new states meet another head's.
    pub fn overlapping_heads(&self) -> BTreeSet<StateId> {
        let mut out = BTreeSet::new();
        let heads: Vec<&StateId> = self.heads.iter().collect();
        for (i, a) in heads.iter().enumerate() {
            for b in &heads[i + 1..] {
                if !self.relevant[a].states.is_disjoint(&self.relevant[b].states) {
                    out.insert(**a);
                    out.insert(**b);
                }
            }
        }
        out
    }
}

pub fn decompose_delta(prev: &Dfa, next: &Dfa) -> DeltaDecomposition {
    let (parallel, conflicts) = parallel_state_map(prev, next);
    let new_states: BTreeSet<StateId> = next.states().iter().filter(|q| !parallel.contains_key(q)).copied().collect();
    let new_transitions: BTreeSet<Transition> = next
        .transitions()
        .filter(|(s, t, r)| match (parallel.get(s), parallel.get(r)) {
            (Some(&ps), Some(&pr)) => prev.next(ps, t) != Some(pr),
            _ => true,
        })
        .collect();
    let heads: BTreeSet<StateId> =
        new_transitions.iter().map(|(s, _, _)| *s).filter(|s| parallel.contains_key(s)).collect();
    let mut relevant = BTreeMap::new();
    for &h in &heads {
        let mut rel = Relevant::default();
        let mut queue = VecDeque::from([h]);
        while let Some(q) = queue.pop_front() {
            for tr in new_transitions.iter().filter(|tr| tr.0 == q) {
                rel.transitions.insert(tr.clone());
                if new_states.contains(&tr.2) && rel.states.insert(tr.2) {
                    queue.push_back(tr.2);
                }
            }
        }
        relevant.insert(h, rel);
    }
    DeltaDecomposition { parallel, new_states, new_transitions, heads, relevant, conflicts }
}

/// How an exit state was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitCase {
    /// The head has incoming new transitions.
    Circular,
    /// A new state whose transitions copy the head's.
    Connecting,
    /// An existing state with new incoming and no new outgoing transitions.
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExitState {
    pub exit: StateId,
    pub case: ExitCase,
}

impl ExitState {
    pub fn is_circular(&self) -> bool {
        self.case == ExitCase::Circular
    }
}

/// Why a step or head could not be turned into a rule.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Unresolved {
    #[error("no exit state for head {0}")]
    NoExit(StateId),
    #[error("head {head} has several exit candidates {candidates:?}")]
    AmbiguousExit { head: StateId, candidates: Vec<StateId> },
    #[error("new transitions from head {head} reach existing state {state}")]
    StrayTransition { head: StateId, state: StateId },
    #[error("new states of head {0} overlap another head's")]
    OverlappingHeads(StateId),
    #[error("not a pattern: {0}")]
    InvalidPattern(String),
    #[error("no enabled instance owns state {0}")]
    NoHost(StateId),
    #[error("several enabled instances could own state {0}")]
    AmbiguousHost(StateId),
    #[error("pattern {pattern} does not split at {state}: {reason}")]
    NoSplit { pattern: PatternId, state: StateId, reason: String },
    #[error("rule rejected: {0}")]
    RuleRejected(String),
}

/// The three-case exit search for the pattern starting at `head`.
pub fn discover_exit_state(dd: &DeltaDecomposition, head: StateId, next: &Dfa) -> Result<ExitState, Unresolved> {
    let rel = dd.relevant.get(&head).ok_or(Unresolved::NoExit(head))?;
    if rel.transitions.iter().any(|(_, _, r)| *r == head) {
        return Ok(ExitState { exit: head, case: ExitCase::Circular });
    }
    let connecting: Vec<StateId> = rel
        .states
        .iter()
        .copied()
        .filter(|&x| {
            let out: Vec<_> = next.outgoing(x).collect();
            !out.is_empty()
                && out.iter().all(|(t, r)| !dd.new_states.contains(r) && next.next(head, t) == Some(*r))
        })
        .collect();
    match connecting.as_slice() {
        [x] => return Ok(ExitState { exit: *x, case: ExitCase::Connecting }),
        [] => {}
        _ => return Err(Unresolved::AmbiguousExit { head, candidates: connecting }),
    }
    let has_new_out: BTreeSet<StateId> = dd.new_transitions.iter().map(|(s, _, _)| *s).collect();
    let merged: BTreeSet<StateId> = rel
        .transitions
        .iter()
        .map(|(_, _, r)| *r)
        .filter(|r| *r != head && !dd.new_states.contains(r) && !has_new_out.contains(r))
        .collect();
    match merged.len() {
        1 => Ok(ExitState { exit: *merged.iter().next().expect("one"), case: ExitCase::Merged }),
        0 => Err(Unresolved::NoExit(head)),
        _ => Err(Unresolved::AmbiguousExit { head, candidates: merged.into_iter().collect() }),
    }
}

/// A pattern found in the later automaton of a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewPattern {
    pub pattern: Pattern,
    pub head: StateId,
    pub exit: ExitState,
    /// The pattern's transitions in the later automaton's states.
    pub transitions: BTreeSet<Transition>,
}

pub fn extract_new_pattern(
    dd: &DeltaDecomposition,
    head: StateId,
    exit: ExitState,
    next: &Dfa,
) -> Result<NewPattern, Unresolved> {
    let _ = next;
    let rel = dd.relevant.get(&head).ok_or(Unresolved::NoExit(head))?;
    let transitions: BTreeSet<Transition> = rel
        .transitions
        .iter()
        .filter(|(s, _, _)| !(exit.case == ExitCase::Connecting && *s == exit.exit))
        .cloned()
        .collect();
    for (_, _, r) in &transitions {
        if !dd.new_states.contains(r) && *r != head && *r != exit.exit {
            return Err(Unresolved::StrayTransition { head, state: *r });
        }
    }
    let pattern = Pattern::new(head, exit.exit, transitions.iter().cloned())
        .map_err(|e| Unresolved::InvalidPattern(e.to_string()))?;
    Ok(NewPattern { pattern, head, exit, transitions })
}

fn reach(d: &Dfa, from: StateId, expand: impl Fn(StateId) -> bool) -> BTreeSet<StateId> {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(q) = queue.pop_front() {
        if q != from && !expand(q) {
            continue;
        }
        for (_, r) in d.outgoing(q) {
            if seen.insert(r) {
                queue.push_back(r);
            }
        }
    }
    seen
}

/// Splits `p` at its canonical state `k` into two operands whose
/// composition (serial, or circular when `p` is circular) is `p` with join
/// `k`.
pub fn split_pattern(p: &Pattern, k: StateId) -> Result<(Pattern, CompositionOp, Pattern), String> {
    let d = p.dfa();
    let (init, exit) = (p.initial(), p.exit());
    if k == init || k == exit || !d.contains_state(k) {
        return Err("not an interior state".into());
    }
    let left_states = reach(d, init, |q| q != k && q != exit);
    let right_states = reach(d, k, |q| q != exit);
    let left: BTreeSet<Transition> =
        d.transitions().filter(|(s, _, _)| left_states.contains(s) && *s != k && (*s != exit || *s == init)).collect();
    let right: BTreeSet<Transition> =
        d.transitions().filter(|(s, _, _)| right_states.contains(s) && *s != exit).collect();
    if !left.is_disjoint(&right) || left.len() + right.len() != d.num_transitions() {
        return Err("the two sides share transitions".into());
    }
    let mut shared: BTreeSet<StateId> = left_states.intersection(&right_states).copied().collect();
    shared.remove(&k);
    if p.is_circular() {
        shared.remove(&init);
    }
    if let Some(q) = shared.iter().next() {
        return Err(format!("state {q} lies on both sides"));
    }
    let op = if p.is_circular() { CompositionOp::Circular } else { CompositionOp::Serial };
    let lp = Pattern::new(init, k, left).map_err(|e| format!("left operand: {e}"))?;
    let rp = Pattern::new(k, exit, right).map_err(|e| format!("right operand: {e}"))?;
    let c = compose(&lp, op, &rp).map_err(|e| e.to_string())?;
    if c.pattern.id() != p.id() || c.join != k {
        return Err("operands do not recompose to the pattern".into());
    }
    Ok((lp, op, rp))
}

/// Removes the cycle through interior state `k` of `p`. Returns the
/// reduced pattern, the canonical index of `k` in it, and the cycle as a
/// circular pattern. `None` when `k` is on no cycle or the cycle's states
/// have other transitions.
pub fn split_simultaneous_cycle(p: &Pattern, k: StateId) -> Option<(Pattern, StateId, Pattern)> {
    let d = p.dfa();
    let (init, exit) = (p.initial(), p.exit());
    if k == init || k == exit {
        return None;
    }
    let blocked = |q: StateId| q == init || q == exit;
    let fwd = reach(d, k, |q| !blocked(q));
    let mut bwd = BTreeSet::from([k]);
    let mut queue = VecDeque::from([k]);
    while let Some(q) = queue.pop_front() {
        for (s, _) in d.incoming(q) {
            if !blocked(s) && bwd.insert(s) {
                queue.push_back(s);
            }
        }
    }
    let cycle_states: BTreeSet<StateId> = fwd.intersection(&bwd).copied().filter(|q| !blocked(*q)).collect();
    let cycle: BTreeSet<Transition> =
        d.transitions().filter(|(s, _, r)| cycle_states.contains(s) && cycle_states.contains(r)).collect();
    if cycle.is_empty() {
        return None;
    }
    let inner_touches_rest = d.transitions().any(|tr| {
        !cycle.contains(&tr) && ((tr.0 != k && cycle_states.contains(&tr.0)) || (tr.2 != k && cycle_states.contains(&tr.2)))
    });
    if inner_touches_rest {
        return None;
    }
    let rest: Vec<Transition> = d.transitions().filter(|tr| !cycle.contains(tr)).collect();
    let placed = PlacedPattern::new(init, exit, rest).ok()?;
    if !placed.states().contains(&k) {
        return None;
    }
    let reduced = Pattern::from_placed(&placed).ok()?;
    let order = placed.dfa.bfs_order();
    let k2 = StateId(order.iter().position(|&q| q == k)? as u64);
    let c = Pattern::new(k, k, cycle).ok()?;
    Some((reduced, k2, c))
}

/// When the initial state is equivalent to an accepting state except for
/// accepting the empty word, returns the automaton with the empty word
/// added. Languages like `L+` for a circular `L` become `L*`.
pub fn normalize_epsilon(d: &Dfa) -> Dfa {
    if d.is_accepting(d.initial()) || d.accepting().is_empty() {
        return d.clone();
    }
    let base = d.minimize();
    let mut e = d.clone();
    e.set_accepting(d.initial(), true);
    let m = e.minimize();
    if m.num_states() < base.num_states() {
        m
    } else {
        d.clone()
    }
}

/// Reads an automaton with one accepting state as patterns sharing its
/// initial state: one per connected part of the automaton once the
/// initial and accepting states are removed, plus the transitions between
/// those two directly. Falls back to the whole automaton as one pattern.
pub fn start_patterns(d: &Dfa) -> Result<Vec<Pattern>, String> {
    let acc: Vec<StateId> = d.accepting().iter().copied().collect();
    let [f] = acc.as_slice() else { return Err(format!("{} accepting states", acc.len())) };
    let (q0, f) = (d.initial(), *f);
    let edge = |q: StateId| q == q0 || q == f;
    let mut comp: BTreeMap<StateId, usize> = BTreeMap::new();
    for &q in d.states().iter().filter(|q| !edge(**q)) {
        if comp.contains_key(&q) {
            continue;
        }
        let k = comp.values().max().map_or(0, |m| m + 1);
        let mut stack = vec![q];
        comp.insert(q, k);
        while let Some(x) = stack.pop() {
            let out = d.outgoing(x).map(|(_, r)| r);
            let inc = d.incoming(x).into_iter().map(|(s, _)| s);
            for y in out.chain(inc).collect::<Vec<_>>() {
                if !edge(y) && !comp.contains_key(&y) {
                    comp.insert(y, k);
                    stack.push(y);
                }
            }
        }
    }
    let mut parts: BTreeMap<usize, Vec<Transition>> = BTreeMap::new();
    for tr in d.transitions() {
        let key = comp.get(&tr.0).or_else(|| comp.get(&tr.2)).map_or(usize::MAX, |k| *k);
        parts.entry(key).or_default().push(tr);
    }
    let split: Result<Vec<Pattern>, _> = parts.into_values().map(|ts| Pattern::new(q0, f, ts)).collect();
    match split {
        Ok(ps) => Ok(ps),
        Err(_) => Pattern::new(q0, f, d.transitions()).map(|p| vec![p]).map_err(|e| e.to_string()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTable {
    pub votes: BTreeMap<PatternId, usize>,
    pub threshold: usize,
}

impl VoteTable {
    pub fn get(&self, id: &PatternId) -> usize {
        self.votes.get(id).copied().unwrap_or(0)
    }

    pub fn is_valid(&self, id: &PatternId) -> bool {
        self.get(id) >= self.threshold
    }

    /// Patterns at or above the threshold.
    pub fn valid(&self) -> impl Iterator<Item = (&PatternId, usize)> {
        self.votes.iter().filter(|(_, &v)| v >= self.threshold).map(|(k, &v)| (k, v))
    }
}

/// What happened at one automaton of the sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StepEvent {
    /// The automaton was read as one or more patterns at the initial
    /// state.
    Initial { patterns: Vec<PatternId> },
    /// No initial pattern could be read; inference waits for a later one.
    NoInitial { reason: String },
    Unchanged,
    Rule { rule: PrsRule, text: String, new: bool },
    /// A valid pattern was added at the initial state.
    StartInstance { pattern: PatternId },
    SkippedNoise { pattern: PatternId, votes: usize },
    HostNotValid { pattern: PatternId, host: PatternId },
    CycleSplit { original: PatternId, reduced: PatternId, cycle: PatternId },
    /// Two consecutive steps added the two halves of one pattern with a
    /// shared head and exit.
    AlternationSplit { first: PatternId, second: PatternId, joined: PatternId },
    Unresolved { head: Option<StateId>, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTrace {
    /// Index of the automaton in the sequence; entries after the first
    /// describe the pair ending there.
    pub index: usize,
    pub events: Vec<StepEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub prs: Option<Prs>,
    /// Why no rule set could be assembled.
    pub error: Option<String>,
    pub trace: Vec<StepTrace>,
    pub votes: VoteTable,
    /// Indices of automata with an unresolved head.
    pub unresolved: Vec<usize>,
    /// Gaps in start-rule recovery.
    pub start_gaps: Vec<String>,
    /// Patterns found whole and later split into a reduced pattern and a cycle.
    #[serde(default)]
    pub rewrites: BTreeMap<PatternId, (PatternId, PatternId)>,
}

impl InferenceReport {
    /// Distinct patterns inserted anywhere, before thresholding.
    pub fn patterns_found(&self) -> usize {
        self.votes.votes.len()
    }

    /// Patterns grafted by the final rule set that received votes, either
    /// directly or through a pattern that a cycle split rewrote into them.
    pub fn final_patterns(&self) -> Vec<(PatternId, usize)> {
        let Some(prs) = &self.prs else { return Vec::new() };
        let grafted: BTreeSet<&PatternId> = prs.rules.iter().map(|r| r.grafted()).collect();
        grafted
            .into_iter()
            .map(|id| {
                let inherited: usize = self
                    .rewrites
                    .iter()
                    .filter(|(_, (r, c))| r == id || c == id)
                    .map(|(orig, _)| self.votes.get(orig))
                    .sum();
                (id.clone(), self.votes.get(id) + inherited)
            })
            .filter(|(_, v)| *v > 0)
            .collect()
    }

    pub fn min_max_votes(&self) -> Option<(usize, usize)> {
        let f = self.final_patterns();
        Some((f.iter().map(|x| x.1).min()?, f.iter().map(|x| x.1).max()?))
    }

    pub fn events(&self) -> impl Iterator<Item = &StepEvent> {
        self.trace.iter().flat_map(|t| t.events.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Origin {
    Operand,
    Graft,
    Start,
}

#[derive(Debug, Clone)]
struct Shadow {
    pattern: PatternId,
    initial: StateId,
    join: Option<StateId>,
    origin: Origin,
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    Prev(StateId),
    Next(StateId),
}

type HeadResult = (StateId, Result<NewPattern, Unresolved>);

struct Inferrer {
    votes: VoteTable,
    extra_valid: BTreeSet<PatternId>,
    pair: PatternPair,
    rules: Vec<PrsRule>,
    /// Pattern found whole, to its reduced form and cycle.
    rewrites: BTreeMap<PatternId, (PatternId, PatternId)>,
    /// Reduced pattern to the cycle grafted at its join.
    cycles: BTreeMap<PatternId, PatternId>,
    shadow: Vec<Shadow>,
    trace: Vec<StepTrace>,
    last_new: Vec<NewPattern>,
}

pub fn infer(seq: &[Dfa], threshold: usize) -> InferenceReport {
    let seq: Vec<Dfa> = seq.iter().map(normalize_epsilon).collect();
    let first = stable_start(&seq);
    let fresh = |i: usize| i == first || (i > first && starts_fresh(&seq[i - 1]));
    let found: Vec<Vec<HeadResult>> =
        (0..seq.len()).map(|i| if i <= first || fresh(i) { Vec::new() } else { heads_of(&seq[i - 1], &seq[i]) }).collect();
    let mut votes = VoteTable { votes: BTreeMap::new(), threshold };
    for step in &found {
        for (_, r) in step {
            if let Ok(np) = r {
                *votes.votes.entry(np.pattern.id().clone()).or_default() += 1;
            }
        }
    }
    let mut inf = Inferrer {
        votes,
        extra_valid: BTreeSet::new(),
        pair: PatternPair::new(),
        rules: Vec::new(),
        rewrites: BTreeMap::new(),
        cycles: BTreeMap::new(),
        shadow: Vec::new(),
        trace: Vec::new(),
        last_new: Vec::new(),
    };
    for i in 0..seq.len() {
        let events = if i < first {
            vec![StepEvent::NoInitial { reason: "dropped: loses words in the next automaton".into() }]
        } else if fresh(i) {
            inf.initial(&seq[i], threshold)
        } else {
            inf.step(&seq[i - 1], &seq[i], &found[i])
        };
        inf.trace.push(StepTrace { index: i, events });
    }
    inf.finish(seq.last())
}

fn starts_fresh(prev: &Dfa) -> bool {
    prev.accepting().is_empty() || prev.is_empty_language()
}

/// A sequence grown by rules only ever gains words. The first extracted
/// hypotheses often do not (they are built from very short words), so the
/// sequence starts at the first nonempty automaton whose words all survive
/// into its successor.
fn stable_start(seq: &[Dfa]) -> usize {
    (0..seq.len())
        .find(|&i| !starts_fresh(&seq[i]) && seq.get(i + 1).is_none_or(|n| seq[i].is_subset_of(n)))
        .unwrap_or(0)
}

fn heads_of(prev: &Dfa, next: &Dfa) -> Vec<HeadResult> {
    if starts_fresh(prev) {
        return Vec::new();
    }
    let dd = decompose_delta(prev, next);
    let overlapping = dd.overlapping_heads();
    dd.heads
        .iter()
        .map(|&h| {
            if overlapping.contains(&h) {
                return (h, Err(Unresolved::OverlappingHeads(h)));
            }
            let r = discover_exit_state(&dd, h, next).and_then(|e| extract_new_pattern(&dd, h, e, next));
            (h, r)
        })
        .collect()
}

impl Inferrer {
    fn is_valid(&self, id: &PatternId) -> bool {
        self.votes.is_valid(id) || self.extra_valid.contains(id)
    }

    fn initial(&mut self, dfa: &Dfa, threshold: usize) -> Vec<StepEvent> {
        self.shadow.clear();
        self.last_new.clear();
        match start_patterns(dfa) {
            Ok(ps) => {
                let mut ids = Vec::new();
                for p in ps {
                    if let Some(inst) = find_instance(dfa, &p, dfa.initial()) {
                        let case = if p.is_circular() { ExitCase::Circular } else { ExitCase::Merged };
                        let transitions = p.dfa().transitions().map(|(s, t, r)| (inst.map[&s], t, inst.map[&r])).collect();
                        self.last_new.push(NewPattern {
                            pattern: p.clone(),
                            head: dfa.initial(),
                            exit: ExitState { exit: inst.exit, case },
                            transitions,
                        });
                    }
                    let id = self.pair.add(p);
                    if threshold <= 1 {
                        self.extra_valid.insert(id.clone());
                    }
                    let join = self.pair.join_state(dfa, &id, dfa.initial());
                    self.shadow.push(Shadow { pattern: id.clone(), initial: dfa.initial(), join, origin: Origin::Start });
                    ids.push(id);
                }
                vec![StepEvent::Initial { patterns: ids }]
            }
            Err(reason) => vec![StepEvent::NoInitial { reason }],
        }
    }

    fn step(&mut self, prev: &Dfa, next: &Dfa, found: &[HeadResult]) -> Vec<StepEvent> {
        let dd = decompose_delta(prev, next);
        if dd.is_empty() {
            self.last_new.clear();
            return vec![StepEvent::Unchanged];
        }
        let mut events = Vec::new();
        let mut pending: Vec<(PatternId, Coord, Origin)> = Vec::new();
        for (head, r) in found {
            match r {
                Err(u) => events.push(StepEvent::Unresolved { head: Some(*head), reason: u.to_string() }),
                Ok(np) => {
                    self.note_alternation(np, &dd, next, &mut events);
                    if let Err(u) = self.handle(np, &dd, prev, next, &mut pending, &mut events) {
                        events.push(StepEvent::Unresolved { head: Some(*head), reason: u.to_string() });
                    }
                }
            }
        }
        if dd.heads.is_empty() {
            events.push(StepEvent::Unresolved { head: None, reason: "new states without a pattern head".into() });
        }
        self.last_new = found.iter().filter_map(|(_, r)| r.as_ref().ok().cloned()).collect();
        self.remap(&dd, next);
        self.apply_pending(pending, &dd, next);
        events
    }

    /// Flags a pattern whose head and exit both lie on the pattern added
    /// by the previous step: the two steps added the branches of one
    /// alternation separately.
    fn note_alternation(&self, np: &NewPattern, dd: &DeltaDecomposition, next: &Dfa, events: &mut Vec<StepEvent>) {
        if np.exit.case != ExitCase::Merged {
            return;
        }
        let (Some(&h), Some(&x)) = (dd.parallel.get(&np.head), dd.parallel.get(&np.exit.exit)) else { return };
        for old in &self.last_new {
            if old.exit.is_circular() {
                continue;
            }
            let on_old = |q: StateId| old.transitions.iter().any(|(s, _, r)| *s == q || *r == q);
            if !on_old(h) || !on_old(x) {
                continue;
            }
            let Some(start) = dd.parallel.iter().find(|(_, &p)| p == old.head).map(|(&n, _)| n) else { continue };
            let Some(inst) = find_instance(next, &old.pattern, start) else { continue };
            let mut union: BTreeSet<Transition> = np.transitions.clone();
            union.extend(old.pattern.dfa().transitions().map(|(s, t, r)| (inst.map[&s], t, inst.map[&r])));
            if let Ok(joined) = Pattern::new(inst.initial, inst.exit, union) {
                events.push(StepEvent::AlternationSplit {
                    first: old.pattern.id().clone(),
                    second: np.pattern.id().clone(),
                    joined: joined.id().clone(),
                });
            }
        }
    }

    fn handle(
        &mut self,
        np: &NewPattern,
        dd: &DeltaDecomposition,
        prev: &Dfa,
        next: &Dfa,
        pending: &mut Vec<(PatternId, Coord, Origin)>,
        events: &mut Vec<StepEvent>,
    ) -> Result<(), Unresolved> {
        let found_id = np.pattern.id().clone();
        // split operands are valid hosts, but a graft needs votes of its own
        if !self.votes.is_valid(&found_id) {
            events.push(StepEvent::SkippedNoise { pattern: found_id.clone(), votes: self.votes.get(&found_id) });
            return Ok(());
        }
        self.pair.add(np.pattern.clone());
        let graft = self.rewrites.get(&found_id).map_or(found_id, |(r, _)| r.clone());
        if np.head == next.initial() {
            pending.push((graft.clone(), Coord::Next(np.head), Origin::Start));
            events.push(StepEvent::StartInstance { pattern: graft });
            return Ok(());
        }
        let qj = dd.parallel[&np.head];
        let k = self.resolve_host(prev, qj, events)?;
        let host = self.shadow[k].clone();
        if !self.is_valid(&host.pattern) {
            events.push(StepEvent::HostNotValid { pattern: graft, host: host.pattern });
            return Ok(());
        }
        let comp = self.pair.composition(&host.pattern).expect("resolved hosts are composite").clone();
        let circular = self.pair.get(&graft).expect("registered").is_circular();
        if !circular && comp.op != CompositionOp::Serial {
            return Err(Unresolved::RuleRejected("serial graft onto a circular composite".into()));
        }
        let rule = if circular {
            PrsRule::Circular { host: host.pattern.clone(), graft: graft.clone() }
        } else {
            PrsRule::Serial { host: host.pattern.clone(), graft: graft.clone() }
        };
        events.push(self.add_rule(rule));
        pending.push((comp.left.clone(), Coord::Prev(host.initial), Origin::Operand));
        pending.push((comp.right.clone(), Coord::Prev(qj), Origin::Operand));
        pending.push((graft, Coord::Next(np.head), Origin::Graft));
        Ok(())
    }

    fn add_rule(&mut self, rule: PrsRule) -> StepEvent {
        let new = !self.rules.contains(&rule);
        if new {
            self.rules.push(rule.clone());
        }
        let text = self.describe(&rule);
        StepEvent::Rule { rule, text, new }
    }

    fn describe(&self, r: &PrsRule) -> String {
        let name = |id: &PatternId| self.pair.get(id).map(|p| p.describe()).unwrap_or_else(|_| id.to_string());
        match r {
            PrsRule::Start { pattern } => format!("⊥ → {}", name(pattern)),
            PrsRule::Circular { host, graft } => format!("{} →c {}", name(host), name(graft)),
            PrsRule::Serial { host, graft } => format!("{} →s {}", name(host), name(graft)),
        }
    }

    /// The enabled instance a graft at `qj` (a state of `prev`) belongs
    /// to, splitting a not-yet-composite pattern at `qj` when needed.
    fn resolve_host(&mut self, prev: &Dfa, qj: StateId, events: &mut Vec<StepEvent>) -> Result<usize, Unresolved> {
        let by_join: Vec<usize> = (0..self.shadow.len()).filter(|&k| self.shadow[k].join == Some(qj)).collect();
        let distinct: BTreeSet<(&PatternId, StateId)> =
            by_join.iter().map(|&k| (&self.shadow[k].pattern, self.shadow[k].initial)).collect();
        match distinct.len() {
            1 => return Ok(by_join[0]),
            0 => {}
            _ => return Err(Unresolved::AmbiguousHost(qj)),
        }
        let mut cands: Vec<(usize, crate::patterns::PatternInstance)> = Vec::new();
        for (k, s) in self.shadow.iter().enumerate() {
            if self.pair.is_composite(&s.pattern) || cands.iter().any(|(j, _)| {
                self.shadow[*j].pattern == s.pattern && self.shadow[*j].initial == s.initial
            }) {
                continue;
            }
            let p = self.pair.get(&s.pattern).expect("shadowed patterns are registered");
            if let Some(inst) = find_instance(prev, p, s.initial) {
                if inst.contains_non_edge(qj) {
                    cands.push((k, inst));
                }
            }
        }
        let (k, inst) = match cands.len() {
            0 => return Err(Unresolved::NoHost(qj)),
            1 => cands.pop().expect("one"),
            _ => return Err(Unresolved::AmbiguousHost(qj)),
        };
        let pid = self.shadow[k].pattern.clone();
        let p = self.pair.get(&pid).expect("registered").clone();
        let local = *inst.map.iter().find(|(_, &h)| h == qj).expect("contains qj").0;
        match split_pattern(&p, local) {
            Ok((l, op, r)) => {
                self.register_split(&l, op, &r)?;
                self.refresh_joins(prev, &pid);
                Ok(k)
            }
            Err(reason) => {
                let Some((reduced, local2, cycle)) = split_simultaneous_cycle(&p, local) else {
                    return Err(Unresolved::NoSplit { pattern: pid, state: local, reason });
                };
                let (l, op, r) = split_pattern(&reduced, local2)
                    .map_err(|reason| Unresolved::NoSplit { pattern: reduced.id().clone(), state: local2, reason })?;
                self.pair.add(reduced.clone());
                self.pair.add(cycle.clone());
                self.register_split(&l, op, &r)?;
                let (rid, cid) = (reduced.id().clone(), cycle.id().clone());
                self.extra_valid.insert(rid.clone());
                self.extra_valid.insert(cid.clone());
                self.rewrites.insert(pid.clone(), (rid.clone(), cid.clone()));
                self.cycles.insert(rid.clone(), cid.clone());
                for rule in self.rules.iter_mut() {
                    match rule {
                        PrsRule::Start { pattern: g } | PrsRule::Circular { graft: g, .. } | PrsRule::Serial { graft: g, .. }
                            if *g == pid =>
                        {
                            *g = rid.clone();
                        }
                        _ => {}
                    }
                }
                let mut seen = BTreeSet::new();
                self.rules.retain(|r| seen.insert(r.clone()));
                events.push(StepEvent::CycleSplit { original: pid.clone(), reduced: rid.clone(), cycle: cid.clone() });
                events.push(self.add_rule(PrsRule::Circular { host: rid.clone(), graft: cid.clone() }));
                let comp = self.pair.composition(&rid).expect("just registered").clone();
                let mut extra = Vec::new();
                for s in self.shadow.iter_mut().filter(|s| s.pattern == pid) {
                    s.pattern = rid.clone();
                    s.join = self.pair.join_state(prev, &rid, s.initial);
                    if let Some(j) = s.join {
                        extra.push((cid.clone(), j, Origin::Graft));
                        extra.push((comp.left.clone(), s.initial, Origin::Operand));
                        extra.push((comp.right.clone(), j, Origin::Operand));
                    }
                }
                for (p, q, o) in extra {
                    self.enable(prev, p, q, o);
                }
                self.shadow.iter().position(|s| s.pattern == rid && s.join == Some(qj)).ok_or(Unresolved::NoHost(qj))
            }
        }
    }

    fn register_split(&mut self, l: &Pattern, op: CompositionOp, r: &Pattern) -> Result<PatternId, Unresolved> {
        let (lid, rid) = (self.pair.add(l.clone()), self.pair.add(r.clone()));
        self.extra_valid.insert(lid.clone());
        self.extra_valid.insert(rid.clone());
        self.pair.add_composite(&lid, op, &rid).map_err(|e| Unresolved::RuleRejected(e.to_string()))
    }

    fn refresh_joins(&mut self, dfa: &Dfa, pid: &PatternId) {
        for s in self.shadow.iter_mut().filter(|s| &s.pattern == pid) {
            s.join = self.pair.join_state(dfa, pid, s.initial);
        }
    }

    /// Adds an enabled instance in `dfa`'s states, or upgrades the origin
    /// of an existing one.
    fn enable(&mut self, dfa: &Dfa, pattern: PatternId, q: StateId, origin: Origin) {
        let mut queue = VecDeque::from([(pattern, q, origin)]);
        while let Some((p, q, o)) = queue.pop_front() {
            if let Some(s) = self.shadow.iter_mut().find(|s| s.pattern == p && s.initial == q) {
                s.origin = s.origin.max(o);
                continue;
            }
            let Ok(pat) = self.pair.get(&p) else { continue };
            if find_instance(dfa, pat, q).is_none() {
                log::debug!("instance of {p} at {q} not found; not enabled");
                continue;
            }
            let join = self.pair.join_state(dfa, &p, q);
            if let (Some(c), Some(j)) = (self.cycles.get(&p), join) {
                let comp = self.pair.composition(&p).expect("reduced patterns are composite");
                queue.push_back((c.clone(), j, Origin::Graft));
                queue.push_back((comp.left.clone(), q, Origin::Operand));
                queue.push_back((comp.right.clone(), j, Origin::Operand));
            }
            self.shadow.push(Shadow { pattern: p, initial: q, join, origin: o });
        }
    }

    /// Moves the shadow list from the earlier automaton's states to the
    /// later one's, dropping instances that did not survive.
    fn remap(&mut self, dd: &DeltaDecomposition, next: &Dfa) {
        let mut inverse: BTreeMap<StateId, StateId> = BTreeMap::new();
        for (&n, &p) in &dd.parallel {
            inverse.entry(p).or_insert(n);
        }
        let old = std::mem::take(&mut self.shadow);
        for s in old {
            let Some(&q) = inverse.get(&s.initial) else { continue };
            if self.shadow.iter().any(|t| t.pattern == s.pattern && t.initial == q) {
                continue;
            }
            let p = self.pair.get(&s.pattern).expect("registered");
            if find_instance(next, p, q).is_none() {
                log::debug!("instance of {} lost between automata", s.pattern);
                continue;
            }
            let join = self.pair.join_state(next, &s.pattern, q);
            self.shadow.push(Shadow { pattern: s.pattern, initial: q, join, origin: s.origin });
        }
    }

    fn apply_pending(&mut self, pending: Vec<(PatternId, Coord, Origin)>, dd: &DeltaDecomposition, next: &Dfa) {
        let mut inverse: BTreeMap<StateId, StateId> = BTreeMap::new();
        for (&n, &p) in &dd.parallel {
            inverse.entry(p).or_insert(n);
        }
        for (p, c, o) in pending {
            let q = match c {
                Coord::Next(q) => Some(q),
                Coord::Prev(q) => inverse.get(&q).copied(),
            };
            if let Some(q) = q {
                self.enable(next, p, q, o);
            }
        }
    }

    fn finish(mut self, last: Option<&Dfa>) -> InferenceReport {
        let mut start_gaps = Vec::new();
        let mut starts: Vec<PatternId> = Vec::new();
        if let Some(last) = last {
            let q0 = last.initial();
            for s in &self.shadow {
                if s.initial == q0 && s.origin == Origin::Start && self.is_valid(&s.pattern) && !starts.contains(&s.pattern) {
                    starts.push(s.pattern.clone());
                }
            }
            if starts.is_empty() {
                start_gaps.push("no enabled start instance survived; scanning the last automaton".into());
                let mut cands: Vec<PatternId> = self
                    .votes
                    .valid()
                    .map(|(id, _)| self.rewrites.get(id).map_or(id.clone(), |(r, _)| r.clone()))
                    .filter(|id| self.pair.get(id).is_ok_and(|p| find_instance(last, p, q0).is_some()))
                    .collect();
                cands.dedup();
                let lefts: BTreeSet<PatternId> = cands
                    .iter()
                    .filter_map(|id| self.pair.composition(id).map(|c| c.left.clone()))
                    .collect();
                starts = cands.into_iter().filter(|id| !lefts.contains(id)).collect();
            }
        }
        for s in starts.iter().rev() {
            self.rules.insert(0, PrsRule::Start { pattern: s.clone() });
        }
        let unresolved = self
            .trace
            .iter()
            .filter(|t| t.events.iter().any(|e| matches!(e, StepEvent::Unresolved { .. })))
            .map(|t| t.index)
            .collect();
        let (prs, error) = match Prs::new(self.pair.clone(), self.rules.clone(), []) {
            Ok(full) => {
                let mut prs = full.restrict(&(0..self.rules.len()).collect());
                prs.alphabet = prs.pair.patterns().flat_map(|p| p.alphabet().iter().cloned()).collect();
                (Some(prs), None)
            }
            Err(e) => (None, Some(e.to_string())),
        };
        InferenceReport { prs, error, trace: self.trace, votes: self.votes, unresolved, start_gaps, rewrites: self.rewrites }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::Token;
    use crate::prs::examples::*;
    use crate::prs::{generate_sequence, Generation, Schedule, Step};

    fn seq(prs: &Prs, steps: Vec<Step>) -> Vec<Dfa> {
        generate_sequence(prs, &Generation::Schedule(Schedule::new(steps))).unwrap().dfas
    }

    #[test]
    fn r_ab_first_pair() {
        let prs = r_ab();
        let s = seq(&prs, vec![Step::initial(0), Step::at(1, 0)]);
        let dd = decompose_delta(&s[0], &s[1]);
        assert_eq!(dd.new_states.len(), 2);
        assert_eq!(dd.heads.len(), 1);
        let h = *dd.heads.iter().next().unwrap();
        assert_eq!(dd.relevant[&h].transitions, dd.new_transitions);
        let e = discover_exit_state(&dd, h, &s[1]).unwrap();
        assert_eq!(e.case, ExitCase::Connecting);
        let np = extract_new_pattern(&dd, h, e, &s[1]).unwrap();
        assert_eq!(np.pattern.id(), Pattern::literal("ab").id());
        assert!(decompose_delta(&s[1], &s[1]).is_empty());
    }

    #[test]
    fn dyck_nesting_is_circular() {
        let prs = r_dyck2();
        let s = seq(&prs, vec![Step::initial(0), Step::at(2, 0)]);
        let dd = decompose_delta(&s[0], &s[1]);
        let h = *dd.heads.iter().next().unwrap();
        let e = discover_exit_state(&dd, h, &s[1]).unwrap();
        assert_eq!(e, ExitState { exit: h, case: ExitCase::Circular });
        let np = extract_new_pattern(&dd, h, e, &s[1]).unwrap();
        assert_eq!(np.pattern.id(), prs.rules[0].grafted());
    }

    #[test]
    fn split_and_recompose() {
        let ab = Pattern::literal("ab");
        let (l, op, r) = split_pattern(&ab, StateId(1)).unwrap();
        assert_eq!((l.id(), op, r.id()), (Pattern::literal("a").id(), CompositionOp::Serial, Pattern::literal("b").id()));
        assert!(split_pattern(&ab, StateId(0)).is_err());
        let lp = crate::patterns::circular_compose(&Pattern::literal("("), &Pattern::literal(")")).unwrap();
        let (l, op, r) = split_pattern(&lp.pattern, lp.join).unwrap();
        assert_eq!(op, CompositionOp::Circular);
        assert_eq!(r.id(), Pattern::literal(")").id());
        assert_eq!(l.id(), Pattern::literal("(").id());
    }

    #[test]
    fn cycle_removal() {
        let t = Token::new;
        let p = Pattern::new(
            StateId(0),
            StateId(2),
            [(StateId(0), t("("), StateId(1)), (StateId(1), t("a"), StateId(1)), (StateId(1), t(")"), StateId(2))],
        )
        .unwrap();
        assert!(split_pattern(&p, StateId(1)).is_err());
        let (reduced, k, cycle) = split_simultaneous_cycle(&p, StateId(1)).unwrap();
        assert_eq!(reduced.id(), Pattern::literal("()").id());
        assert_eq!(k, StateId(1));
        assert!(cycle.is_circular() && cycle.accepts(&Token::chars("aa")));
        assert!(split_simultaneous_cycle(&Pattern::literal("ab"), StateId(1)).is_none());
    }

    #[test]
    fn first_automaton_splits_into_start_patterns() {
        let t = Token::new;
        let q = StateId;
        let d = Dfa::new(
            [t("("), t(")"), t("a")],
            [],
            q(0),
            [q(0)],
            [(q(0), t("("), q(1)), (q(1), t(")"), q(0)), (q(1), t("a"), q(1)), (q(0), t("a"), q(0))],
        )
        .unwrap();
        let ps = start_patterns(&d).unwrap();
        assert_eq!(ps.len(), 2);
        assert!(ps.iter().all(|p| p.is_circular()));
        assert!(ps.iter().any(|p| p.id() == Pattern::loop_of(&[t("a")]).unwrap().id()));
        let ab = Pattern::literal("ab").dfa().clone();
        assert_eq!(start_patterns(&ab).unwrap().len(), 1);
    }

    #[test]
    fn epsilon_normalization() {
        let t = Token::new;
        let plus = Dfa::new(
            [t("("), t(")")],
            [],
            StateId(0),
            [StateId(2)],
            [(StateId(0), t("("), StateId(1)), (StateId(1), t(")"), StateId(2)), (StateId(2), t("("), StateId(1))],
        )
        .unwrap();
        let star = normalize_epsilon(&plus);
        assert_eq!(star.num_states(), 2);
        assert!(star.accepts(&[]));
        let ab = Pattern::literal("ab").dfa().clone();
        assert_eq!(normalize_epsilon(&ab), ab);
    }

    #[test]
    fn infers_r_ab_and_dyck2() {
        let prs = r_ab();
        let s = seq(&prs, vec![Step::initial(0), Step::at(1, 0), Step::at(1, 1)]);
        let rep = infer(&s, 1);
        assert!(rep.prs.as_ref().unwrap().same_rules(&prs), "{rep:#?}");
        assert_eq!(rep.trace.len(), 3);

        let prs = r_dyck2();
        let g = generate_sequence(&prs, &Generation::Covering { seed: 1, min_uses: 2, max_steps: 40 }).unwrap();
        let rep = infer(&g.dfas, 1);
        let truth = prs.restrict(&g.used_rules());
        assert!(rep.prs.as_ref().unwrap().same_rules(&truth), "{:#?}\n{}", rep.trace, rep.prs.unwrap());
    }

    #[test]
    fn spurious_pattern_is_skipped_at_threshold_two() {
        let prs = r_ab();
        let steps = vec![Step::initial(0), Step::at(1, 0), Step::at(1, 1), Step::at(1, 2), Step::at(1, 3)];
        let (dfas, noisy) =
            crate::prs::generate_with_noise(&prs, &Schedule::new(steps), 1, 5).unwrap();
        assert_eq!(noisy.len(), 1);
        let rep = infer(&dfas, 2);
        assert!(rep.prs.as_ref().unwrap().same_rules(&prs));
        assert!(rep.events().any(|e| matches!(e, StepEvent::SkippedNoise { votes: 1, .. })));
    }
}
