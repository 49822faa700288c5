//! Deterministic finite automata over labelled tokens.
//!
//! A [`Dfa`] may be partial: a missing transition rejects. Automata coming
//! out of [`Dfa::minimize`] are trimmed (no sink-reject states, no
//! unreachable states) and renumbered canonically, so two equal languages
//! produce byte-identical automata.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A single input symbol. Ordered by label.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(Arc<str>);

pub type Word = Vec<Token>;

impl Token {
    pub fn new(label: &str) -> Token {
        Token(Arc::from(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// One token per character of `s`.
    pub fn chars(s: &str) -> Word {
        s.chars().map(|c| Token::new(&c.to_string())).collect()
    }

    /// Tokens separated by whitespace.
    pub fn words(s: &str) -> Word {
        s.split_whitespace().map(Token::new).collect()
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Token {
    fn from(s: &str) -> Token {
        Token::new(s)
    }
}

impl Serialize for Token {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Token, D::Error> {
        let s = String::deserialize(d)?;
        if s.is_empty() {
            return Err(serde::de::Error::custom("empty token"));
        }
        Ok(Token::new(&s))
    }
}

/// Renders a word: concatenated when every token is one character,
/// space-separated otherwise. The empty word renders as `ε`.
pub fn format_word(w: &[Token]) -> String {
    if w.is_empty() {
        return "ε".to_string();
    }
    if w.iter().all(|t| t.as_str().chars().count() == 1) {
        w.iter().map(|t| t.as_str()).collect()
    } else {
        w.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Parses a word given either as space-separated tokens or, when there is
/// no whitespace, one token per character.
pub fn parse_word(s: &str) -> Word {
    let s = s.trim();
    if s.is_empty() || s == "ε" {
        Vec::new()
    } else if s.contains(char::is_whitespace) {
        Token::words(s)
    } else {
        Token::chars(s)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u64);

// Fresh ids start high so they never collide with canonical numbering.
static NEXT_STATE: AtomicU64 = AtomicU64::new(1 << 32);

impl StateId {
    /// A process-wide unique state id.
    pub fn fresh() -> StateId {
        StateId(NEXT_STATE.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Debug for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

pub type Transition = (StateId, Token, StateId);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AutomataError {
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("state {0} already present")]
    StateExists(StateId),
    #[error("two transitions from {state} on {token}")]
    Nondeterministic { state: StateId, token: Token },
    #[error("token {0} not in alphabet")]
    UnknownToken(Token),
    #[error("language enumeration exceeded the budget of {0} nodes")]
    Budget(usize),
}

pub const DEFAULT_ENUMERATION_BUDGET: usize = 1_000_000;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DfaJson", into = "DfaJson")]
pub struct Dfa {
    alphabet: BTreeSet<Token>,
    states: BTreeSet<StateId>,
    initial: StateId,
    accepting: BTreeSet<StateId>,
    delta: BTreeMap<StateId, BTreeMap<Token, StateId>>,
}

#[derive(Serialize, Deserialize)]
struct DfaJson {
    alphabet: Vec<Token>,
    states: Vec<StateId>,
    initial: StateId,
    accepting: Vec<StateId>,
    transitions: Vec<Transition>,
}

impl TryFrom<DfaJson> for Dfa {
    type Error = AutomataError;
    fn try_from(j: DfaJson) -> Result<Dfa, AutomataError> {
        Dfa::new(j.alphabet, j.states, j.initial, j.accepting, j.transitions)
    }
}

impl From<Dfa> for DfaJson {
    fn from(d: Dfa) -> DfaJson {
        DfaJson {
            alphabet: d.alphabet.iter().cloned().collect(),
            states: d.states.iter().copied().collect(),
            initial: d.initial,
            accepting: d.accepting.iter().copied().collect(),
            transitions: d.transitions().collect(),
        }
    }
}

impl fmt::Debug for Dfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dfa(init={:?}, acc={:?}, [", self.initial, self.accepting)?;
        for (i, (p, t, q)) in self.transitions().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p:?}-{t}->{q:?}")?;
        }
        f.write_str("])")
    }
}

impl Dfa {
    /// Builds and validates an automaton. States mentioned by transitions,
    /// the initial state and accepting states are added implicitly; tokens
    /// used by transitions are added to the alphabet.
    pub fn new(
        alphabet: impl IntoIterator<Item = Token>,
        states: impl IntoIterator<Item = StateId>,
        initial: StateId,
        accepting: impl IntoIterator<Item = StateId>,
        transitions: impl IntoIterator<Item = Transition>,
    ) -> Result<Dfa, AutomataError> {
        let mut d = Dfa {
            alphabet: alphabet.into_iter().collect(),
            states: states.into_iter().collect(),
            initial,
            accepting: accepting.into_iter().collect(),
            delta: BTreeMap::new(),
        };
        d.states.insert(initial);
        for q in d.accepting.clone() {
            d.states.insert(q);
        }
        for (p, t, q) in transitions {
            d.add_transition(p, t, q)?;
        }
        Ok(d)
    }

    /// The automaton with a single initial state and no transitions.
    pub fn single(alphabet: impl IntoIterator<Item = Token>, accepting: bool) -> Dfa {
        let q = StateId(0);
        Dfa::new(alphabet, [q], q, if accepting { vec![q] } else { vec![] }, [])
            .expect("trivial automaton")
    }

    pub fn add_transition(&mut self, p: StateId, t: Token, q: StateId) -> Result<(), AutomataError> {
        self.states.insert(p);
        self.states.insert(q);
        self.alphabet.insert(t.clone());
        let row = self.delta.entry(p).or_default();
        match row.get(&t) {
            Some(&old) if old != q => Err(AutomataError::Nondeterministic { state: p, token: t }),
            _ => {
                row.insert(t, q);
                Ok(())
            }
        }
    }

    pub fn add_state(&mut self, q: StateId) {
        self.states.insert(q);
    }

    pub fn set_accepting(&mut self, q: StateId, accepting: bool) {
        self.states.insert(q);
        if accepting {
            self.accepting.insert(q);
        } else {
            self.accepting.remove(&q);
        }
    }

    pub fn extend_alphabet(&mut self, tokens: impl IntoIterator<Item = Token>) {
        self.alphabet.extend(tokens);
    }

    pub fn alphabet(&self) -> &BTreeSet<Token> {
        &self.alphabet
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn accepting(&self) -> &BTreeSet<StateId> {
        &self.accepting
    }

    pub fn is_accepting(&self, q: StateId) -> bool {
        self.accepting.contains(&q)
    }

    pub fn contains_state(&self, q: StateId) -> bool {
        self.states.contains(&q)
    }

    pub fn next(&self, q: StateId, t: &Token) -> Option<StateId> {
        self.delta.get(&q).and_then(|row| row.get(t)).copied()
    }

    /// Outgoing transitions of `q` in token order.
    pub fn outgoing(&self, q: StateId) -> impl Iterator<Item = (&Token, StateId)> + '_ {
        self.delta.get(&q).into_iter().flat_map(|row| row.iter().map(|(t, &q)| (t, q)))
    }

    /// All transitions, ordered by source then token.
    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.delta
            .iter()
            .flat_map(|(&p, row)| row.iter().map(move |(t, &q)| (p, t.clone(), q)))
    }

    pub fn transition_set(&self) -> BTreeSet<Transition> {
        self.transitions().collect()
    }

    pub fn num_transitions(&self) -> usize {
        self.delta.values().map(|r| r.len()).sum()
    }

    /// State reached from `from` after reading `w`, if every step is defined.
    pub fn run_from(&self, from: StateId, w: &[Token]) -> Option<StateId> {
        let mut q = from;
        for t in w {
            q = self.next(q, t)?;
        }
        Some(q)
    }

    pub fn accepts(&self, w: &[Token]) -> bool {
        self.run_from(self.initial, w).is_some_and(|q| self.is_accepting(q))
    }

    pub fn is_complete(&self) -> bool {
        self.states.iter().all(|q| {
            self.delta.get(q).map_or(0, |r| r.len()) == self.alphabet.len()
        })
    }

    /// Adds at most one fresh sink so every state has a transition on every
    /// token. A complete automaton is returned unchanged.
    pub fn complete(&self) -> Dfa {
        if self.is_complete() {
            return self.clone();
        }
        let mut d = self.clone();
        let sink = StateId::fresh();
        d.states.insert(sink);
        let states: Vec<StateId> = d.states.iter().copied().collect();
        for q in states {
            for t in self.alphabet.iter() {
                if d.next(q, t).is_none() {
                    d.delta.entry(q).or_default().insert(t.clone(), sink);
                }
            }
        }
        d
    }

    /// States from which no accepting state is reachable.
    pub fn sink_reject_states(&self) -> BTreeSet<StateId> {
        let live = self.coreachable();
        self.states.iter().copied().filter(|q| !live.contains(q)).collect()
    }

    /// States from which some accepting state is reachable.
    pub fn coreachable(&self) -> BTreeSet<StateId> {
        let mut rev: HashMap<StateId, Vec<StateId>> = HashMap::new();
        for (p, _, q) in self.transitions() {
            rev.entry(q).or_default().push(p);
        }
        let mut seen: BTreeSet<StateId> = self.accepting.clone();
        let mut queue: VecDeque<StateId> = self.accepting.iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            for &p in rev.get(&q).map(|v| v.as_slice()).unwrap_or(&[]) {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    pub fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([self.initial]);
        let mut queue = VecDeque::from([self.initial]);
        while let Some(q) = queue.pop_front() {
            for (_, r) in self.outgoing(q) {
                if seen.insert(r) {
                    queue.push_back(r);
                }
            }
        }
        seen
    }

    /// Tokens on which `q` moves to a state that can still accept.
    pub fn defined_tokens(&self, q: StateId) -> Result<BTreeSet<Token>, AutomataError> {
        if !self.states.contains(&q) {
            return Err(AutomataError::UnknownState(q));
        }
        let live = self.coreachable();
        Ok(self
            .outgoing(q)
            .filter(|(_, r)| live.contains(r))
            .map(|(t, _)| t.clone())
            .collect())
    }

    /// Tokens labelling live transitions into `q`.
    pub fn incoming(&self, q: StateId) -> Vec<(StateId, Token)> {
        self.transitions().filter(|(_, _, r)| *r == q).map(|(p, t, _)| (p, t)).collect()
    }

    /// Removes unreachable states and states that cannot reach acceptance.
    /// The initial state is always kept.
    pub fn trim(&self) -> Dfa {
        let reach = self.reachable();
        let live = self.coreachable();
        let keep: BTreeSet<StateId> = reach
            .intersection(&live)
            .copied()
            .chain(std::iter::once(self.initial))
            .collect();
        let transitions = self
            .transitions()
            .filter(|(p, _, q)| keep.contains(p) && keep.contains(q) && live.contains(q));
        Dfa::new(
            self.alphabet.iter().cloned(),
            keep.iter().copied(),
            self.initial,
            self.accepting.intersection(&keep).copied(),
            transitions,
        )
        .expect("subset of a deterministic automaton")
    }

    /// Shortest distance from each state to an accepting state.
    pub fn distance_to_accept(&self) -> HashMap<StateId, usize> {
        let mut rev: HashMap<StateId, Vec<StateId>> = HashMap::new();
        for (p, _, q) in self.transitions() {
            rev.entry(q).or_default().push(p);
        }
        let mut dist: HashMap<StateId, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for &q in &self.accepting {
            dist.insert(q, 0);
            queue.push_back(q);
        }
        while let Some(q) = queue.pop_front() {
            let d = dist[&q];
            for &p in rev.get(&q).map(|v| v.as_slice()).unwrap_or(&[]) {
                if !dist.contains_key(&p) {
                    dist.insert(p, d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    /// All accepted words of length at most `max_len`.
    pub fn enumerate_language(&self, max_len: usize) -> Result<BTreeSet<Word>, AutomataError> {
        self.enumerate_language_with_budget(max_len, DEFAULT_ENUMERATION_BUDGET)
    }

    pub fn enumerate_language_with_budget(
        &self,
        max_len: usize,
        budget: usize,
    ) -> Result<BTreeSet<Word>, AutomataError> {
        let dist = self.distance_to_accept();
        let mut out = BTreeSet::new();
        if !dist.get(&self.initial).is_some_and(|&d| d <= max_len) {
            return Ok(out);
        }
        let mut frontier: Vec<(StateId, Word)> = vec![(self.initial, Vec::new())];
        let mut nodes = 1usize;
        for len in 0..=max_len {
            let mut next = Vec::new();
            for (q, w) in frontier {
                if self.is_accepting(q) {
                    out.insert(w.clone());
                }
                if len == max_len {
                    continue;
                }
                for (t, r) in self.outgoing(q) {
                    if dist.get(&r).is_some_and(|&d| len + 1 + d <= max_len) {
                        nodes += 1;
                        if nodes > budget {
                            return Err(AutomataError::Budget(budget));
                        }
                        let mut w2 = w.clone();
                        w2.push(t.clone());
                        next.push((r, w2));
                    }
                }
            }
            frontier = next;
        }
        Ok(out)
    }

    /// Shortest accepted word, ties broken by token order.
    pub fn shortest_word(&self) -> Option<Word> {
        self.shortest_word_from(self.initial, |q| self.is_accepting(q))
    }

    /// Shortest word leading from `from` to a state satisfying `goal`.
    pub fn shortest_word_from(&self, from: StateId, goal: impl Fn(StateId) -> bool) -> Option<Word> {
        let mut prev: HashMap<StateId, (StateId, Token)> = HashMap::new();
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(q) = queue.pop_front() {
            if goal(q) {
                let mut w = Vec::new();
                let mut cur = q;
                while cur != from {
                    let (p, t) = prev[&cur].clone();
                    w.push(t);
                    cur = p;
                }
                w.reverse();
                return Some(w);
            }
            for (t, r) in self.outgoing(q) {
                if seen.insert(r) {
                    prev.insert(r, (q, t.clone()));
                    queue.push_back(r);
                }
            }
        }
        None
    }

    /// A shortest word accepted here but not by `other`, if any.
    pub fn difference_witness(&self, other: &Dfa) -> Option<Word> {
        type Pair = (StateId, Option<StateId>);
        let start: Pair = (self.initial, Some(other.initial));
        let mut prev: HashMap<Pair, (Pair, Token)> = HashMap::new();
        let mut queue = VecDeque::from([start]);
        let mut seen: HashSet<Pair> = HashSet::from([start]);
        while let Some(pair @ (p, q)) = queue.pop_front() {
            if self.is_accepting(p) && !q.is_some_and(|q| other.is_accepting(q)) {
                let mut w = Vec::new();
                let mut cur = pair;
                while cur != start {
                    let (b, t) = prev[&cur].clone();
                    w.push(t);
                    cur = b;
                }
                w.reverse();
                return Some(w);
            }
            for (t, r) in self.outgoing(p) {
                let next = (r, q.and_then(|q| other.next(q, t)));
                if seen.insert(next) {
                    prev.insert(next, (pair, t.clone()));
                    queue.push_back(next);
                }
            }
        }
        None
    }

    pub fn is_subset_of(&self, other: &Dfa) -> bool {
        self.difference_witness(other).is_none()
    }

    pub fn is_empty_language(&self) -> bool {
        self.shortest_word().is_none()
    }

    /// Renumbers reachable states 0..n in breadth-first order, following
    /// transitions in token order. Unreachable states are dropped.
    pub fn canonical(&self) -> Dfa {
        let order = self.bfs_order();
        let index: HashMap<StateId, StateId> =
            order.iter().enumerate().map(|(i, &q)| (q, StateId(i as u64))).collect();
        let transitions = self
            .transitions()
            .filter(|(p, _, _)| index.contains_key(p))
            .map(|(p, t, q)| (index[&p], t, index[&q]));
        Dfa::new(
            self.alphabet.iter().cloned(),
            index.values().copied(),
            index[&self.initial],
            self.accepting.iter().filter_map(|q| index.get(q).copied()),
            transitions,
        )
        .expect("renumbering preserves determinism")
    }

    /// Reachable states in breadth-first order from the initial state.
    pub fn bfs_order(&self) -> Vec<StateId> {
        let mut order = vec![self.initial];
        let mut seen = BTreeSet::from([self.initial]);
        let mut i = 0;
        while i < order.len() {
            let q = order[i];
            for (_, r) in self.outgoing(q) {
                if seen.insert(r) {
                    order.push(r);
                }
            }
            i += 1;
        }
        order
    }

    /// Renames every state through `f`.
    pub fn relabel(&self, f: impl Fn(StateId) -> StateId) -> Dfa {
        Dfa::new(
            self.alphabet.iter().cloned(),
            self.states.iter().map(|&q| f(q)),
            f(self.initial),
            self.accepting.iter().map(|&q| f(q)),
            self.transitions().map(|(p, t, q)| (f(p), t, f(q))),
        )
        .expect("injective relabelling")
    }

    /// A copy with fresh state ids, together with the renaming used.
    pub fn instantiate_fresh(&self) -> (Dfa, BTreeMap<StateId, StateId>) {
        let map: BTreeMap<StateId, StateId> =
            self.states.iter().map(|&q| (q, StateId::fresh())).collect();
        (self.relabel(|q| map[&q]), map)
    }

    /// The minimal trimmed automaton for the same language, canonically
    /// numbered.
    pub fn minimize(&self) -> Dfa {
        let trimmed = self.trim();
        if trimmed.is_empty_language() {
            return Dfa::single(self.alphabet.iter().cloned(), false);
        }
        let states: Vec<StateId> = trimmed.states.iter().copied().collect();
        let idx: HashMap<StateId, usize> = states.iter().enumerate().map(|(i, &q)| (q, i)).collect();
        let sigma: Vec<&Token> = trimmed.alphabet.iter().collect();
        let n = states.len();
        let sink = n;
        let table: Vec<Vec<usize>> = (0..=n)
            .map(|i| {
                sigma
                    .iter()
                    .map(|t| {
                        if i == sink {
                            sink
                        } else {
                            trimmed.next(states[i], t).map_or(sink, |r| idx[&r])
                        }
                    })
                    .collect()
            })
            .collect();
        let mut class: Vec<usize> = (0..=n)
            .map(|i| usize::from(i != sink && trimmed.is_accepting(states[i])))
            .collect();
        let mut count = class.iter().copied().collect::<BTreeSet<_>>().len();
        loop {
            let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
            let next: Vec<usize> = (0..=n)
                .map(|i| {
                    let mut sig = Vec::with_capacity(sigma.len() + 1);
                    sig.push(class[i]);
                    sig.extend(table[i].iter().map(|&j| class[j]));
                    let k = ids.len();
                    *ids.entry(sig).or_insert(k)
                })
                .collect();
            let c = ids.len();
            class = next;
            if c == count {
                break;
            }
            count = c;
        }
        let sink_class = class[sink];
        let cid = |i: usize| StateId(class[i] as u64);
        let mut transitions = BTreeSet::new();
        for i in 0..n {
            for (a, &j) in table[i].iter().enumerate() {
                if class[j] != sink_class {
                    transitions.insert((cid(i), sigma[a].clone(), cid(j)));
                }
            }
        }
        let d = Dfa::new(
            self.alphabet.iter().cloned(),
            (0..n).map(cid),
            cid(idx[&trimmed.initial]),
            (0..n).filter(|&i| trimmed.is_accepting(states[i])).map(cid),
            transitions,
        )
        .expect("quotient of a deterministic automaton");
        d.canonical()
    }

    /// Graphviz rendering: an invisible start node points at the initial
    /// state, accepting states are double circles.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph dfa {\n  rankdir=LR;\n  start [shape=point, style=invis];\n");
        for &q in &self.states {
            let shape = if self.is_accepting(q) { "doublecircle" } else { "circle" };
            s.push_str(&format!("  {} [shape={}, label=\"{}\"];\n", q.0, shape, q.0));
        }
        s.push_str(&format!("  start -> {};\n", self.initial.0));
        for (p, t, q) in self.transitions() {
            let label = t.as_str().replace('\\', "\\\\").replace('"', "\\\"");
            s.push_str(&format!("  {} -> {} [label=\"{}\"];\n", p.0, q.0, label));
        }
        s.push_str("}\n");
        s
    }
}

/// Replaces every occurrence of `q` in `transitions` with `qn`.
pub fn replace_state(
    transitions: &BTreeSet<Transition>,
    q: StateId,
    qn: StateId,
) -> Result<BTreeSet<Transition>, AutomataError> {
    let mentions = |s: StateId| transitions.iter().any(|(a, _, b)| *a == s || *b == s);
    if mentions(qn) {
        return Err(AutomataError::StateExists(qn));
    }
    if !mentions(q) {
        return Err(AutomataError::UnknownState(q));
    }
    let sub = |s: StateId| if s == q { qn } else { s };
    Ok(transitions.iter().map(|(a, t, b)| (sub(*a), t.clone(), sub(*b))).collect())
}

/// A bijection `d1 -> d2` preserving the initial state, acceptance and
/// transitions, if one exists. Automata over different alphabets are never
/// isomorphic.
pub fn isomorphism(d1: &Dfa, d2: &Dfa) -> Option<BTreeMap<StateId, StateId>> {
    if d1.alphabet != d2.alphabet
        || d1.num_states() != d2.num_states()
        || d1.num_transitions() != d2.num_transitions()
    {
        return None;
    }
    let mut fwd: BTreeMap<StateId, StateId> = BTreeMap::new();
    let mut back: BTreeMap<StateId, StateId> = BTreeMap::new();
    let mut queue = VecDeque::from([(d1.initial, d2.initial)]);
    fwd.insert(d1.initial, d2.initial);
    back.insert(d2.initial, d1.initial);
    while let Some((p, q)) = queue.pop_front() {
        if d1.is_accepting(p) != d2.is_accepting(q) {
            return None;
        }
        let a: Vec<_> = d1.outgoing(p).collect();
        let b: Vec<_> = d2.outgoing(q).collect();
        if a.len() != b.len() {
            return None;
        }
        for ((t1, r1), (t2, r2)) in a.into_iter().zip(b) {
            if t1 != t2 {
                return None;
            }
            match (fwd.get(&r1), back.get(&r2)) {
                (Some(&x), _) if x != r2 => return None,
                (_, Some(&y)) if y != r1 => return None,
                (Some(_), Some(_)) => {}
                _ => {
                    fwd.insert(r1, r2);
                    back.insert(r2, r1);
                    queue.push_back((r1, r2));
                }
            }
        }
    }
    // States not reachable from the initial state cannot be matched this way.
    if fwd.len() != d1.num_states() {
        return None;
    }
    Some(fwd)
}

/// Walks `next` and `prev` in lockstep from their initial states and maps
/// each reached state of `next` to the first `prev` state seen alongside
/// it. Returns the map and the number of conflicting pairings ignored.
pub fn parallel_state_map(prev: &Dfa, next: &Dfa) -> (BTreeMap<StateId, StateId>, usize) {
    let mut map = BTreeMap::new();
    let mut visited = BTreeSet::new();
    let mut conflicts = 0;
    let mut queue = VecDeque::from([(next.initial, prev.initial)]);
    visited.insert((next.initial, prev.initial));
    while let Some((n, p)) = queue.pop_front() {
        match map.get(&n) {
            None => {
                map.insert(n, p);
            }
            Some(&old) if old != p => conflicts += 1,
            _ => {}
        }
        for (t, n2) in next.outgoing(n) {
            if let Some(p2) = prev.next(p, t) {
                if visited.insert((n2, p2)) {
                    queue.push_back((n2, p2));
                }
            }
        }
    }
    (map, conflicts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Token {
        Token::new(s)
    }

    fn q(i: u64) -> StateId {
        StateId(i)
    }

    /// a^n b^n for n in 1..=2, hand-built with redundant states.
    fn ab2() -> Dfa {
        Dfa::new(
            [t("a"), t("b")],
            [],
            q(0),
            [q(2), q(5)],
            [
                (q(0), t("a"), q(1)),
                (q(1), t("b"), q(2)),
                (q(1), t("a"), q(3)),
                (q(3), t("b"), q(4)),
                (q(4), t("b"), q(5)),
                (q(2), t("a"), q(9)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn nondeterminism_rejected() {
        let e = Dfa::new([t("a")], [], q(0), [], [(q(0), t("a"), q(1)), (q(0), t("a"), q(2))]);
        assert!(matches!(e, Err(AutomataError::Nondeterministic { .. })));
    }

    #[test]
    fn membership_and_unknown_tokens() {
        let d = ab2();
        assert!(d.accepts(&Token::chars("ab")));
        assert!(d.accepts(&Token::chars("aabb")));
        assert!(!d.accepts(&Token::chars("aab")));
        assert!(!d.accepts(&Token::chars("ac")));
        assert!(!d.accepts(&[]));
    }

    #[test]
    fn completion_adds_one_sink() {
        let d = ab2();
        let c = d.complete();
        assert!(c.is_complete());
        assert_eq!(c.num_states(), d.num_states() + 1);
        assert_eq!(c.complete(), c);
        for w in ["ab", "aabb", "ba", "abab"] {
            assert_eq!(c.accepts(&Token::chars(w)), d.accepts(&Token::chars(w)));
        }
    }

    #[test]
    fn sinks_and_defined_tokens() {
        let d = ab2();
        assert_eq!(d.sink_reject_states(), BTreeSet::from([q(9)]));
        assert_eq!(d.defined_tokens(q(2)).unwrap(), BTreeSet::new());
        assert_eq!(d.defined_tokens(q(1)).unwrap(), BTreeSet::from([t("a"), t("b")]));
        assert_eq!(d.defined_tokens(q(77)), Err(AutomataError::UnknownState(q(77))));
    }

    #[test]
    fn replace_state_rules() {
        let ts = ab2().transition_set();
        let r = replace_state(&ts, q(1), q(42)).unwrap();
        assert!(r.contains(&(q(0), t("a"), q(42))));
        assert!(!r.iter().any(|(a, _, b)| *a == q(1) || *b == q(1)));
        assert_eq!(replace_state(&ts, q(1), q(2)), Err(AutomataError::StateExists(q(2))));
    }

    #[test]
    fn enumeration_matches_membership() {
        let d = ab2();
        let lang = d.enumerate_language(6).unwrap();
        assert_eq!(lang, BTreeSet::from([Token::chars("ab"), Token::chars("aabb")]));
        assert_eq!(d.enumerate_language(3).unwrap().len(), 1);
        assert!(matches!(d.enumerate_language_with_budget(6, 2), Err(AutomataError::Budget(2))));
    }

    #[test]
    fn minimize_is_canonical() {
        let d = ab2();
        let m = d.minimize();
        // a^n b^n, n <= 2: states 0 -a-> 1 -b-> F, 1 -a-> 2 -b-> 3 -b-> F
        assert_eq!(m.num_states(), 5);
        assert!(m.sink_reject_states().is_empty());
        let shuffled = d.relabel(|s| StateId(s.0 * 7 + 100));
        assert_eq!(shuffled.minimize(), m);
        assert_eq!(m.minimize(), m);
        assert_eq!(
            m.enumerate_language(8).unwrap(),
            d.enumerate_language(8).unwrap()
        );
    }

    #[test]
    fn minimize_empty_language() {
        let d = Dfa::new([t("a")], [], q(0), [], [(q(0), t("a"), q(1))]).unwrap();
        let m = d.minimize();
        assert_eq!(m.num_states(), 1);
        assert!(m.is_empty_language());
    }

    #[test]
    fn isomorphism_found_and_refused() {
        let m = ab2().minimize();
        let (f, _) = m.instantiate_fresh();
        let iso = isomorphism(&m, &f).unwrap();
        assert_eq!(iso.len(), m.num_states());
        let other = Dfa::new([t("x"), t("y")], [], q(0), [q(1)], [(q(0), t("x"), q(1))]).unwrap();
        assert!(isomorphism(&m, &other).is_none());
    }

    #[test]
    fn parallel_map_follows_shared_prefixes() {
        let prev = Dfa::new([t("a"), t("b")], [], q(0), [q(1)], [(q(0), t("a"), q(1))]).unwrap();
        let next = ab2();
        let (map, _) = parallel_state_map(&prev, &next);
        assert_eq!(map.get(&q(0)), Some(&q(0)));
        assert_eq!(map.get(&q(1)), Some(&q(1)));
        assert!(!map.contains_key(&q(2)));
    }

    #[test]
    fn json_round_trip() {
        let d = ab2();
        let s = serde_json::to_string(&d).unwrap();
        let back: Dfa = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(d.to_dot().contains("doublecircle"));
    }

    #[test]
    fn shortest_word_prefers_token_order() {
        let d = ab2();
        assert_eq!(d.shortest_word(), Some(Token::chars("ab")));
    }
}
