//! Patterns: automata with a single exit state, their compositions, and
//! their instances inside larger automata.
//!
//! A [`Pattern`] is stored in canonical numbering and identified by a
//! content hash ([`PatternId`]). Grafting a pattern into a host always goes
//! through [`Pattern::instantiate`], which hands out fresh state ids.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::automata::{replace_state, AutomataError, Dfa, StateId, Token, Transition, Word};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatternId(String);

impl PatternId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("pattern language is empty")]
    EmptyLanguage,
    #[error("exit state has live outgoing transitions")]
    ExitHasTransitions,
    #[error("initial state lies on a cycle")]
    InitialOnCycle,
    #[error("operand is circular")]
    CircularOperand,
    #[error("operands share state {0}")]
    StateCollision(StateId),
    #[error("unknown pattern {0}")]
    UnknownPattern(PatternId),
    #[error("pattern {0} already registered with a different decomposition")]
    ConflictingDecomposition(PatternId),
    #[error(transparent)]
    Automata(#[from] AutomataError),
}

/// A pattern positioned at concrete state ids. The automaton's only
/// accepting state is `exit`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedPattern {
    pub dfa: Dfa,
    pub exit: StateId,
}

impl PlacedPattern {
    /// Validates and trims a pattern given by transitions.
    pub fn new(
        initial: StateId,
        exit: StateId,
        transitions: impl IntoIterator<Item = Transition>,
    ) -> Result<PlacedPattern, PatternError> {
        let transitions: Vec<Transition> = transitions.into_iter().collect();
        let alphabet: BTreeSet<Token> = transitions.iter().map(|(_, t, _)| t.clone()).collect();
        let dfa = Dfa::new(alphabet, [], initial, [exit], transitions)?.trim();
        if dfa.is_empty_language() {
            return Err(PatternError::EmptyLanguage);
        }
        let used: BTreeSet<Token> = dfa.transitions().map(|(_, t, _)| t).collect();
        let dfa = Dfa::new(used, dfa.states().iter().copied(), initial, [exit], dfa.transitions())?;
        let p = PlacedPattern { dfa, exit };
        if initial != exit {
            if p.dfa.outgoing(exit).next().is_some() {
                return Err(PatternError::ExitHasTransitions);
            }
            if p.dfa.transitions().any(|(_, _, q)| q == initial) {
                return Err(PatternError::InitialOnCycle);
            }
        }
        Ok(p)
    }

    pub fn initial(&self) -> StateId {
        self.dfa.initial()
    }

    pub fn is_circular(&self) -> bool {
        self.dfa.initial() == self.exit
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        self.dfa.states()
    }

    /// Tokens with a transition out of the initial state.
    pub fn first_tokens(&self) -> BTreeSet<Token> {
        self.dfa.outgoing(self.initial()).map(|(t, _)| t.clone()).collect()
    }
}

/// A pattern in canonical numbering.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternJson", into = "PatternJson")]
pub struct Pattern {
    placed: PlacedPattern,
    id: PatternId,
}

#[derive(Serialize, Deserialize)]
struct PatternJson {
    initial: StateId,
    exit: StateId,
    transitions: Vec<Transition>,
}

impl TryFrom<PatternJson> for Pattern {
    type Error = PatternError;
    fn try_from(j: PatternJson) -> Result<Pattern, PatternError> {
        Pattern::from_placed(&PlacedPattern::new(j.initial, j.exit, j.transitions)?)
    }
}

impl From<Pattern> for PatternJson {
    fn from(p: Pattern) -> PatternJson {
        PatternJson {
            initial: p.initial(),
            exit: p.exit(),
            transitions: p.dfa().transitions().collect(),
        }
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({} {:?} exit={:?})", self.id, self.placed.dfa, self.placed.exit)
    }
}

impl Pattern {
    pub fn new(
        initial: StateId,
        exit: StateId,
        transitions: impl IntoIterator<Item = Transition>,
    ) -> Result<Pattern, PatternError> {
        Pattern::from_placed(&PlacedPattern::new(initial, exit, transitions)?)
    }

    /// Canonicalizes a placed pattern.
    pub fn from_placed(p: &PlacedPattern) -> Result<Pattern, PatternError> {
        let p = PlacedPattern::new(p.initial(), p.exit, p.dfa.transitions())?;
        let order = p.dfa.bfs_order();
        let index: BTreeMap<StateId, StateId> =
            order.iter().enumerate().map(|(i, &q)| (q, StateId(i as u64))).collect();
        let dfa = p.dfa.relabel(|q| index[&q]);
        let exit = index[&p.exit];
        let id = hash_pattern(&dfa, exit);
        Ok(Pattern { placed: PlacedPattern { dfa, exit }, id })
    }

    /// The non-circular pattern accepting exactly `w`.
    pub fn word(w: &[Token]) -> Result<Pattern, PatternError> {
        if w.is_empty() {
            return Err(PatternError::EmptyLanguage);
        }
        let transitions = w
            .iter()
            .enumerate()
            .map(|(i, t)| (StateId(i as u64), t.clone(), StateId(i as u64 + 1)));
        Pattern::new(StateId(0), StateId(w.len() as u64), transitions)
    }

    /// Shorthand for [`Pattern::word`] over a literal, one token per char
    /// unless the literal contains spaces.
    pub fn literal(s: &str) -> Pattern {
        Pattern::word(&crate::automata::parse_word(s)).expect("nonempty literal")
    }

    /// The non-circular pattern accepting any one of `tokens`.
    pub fn choice(tokens: &[Token]) -> Result<Pattern, PatternError> {
        Pattern::new(
            StateId(0),
            StateId(1),
            tokens.iter().map(|t| (StateId(0), t.clone(), StateId(1))),
        )
    }

    /// The circular single-state pattern looping on each of `tokens`.
    pub fn loop_of(tokens: &[Token]) -> Result<Pattern, PatternError> {
        Pattern::new(StateId(0), StateId(0), tokens.iter().map(|t| (StateId(0), t.clone(), StateId(0))))
    }

    pub fn id(&self) -> &PatternId {
        &self.id
    }

    pub fn dfa(&self) -> &Dfa {
        &self.placed.dfa
    }

    pub fn placed(&self) -> &PlacedPattern {
        &self.placed
    }

    pub fn initial(&self) -> StateId {
        self.placed.initial()
    }

    pub fn exit(&self) -> StateId {
        self.placed.exit
    }

    pub fn is_circular(&self) -> bool {
        self.placed.is_circular()
    }

    pub fn num_states(&self) -> usize {
        self.placed.dfa.num_states()
    }

    pub fn alphabet(&self) -> &BTreeSet<Token> {
        self.placed.dfa.alphabet()
    }

    pub fn first_tokens(&self) -> BTreeSet<Token> {
        self.placed.first_tokens()
    }

    pub fn accepts(&self, w: &[Token]) -> bool {
        self.placed.dfa.accepts(w)
    }

    pub fn shortest_word(&self) -> Word {
        if self.is_circular() {
            // shortest nonempty word around the loop
            let mut best: Option<Word> = None;
            for (t, r) in self.dfa().outgoing(self.initial()) {
                let mut w = vec![t.clone()];
                w.extend(self.dfa().shortest_word_from(r, |q| q == self.exit()).unwrap_or_default());
                if best.as_ref().map_or(true, |b| w.len() < b.len() || (w.len() == b.len() && w < *b)) {
                    best = Some(w);
                }
            }
            best.unwrap_or_default()
        } else {
            self.dfa().shortest_word().unwrap_or_default()
        }
    }

    /// A copy with fresh state ids and the canonical-to-fresh renaming.
    pub fn instantiate(&self) -> (PlacedPattern, BTreeMap<StateId, StateId>) {
        let (dfa, map) = self.placed.dfa.instantiate_fresh();
        let exit = map[&self.placed.exit];
        (PlacedPattern { dfa, exit }, map)
    }

    /// Short human-readable description of the pattern's language.
    pub fn describe(&self) -> String {
        describe_pattern(self)
    }
}

fn hash_pattern(dfa: &Dfa, exit: StateId) -> PatternId {
    let mut h = Sha256::new();
    h.update(format!("{};{};{};", dfa.num_states(), dfa.initial().0, exit.0));
    for (p, t, q) in dfa.transitions() {
        h.update(format!("{}:{}:{}|", p.0, t.as_str().len(), q.0));
        h.update(t.as_str().as_bytes());
        h.update(b";");
    }
    let digest = h.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    PatternId(format!("p{hex}"))
}

fn describe_pattern(p: &Pattern) -> String {
    let words = p.dfa().enumerate_language_with_budget(6, 2000).unwrap_or_default();
    let mut shown: Vec<String> = words
        .iter()
        .filter(|w| !w.is_empty())
        .take(4)
        .map(|w| crate::automata::format_word(w))
        .collect();
    if words.iter().filter(|w| !w.is_empty()).count() > 4 {
        shown.push("...".into());
    }
    let body = shown.join("|");
    if p.is_circular() {
        format!("({body})*")
    } else {
        body
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionOp {
    Serial,
    Circular,
}

impl fmt::Display for CompositionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompositionOp::Serial => f.write_str("∘"),
            CompositionOp::Circular => f.write_str("∘c"),
        }
    }
}

fn check_operands(a: &PlacedPattern, b: &PlacedPattern) -> Result<(), PatternError> {
    if a.is_circular() || b.is_circular() {
        return Err(PatternError::CircularOperand);
    }
    if let Some(&q) = a.states().intersection(b.states()).next() {
        return Err(PatternError::StateCollision(q));
    }
    Ok(())
}

/// Merges the exit of `a` into the initial state of `b`. Returns the
/// composite and its join state.
pub fn serial_compose_placed(
    a: &PlacedPattern,
    b: &PlacedPattern,
) -> Result<(PlacedPattern, StateId), PatternError> {
    check_operands(a, b)?;
    let join = b.initial();
    let mut ts = replace_state(&a.dfa.transition_set(), a.exit, join)?;
    ts.extend(b.dfa.transitions());
    Ok((PlacedPattern::new(a.initial(), b.exit, ts)?, join))
}

/// Merges the exit of `a` into the initial state of `b` and the exit of
/// `b` into the initial state of `a`.
pub fn circular_compose_placed(
    a: &PlacedPattern,
    b: &PlacedPattern,
) -> Result<(PlacedPattern, StateId), PatternError> {
    check_operands(a, b)?;
    let join = b.initial();
    let mut ts = replace_state(&a.dfa.transition_set(), a.exit, join)?;
    ts.extend(replace_state(&b.dfa.transition_set(), b.exit, a.initial())?);
    Ok((PlacedPattern::new(a.initial(), a.initial(), ts)?, join))
}

/// A composite pattern together with the canonical index of its join state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composite {
    pub pattern: Pattern,
    pub join: StateId,
}

pub fn compose(a: &Pattern, op: CompositionOp, b: &Pattern) -> Result<Composite, PatternError> {
    let (pa, _) = a.instantiate();
    let (pb, _) = b.instantiate();
    let (placed, join) = match op {
        CompositionOp::Serial => serial_compose_placed(&pa, &pb)?,
        CompositionOp::Circular => circular_compose_placed(&pa, &pb)?,
    };
    let order = placed.dfa.bfs_order();
    let pos = order.iter().position(|&q| q == join).expect("join is reachable");
    let pattern = Pattern::from_placed(&placed)?;
    Ok(Composite { pattern, join: StateId(pos as u64) })
}

pub fn serial_compose(a: &Pattern, b: &Pattern) -> Result<Composite, PatternError> {
    compose(a, CompositionOp::Serial, b)
}

pub fn circular_compose(a: &Pattern, b: &Pattern) -> Result<Composite, PatternError> {
    compose(a, CompositionOp::Circular, b)
}

/// How a composite pattern decomposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub left: PatternId,
    pub op: CompositionOp,
    pub right: PatternId,
    /// Join state in the composite's canonical numbering.
    pub join: StateId,
}

/// A set of patterns, some of which are marked composite with a unique
/// decomposition into two members of the set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternPair {
    patterns: BTreeMap<PatternId, Pattern>,
    composites: BTreeMap<PatternId, Composition>,
}

impl PatternPair {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, p: Pattern) -> PatternId {
        let id = p.id().clone();
        self.patterns.entry(id.clone()).or_insert(p);
        id
    }

    pub fn add_composite(
        &mut self,
        left: &PatternId,
        op: CompositionOp,
        right: &PatternId,
    ) -> Result<PatternId, PatternError> {
        let l = self.get(left)?.clone();
        let r = self.get(right)?.clone();
        let c = compose(&l, op, &r)?;
        let id = c.pattern.id().clone();
        let comp = Composition { left: left.clone(), op, right: right.clone(), join: c.join };
        if let Some(existing) = self.composites.get(&id) {
            if *existing != comp {
                return Err(PatternError::ConflictingDecomposition(id));
            }
        }
        self.patterns.entry(id.clone()).or_insert(c.pattern);
        self.composites.insert(id.clone(), comp);
        Ok(id)
    }

    pub fn get(&self, id: &PatternId) -> Result<&Pattern, PatternError> {
        self.patterns.get(id).ok_or_else(|| PatternError::UnknownPattern(id.clone()))
    }

    pub fn contains(&self, id: &PatternId) -> bool {
        self.patterns.contains_key(id)
    }

    pub fn is_composite(&self, id: &PatternId) -> bool {
        self.composites.contains_key(id)
    }

    pub fn composition(&self, id: &PatternId) -> Option<&Composition> {
        self.composites.get(id)
    }

    pub fn patterns(&self) -> impl Iterator<Item = &Pattern> {
        self.patterns.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &PatternId> {
        self.patterns.keys()
    }

    pub fn composites(&self) -> impl Iterator<Item = (&PatternId, &Composition)> {
        self.composites.iter()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Join state of the instance of composite `p` starting at `q` in `host`.
    pub fn join_state(&self, host: &Dfa, p: &PatternId, q: StateId) -> Option<StateId> {
        let comp = self.composites.get(p)?;
        let inst = find_instance(host, self.patterns.get(p)?, q)?;
        inst.map.get(&comp.join).copied()
    }

    /// Whether every composite's operands are registered.
    pub fn is_consistent(&self) -> bool {
        self.composites.iter().all(|(id, c)| {
            self.patterns.contains_key(id)
                && self.patterns.contains_key(&c.left)
                && self.patterns.contains_key(&c.right)
        })
    }
}

/// An occurrence of a pattern inside a host automaton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternInstance {
    pub pattern: PatternId,
    /// Canonical pattern state to host state.
    pub map: BTreeMap<StateId, StateId>,
    pub initial: StateId,
    pub exit: StateId,
}

impl PatternInstance {
    pub fn states(&self) -> BTreeSet<StateId> {
        self.map.values().copied().collect()
    }

    pub fn is_edge(&self, q: StateId) -> bool {
        q == self.initial || q == self.exit
    }

    pub fn contains(&self, q: StateId) -> bool {
        self.map.values().any(|&s| s == q)
    }

    pub fn contains_non_edge(&self, q: StateId) -> bool {
        self.contains(q) && !self.is_edge(q)
    }
}

/// Embeds `p` into `host` with its initial state at `q`, if the host has
/// every pattern transition at the corresponding states and the
/// correspondence is injective.
pub fn find_instance(host: &Dfa, p: &Pattern, q: StateId) -> Option<PatternInstance> {
    if !host.contains_state(q) {
        return None;
    }
    let pd = p.dfa();
    let mut map: BTreeMap<StateId, StateId> = BTreeMap::from([(pd.initial(), q)]);
    let mut used: BTreeSet<StateId> = BTreeSet::from([q]);
    let mut queue = VecDeque::from([pd.initial()]);
    while let Some(s) = queue.pop_front() {
        let hs = map[&s];
        for (t, s2) in pd.outgoing(s) {
            let h2 = host.next(hs, t)?;
            match map.get(&s2) {
                Some(&m) if m != h2 => return None,
                Some(_) => {}
                None => {
                    if !used.insert(h2) {
                        return None;
                    }
                    map.insert(s2, h2);
                    queue.push_back(s2);
                }
            }
        }
    }
    let exit = map[&p.exit()];
    Some(PatternInstance { pattern: p.id().clone(), initial: q, exit, map })
}

/// All states of `host` at which an instance of `p` starts.
pub fn find_all_instances(host: &Dfa, p: &Pattern) -> Vec<PatternInstance> {
    host.states().iter().filter_map(|&q| find_instance(host, p, q)).collect()
}

/// Checks that two distinct instances either meet only at edge states, or
/// one contains the other and the container is composite with its join
/// state outside the inner instance or on one of its edges. Returns a
/// description of the violation otherwise.
pub fn check_instance_pair(
    pair: &PatternPair,
    host: &Dfa,
    a: &PatternInstance,
    b: &PatternInstance,
) -> Result<(), String> {
    let sa = a.states();
    let sb = b.states();
    let shared: Vec<StateId> = sa.intersection(&sb).copied().collect();
    if shared.iter().all(|&s| a.is_edge(s) || b.is_edge(s)) {
        return Ok(());
    }
    let nested = |outer: &PatternInstance, so: &BTreeSet<StateId>, inner: &PatternInstance, si: &BTreeSet<StateId>| {
        if !si.is_subset(so) {
            return false;
        }
        match pair.join_state(host, &outer.pattern, outer.initial) {
            Some(j) => !si.contains(&j) || inner.is_edge(j),
            None => false,
        }
    };
    if nested(a, &sa, b, &sb) || nested(b, &sb, a, &sa) {
        Ok(())
    } else {
        Err(format!(
            "instances {}@{} and {}@{} overlap on non-edge states {:?}",
            a.pattern, a.initial, b.pattern, b.initial, shared
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(i: u64) -> StateId {
        StateId(i)
    }

    fn t(s: &str) -> Token {
        Token::new(s)
    }

    #[test]
    fn validation() {
        assert!(Pattern::literal("ab").dfa().accepts(&Token::chars("ab")));
        // exit with an outgoing loop back through the pattern
        let e = Pattern::new(q(0), q(1), [(q(0), t("a"), q(1)), (q(1), t("b"), q(0))]);
        assert!(matches!(e, Err(PatternError::ExitHasTransitions)));
        let e = Pattern::new(q(0), q(2), [(q(0), t("a"), q(1)), (q(1), t("b"), q(0)), (q(1), t("c"), q(2))]);
        assert!(matches!(e, Err(PatternError::InitialOnCycle)));
        let e = Pattern::new(q(0), q(5), [(q(0), t("a"), q(1))]);
        assert!(matches!(e, Err(PatternError::EmptyLanguage)));
        // interior cycles are allowed
        assert!(Pattern::new(q(0), q(2), [(q(0), t("a"), q(1)), (q(1), t("b"), q(1)), (q(1), t("c"), q(2))]).is_ok());
    }

    #[test]
    fn ids_are_structural() {
        let a = Pattern::new(q(5), q(9), [(q(5), t("a"), q(9))]).unwrap();
        assert_eq!(a.id(), Pattern::literal("a").id());
        assert_ne!(Pattern::literal("a").id(), Pattern::literal("b").id());
        let s = serde_json::to_string(&a).unwrap();
        let back: Pattern = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn serial_and_circular_languages() {
        let a = Pattern::literal("a");
        let b = Pattern::literal("b");
        let s = serial_compose(&a, &b).unwrap();
        assert!(!s.pattern.is_circular());
        assert!(s.pattern.accepts(&Token::chars("ab")));
        assert_eq!(s.join, q(1));
        let c = circular_compose(&Pattern::literal("("), &Pattern::literal(")")).unwrap();
        assert!(c.pattern.is_circular());
        assert!(c.pattern.accepts(&Token::chars("()()")));
        assert!(c.pattern.accepts(&[]));
        assert!(!c.pattern.accepts(&Token::chars("((")));
        assert!(matches!(serial_compose(&c.pattern, &a), Err(PatternError::CircularOperand)));
    }

    #[test]
    fn collisions_rejected() {
        let a = PlacedPattern::new(q(0), q(1), [(q(0), t("a"), q(1))]).unwrap();
        let b = PlacedPattern::new(q(1), q(2), [(q(1), t("b"), q(2))]).unwrap();
        assert_eq!(serial_compose_placed(&a, &b), Err(PatternError::StateCollision(q(1))));
    }

    #[test]
    fn instances_and_join() {
        let mut pair = PatternPair::new();
        let a = pair.add(Pattern::literal("a"));
        let b = pair.add(Pattern::literal("b"));
        let ab = pair.add_composite(&a, CompositionOp::Serial, &b).unwrap();
        // host accepting a a b b: 0 a 1 a 2 b 3 b 4, plus 1 b 4
        let host = Dfa::new(
            [],
            [],
            q(0),
            [q(4)],
            [
                (q(0), t("a"), q(1)),
                (q(1), t("a"), q(2)),
                (q(2), t("b"), q(3)),
                (q(3), t("b"), q(4)),
                (q(1), t("b"), q(4)),
            ],
        )
        .unwrap();
        let abp = pair.get(&ab).unwrap().clone();
        let i0 = find_instance(&host, &abp, q(0)).unwrap();
        assert_eq!(i0.exit, q(4));
        assert_eq!(pair.join_state(&host, &ab, q(0)), Some(q(1)));
        let i1 = find_instance(&host, &abp, q(1)).unwrap();
        assert_eq!(i1.exit, q(3));
        assert!(find_instance(&host, &abp, q(3)).is_none());
        assert!(check_instance_pair(&pair, &host, &i0, &i1).is_ok());
    }
}
