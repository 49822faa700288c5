//! Pattern rule sets and the engine that applies them.
//!
//! A [`Prs`] holds a [`PatternPair`] and a list of rules. Rules are applied
//! to an [`EnabledDfa`] (see [`engine`]) to produce a growing sequence of
//! automata; [`language`] decides bounded membership in the union of all
//! automata a rule set can generate.

pub mod engine;
pub mod language;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::automata::Token;
use crate::patterns::{CompositionOp, Pattern, PatternError, PatternId, PatternPair};

pub use engine::{
    generate_sequence, generate_with_noise, Application, EnabledDfa, EnabledInstance, EngineError, Generated, Generation,
    Schedule, Site, Step,
};
pub use language::{prs_language, prs_membership, BoundedLanguage, Membership};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PrsRule {
    /// Creates the first automaton, or grafts a circular pattern at the
    /// initial state of an existing one.
    Start { pattern: PatternId },
    /// Grafts a circular pattern at the join state of an enabled instance.
    Circular { host: PatternId, graft: PatternId },
    /// Grafts a non-circular pattern at the join state of an enabled
    /// instance of a serial composite, copying the join's continuation.
    Serial { host: PatternId, graft: PatternId },
}

impl PrsRule {
    pub fn host(&self) -> Option<&PatternId> {
        match self {
            PrsRule::Start { .. } => None,
            PrsRule::Circular { host, .. } | PrsRule::Serial { host, .. } => Some(host),
        }
    }

    /// The pattern this rule adds to the automaton.
    pub fn grafted(&self) -> &PatternId {
        match self {
            PrsRule::Start { pattern } => pattern,
            PrsRule::Circular { graft, .. } | PrsRule::Serial { graft, .. } => graft,
        }
    }

    pub fn is_start(&self) -> bool {
        matches!(self, PrsRule::Start { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrsError {
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("rule {0}: host {1} is not a composite pattern")]
    HostNotComposite(usize, PatternId),
    #[error("rule {0}: serial rule needs a serially composed host, {1} is circular")]
    HostNotSerial(usize, PatternId),
    #[error("rule {0}: grafted pattern {1} must be circular")]
    GraftNotCircular(usize, PatternId),
    #[error("rule {0}: grafted pattern {1} must be non-circular")]
    GraftCircular(usize, PatternId),
    #[error("rule {0}: a start rule on an existing automaton needs a circular pattern")]
    StartNotCircular(usize),
    #[error("rule set has no start rule")]
    NoStartRule,
    #[error("token {0} is not in the alphabet")]
    TokenOutsideAlphabet(Token),
}

/// A pattern rule set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prs {
    pub alphabet: BTreeSet<Token>,
    pub pair: PatternPair,
    pub rules: Vec<PrsRule>,
    /// Optional display names for patterns.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub names: BTreeMap<PatternId, String>,
}

impl Prs {
    /// Builds and validates a rule set. The alphabet is the union of the
    /// pattern alphabets plus `extra_alphabet`.
    pub fn new(
        pair: PatternPair,
        rules: Vec<PrsRule>,
        extra_alphabet: impl IntoIterator<Item = Token>,
    ) -> Result<Prs, PrsError> {
        let mut alphabet: BTreeSet<Token> = extra_alphabet.into_iter().collect();
        for p in pair.patterns() {
            alphabet.extend(p.alphabet().iter().cloned());
        }
        let prs = Prs { alphabet, pair, rules, names: BTreeMap::new() };
        prs.validate()?;
        Ok(prs)
    }

    pub fn with_names(mut self, names: BTreeMap<PatternId, String>) -> Prs {
        self.names = names;
        self
    }

    pub fn validate(&self) -> Result<(), PrsError> {
        if !self.pair.is_consistent() {
            let missing = self
                .pair
                .composites()
                .flat_map(|(_, c)| [c.left.clone(), c.right.clone()])
                .find(|id| !self.pair.contains(id))
                .expect("an inconsistent pair has a missing operand");
            return Err(PatternError::UnknownPattern(missing).into());
        }
        if !self.rules.iter().any(PrsRule::is_start) {
            return Err(PrsError::NoStartRule);
        }
        for p in self.pair.patterns() {
            if let Some(t) = p.alphabet().iter().find(|t| !self.alphabet.contains(*t)) {
                return Err(PrsError::TokenOutsideAlphabet(t.clone()));
            }
        }
        for (i, r) in self.rules.iter().enumerate() {
            match r {
                PrsRule::Start { pattern } => {
                    self.pair.get(pattern)?;
                }
                PrsRule::Circular { host, graft } => {
                    self.pair.get(host)?;
                    if !self.pair.is_composite(host) {
                        return Err(PrsError::HostNotComposite(i, host.clone()));
                    }
                    if !self.pair.get(graft)?.is_circular() {
                        return Err(PrsError::GraftNotCircular(i, graft.clone()));
                    }
                }
                PrsRule::Serial { host, graft } => {
                    self.pair.get(host)?;
                    match self.pair.composition(host) {
                        None => return Err(PrsError::HostNotComposite(i, host.clone())),
                        Some(c) if c.op != CompositionOp::Serial => {
                            return Err(PrsError::HostNotSerial(i, host.clone()))
                        }
                        _ => {}
                    }
                    if self.pair.get(graft)?.is_circular() {
                        return Err(PrsError::GraftCircular(i, graft.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn pattern(&self, id: &PatternId) -> &Pattern {
        self.pair.get(id).expect("validated rule set")
    }

    pub fn start_rules(&self) -> impl Iterator<Item = (usize, &PrsRule)> {
        self.rules.iter().enumerate().filter(|(_, r)| r.is_start())
    }

    pub fn rule_set(&self) -> BTreeSet<PrsRule> {
        self.rules.iter().cloned().collect()
    }

    /// Same rules over the same compositions, up to pattern isomorphism.
    pub fn same_rules(&self, other: &Prs) -> bool {
        if self.rule_set() != other.rule_set() {
            return false;
        }
        self.rules.iter().filter_map(|r| r.host()).all(|h| {
            self.pair.composition(h) == other.pair.composition(h)
        })
    }

    /// Rules present in exactly one of the two rule sets.
    pub fn rule_difference(&self, other: &Prs) -> (Vec<PrsRule>, Vec<PrsRule>) {
        let a = self.rule_set();
        let b = other.rule_set();
        (a.difference(&b).cloned().collect(), b.difference(&a).cloned().collect())
    }

    /// The sub-rule-set containing only `used` rule indices, with patterns
    /// pruned to those still reachable through rules and compositions.
    pub fn restrict(&self, used: &BTreeSet<usize>) -> Prs {
        let rules: Vec<PrsRule> =
            self.rules.iter().enumerate().filter(|(i, _)| used.contains(i)).map(|(_, r)| r.clone()).collect();
        let mut keep = PatternPair::new();
        let mut todo: Vec<PatternId> = Vec::new();
        for r in &rules {
            todo.push(r.grafted().clone());
            if let Some(h) = r.host() {
                todo.push(h.clone());
            }
        }
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        while let Some(id) = todo.pop() {
            if !seen.insert(id.clone()) {
                continue;
            }
            order.push(id.clone());
            if let Some(c) = self.pair.composition(&id) {
                todo.push(c.left.clone());
                todo.push(c.right.clone());
            }
        }
        for id in &order {
            if !self.pair.is_composite(id) {
                keep.add(self.pattern(id).clone());
            }
        }
        // operands before composites
        let mut pending: Vec<&PatternId> = order.iter().filter(|id| self.pair.is_composite(id)).collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|id| {
                let c = self.pair.composition(id).expect("composite");
                if keep.contains(&c.left) && keep.contains(&c.right) {
                    keep.add_composite(&c.left, c.op, &c.right).expect("recomposition");
                    false
                } else {
                    true
                }
            });
            assert!(pending.len() < before, "cyclic composition table");
        }
        let names = self.names.iter().filter(|(k, _)| keep.contains(k)).map(|(k, v)| (k.clone(), v.clone())).collect();
        Prs { alphabet: self.alphabet.clone(), pair: keep, rules, names }
    }

    pub fn name(&self, id: &PatternId) -> String {
        self.names.get(id).cloned().unwrap_or_else(|| self.pattern(id).describe())
    }

    pub fn rule_to_string(&self, r: &PrsRule) -> String {
        match r {
            PrsRule::Start { pattern } => format!("⊥ → {}", self.name(pattern)),
            PrsRule::Circular { host, graft } => {
                format!("{} →c {} ∘= {}", self.name(host), self.composition_string(host), self.name(graft))
            }
            PrsRule::Serial { host, graft } => {
                format!("{} →s {} ∘= {}", self.name(host), self.composition_string(host), self.name(graft))
            }
        }
    }

    fn composition_string(&self, host: &PatternId) -> String {
        match self.pair.composition(host) {
            Some(c) => format!("({} {} {})", self.name(&c.left), c.op, self.name(&c.right)),
            None => self.name(host),
        }
    }
}

impl fmt::Display for Prs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{}", self.rule_to_string(r))?;
        }
        Ok(())
    }
}

/// Incremental construction of a rule set with named patterns.
#[derive(Debug, Default)]
pub struct PrsBuilder {
    pair: PatternPair,
    names: BTreeMap<PatternId, String>,
    rules: Vec<PrsRule>,
    alphabet: BTreeSet<Token>,
}

impl PrsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pattern(&mut self, name: &str, p: Pattern) -> PatternId {
        let id = self.pair.add(p);
        self.names.entry(id.clone()).or_insert_with(|| name.to_string());
        id
    }

    /// Shorthand for a non-circular pattern accepting one literal.
    pub fn literal(&mut self, name: &str, s: &str) -> PatternId {
        self.pattern(name, Pattern::literal(s))
    }

    pub fn compose(&mut self, name: &str, a: &PatternId, op: CompositionOp, b: &PatternId) -> PatternId {
        let id = self.pair.add_composite(a, op, b).expect("valid composition");
        self.names.entry(id.clone()).or_insert_with(|| name.to_string());
        id
    }

    pub fn start(&mut self, p: &PatternId) -> &mut Self {
        self.rules.push(PrsRule::Start { pattern: p.clone() });
        self
    }

    pub fn circular(&mut self, host: &PatternId, graft: &PatternId) -> &mut Self {
        self.rules.push(PrsRule::Circular { host: host.clone(), graft: graft.clone() });
        self
    }

    pub fn serial(&mut self, host: &PatternId, graft: &PatternId) -> &mut Self {
        self.rules.push(PrsRule::Serial { host: host.clone(), graft: graft.clone() });
        self
    }

    pub fn alphabet(&mut self, tokens: impl IntoIterator<Item = Token>) -> &mut Self {
        self.alphabet.extend(tokens);
        self
    }

    pub fn build(&self) -> Result<Prs, PrsError> {
        Ok(Prs::new(self.pair.clone(), self.rules.clone(), self.alphabet.iter().cloned())?
            .with_names(self.names.clone()))
    }
}

/// Frequently used example rule sets.
pub mod examples {
    use super::*;

    /// `x^n y^n` for two literals.
    pub fn xnyn(x: &str, y: &str) -> Prs {
        let mut b = PrsBuilder::new();
        let px = b.literal("p1", x);
        let py = b.literal("p2", y);
        let pxy = b.compose("p1∘p2", &px, CompositionOp::Serial, &py);
        b.start(&pxy).serial(&pxy, &pxy);
        b.build().expect("valid rule set")
    }

    /// `a^n b^n`.
    pub fn r_ab() -> Prs {
        xnyn("a", "b")
    }

    /// Dyck language over the given bracket pairs.
    pub fn dyck(pairs: &[(&str, &str)]) -> Prs {
        let mut b = PrsBuilder::new();
        let mut loops = Vec::new();
        for (i, (l, r)) in pairs.iter().enumerate() {
            let pl = b.literal(&format!("{l}"), l);
            let pr = b.literal(&format!("{r}"), r);
            let c = b.compose(&format!("c{}", i + 1), &pl, CompositionOp::Circular, &pr);
            loops.push(c);
        }
        for c in &loops {
            b.start(c);
        }
        for h in &loops {
            for g in &loops {
                b.circular(h, g);
            }
        }
        b.build().expect("valid rule set")
    }

    /// Dyck-2 over `()` and `[]`.
    pub fn r_dyck2() -> Prs {
        dyck(&[("(", ")"), ("[", "]")])
    }

    /// Palindrome attempt over `0`/`1`: its self-grafts are never applicable.
    pub fn r_pal() -> Prs {
        let mut b = PrsBuilder::new();
        let p0 = b.literal("p0", "0");
        let p1 = b.literal("p1", "1");
        let p00 = b.compose("p00", &p0, CompositionOp::Serial, &p0);
        let p11 = b.compose("p11", &p1, CompositionOp::Serial, &p1);
        b.start(&p00).start(&p11);
        b.serial(&p00, &p00).serial(&p00, &p11).serial(&p11, &p00).serial(&p11, &p11);
        b.build().expect("valid rule set")
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;

    #[test]
    fn validation_errors() {
        let mut b = PrsBuilder::new();
        let a = b.literal("a", "a");
        let bb = b.literal("b", "b");
        let ab = b.compose("ab", &a, CompositionOp::Serial, &bb);
        let c = b.compose("c", &a, CompositionOp::Circular, &bb);
        b.start(&ab).serial(&a, &ab);
        assert!(matches!(b.build(), Err(PrsError::HostNotComposite(1, _))));
        let mut b2 = PrsBuilder::new();
        let a = b2.literal("a", "a");
        let bb = b2.literal("b", "b");
        let ab = b2.compose("ab", &a, CompositionOp::Serial, &bb);
        b2.start(&ab).circular(&ab, &ab);
        assert!(matches!(b2.build(), Err(PrsError::GraftNotCircular(1, _))));
        let _ = c;
        let p = PrsBuilder::new().build();
        assert_eq!(p, Err(PrsError::NoStartRule));
    }

    #[test]
    fn json_round_trip() {
        for prs in [r_ab(), r_dyck2()] {
            let s = serde_json::to_string(&prs).unwrap();
            let back: Prs = serde_json::from_str(&s).unwrap();
            assert_eq!(back, prs);
        }
    }

    #[test]
    fn restrict_keeps_operands() {
        let d = r_dyck2();
        let r = d.restrict(&BTreeSet::from([0, 2]));
        assert_eq!(r.rules.len(), 2);
        assert!(r.validate().is_ok());
        assert_eq!(r.pair.len(), 3);
    }

    #[test]
    fn display_uses_names() {
        let s = r_ab().to_string();
        assert!(s.contains("⊥ → p1∘p2"));
        assert!(s.contains("→s"));
    }
}
