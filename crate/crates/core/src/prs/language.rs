//! Bounded PRS languages.
//!
//! The words of length at most `K` in the language of a rule set are
//! collected by saturating generated automata: every graft that can still
//! add a word of length at most `K`, or that enables operand instances at
//! existing states, is applied. Grafts at different join states commute,
//! and distances between existing states never shrink under grafting, so a
//! graft that is useless now stays useless. The only real choices are
//! between grafts whose first tokens clash at the same join state, and
//! between non-circular start rules; the search branches on those.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use super::engine::{Application, EnabledDfa, EngineError, Site, Step};
use super::{Prs, PrsRule};
use crate::automata::{Dfa, StateId, Token, Word};
use crate::patterns::PatternId;

pub const DEFAULT_APPLICATION_BUDGET: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Member,
    NonMember,
    /// The application budget ran out before a decision.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LanguageError {
    #[error("application budget of {0} exhausted")]
    Budget(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// The words of length at most `max_len` of a rule set's language, held as
/// a union of saturated automata.
#[derive(Debug, Clone)]
pub struct BoundedLanguage {
    pub max_len: usize,
    pub leaves: Vec<Dfa>,
}

impl BoundedLanguage {
    pub fn contains(&self, w: &[Token]) -> bool {
        w.len() <= self.max_len && self.leaves.iter().any(|d| d.accepts(w))
    }

    /// Whether `prefix` extends to a word of the bounded language.
    pub fn viable_prefix(&self, prefix: &[Token]) -> bool {
        if prefix.len() > self.max_len {
            return false;
        }
        let budget = self.max_len - prefix.len();
        self.leaves.iter().any(|d| {
            d.run_from(d.initial(), prefix)
                .is_some_and(|q| d.shortest_word_from(q, |r| d.is_accepting(r)).is_some_and(|w| w.len() <= budget))
        })
    }

    /// Every word, materialized.
    pub fn words(&self) -> BTreeSet<Word> {
        let mut out = BTreeSet::new();
        self.visit(|w| {
            out.insert(w.to_vec());
        });
        out
    }

    /// Calls `f` on every word; a word accepted by several leaves is
    /// visited once per leaf.
    pub fn visit(&self, mut f: impl FnMut(&[Token])) {
        for d in &self.leaves {
            let dist = d.distance_to_accept();
            let mut w = Vec::new();
            visit_rec(d, d.initial(), &dist, self.max_len, &mut w, &mut f);
        }
    }

    pub fn len(&self) -> usize {
        self.words().len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.iter().all(|d| d.is_empty_language())
    }
}

fn visit_rec(
    d: &Dfa,
    q: StateId,
    dist: &HashMap<StateId, usize>,
    max_len: usize,
    w: &mut Word,
    f: &mut impl FnMut(&[Token]),
) {
    if d.is_accepting(q) {
        f(w);
    }
    for (t, r) in d.outgoing(q) {
        if dist.get(&r).is_some_and(|&k| w.len() + 1 + k <= max_len) {
            w.push(t.clone());
            visit_rec(d, r, dist, max_len, w, f);
            w.pop();
        }
    }
}

/// Search state: a working automaton plus distances from the initial
/// state and to the final state for every working state.
#[derive(Clone)]
struct Node {
    ed: EnabledDfa,
    from_start: HashMap<StateId, usize>,
    to_final: HashMap<StateId, usize>,
    excluded: BTreeSet<StepKey>,
    depth: usize,
}

/// What a graft does, independent of the host instance it is applied
/// through: the grafted pattern, the join state, the continuation tokens of
/// a serial graft, and the composite operands it newly enables. Candidates
/// with equal effects lead to identical automata.
type Effect = (PatternId, StateId, Option<BTreeSet<Token>>, Vec<(PatternId, StateId)>);

/// A rule at an enabled instance, identified independently of its index.
type StepKey = (usize, String, StateId);

#[derive(Debug, Clone)]
struct Candidate {
    step: Step,
    /// This step and every other step with the same effect.
    keys: Vec<StepKey>,
    join: StateId,
    first: BTreeSet<Token>,
    productive: bool,
    enables: bool,
}

impl Node {
    fn new(ed: EnabledDfa) -> Node {
        let d = &ed.dfa;
        let to_final = d.distance_to_accept();
        let mut from_start = HashMap::new();
        let order = d.bfs_order();
        from_start.insert(d.initial(), 0);
        for q in order {
            let k = from_start[&q];
            for (_, r) in d.outgoing(q) {
                from_start.entry(r).or_insert(k + 1);
            }
        }
        Node { ed, from_start, to_final, excluded: BTreeSet::new(), depth: 0 }
    }

    fn candidates(&self, prs: &Prs, shortest: &[usize], max_len: usize) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = Vec::new();
        let mut effects: Vec<Effect> = Vec::new();
        let inf = usize::MAX / 4;
        for step in self.ed.applicable(prs) {
            let r = &prs.rules[step.rule];
            let g = prs.pattern(r.grafted());
            let (effect, step_key, join, direct) = match step.site {
                Site::Initial => {
                    let q0 = self.ed.dfa.initial();
                    let len = shortest[step.rule] + self.to_final.get(&q0).copied().unwrap_or(inf);
                    ((r.grafted().clone(), q0, None, Vec::new()), (step.rule, "⊥".to_string(), q0), q0, len)
                }
                Site::Instance(k) => {
                    let inst = &self.ed.enabled[k];
                    let comp = prs.pair.composition(&inst.pattern).expect("enabled instances are composite");
                    let mut enables = Vec::new();
                    if prs.pair.is_composite(&comp.left) && !self.is_enabled(&comp.left, inst.initial) {
                        enables.push((comp.left.clone(), inst.initial));
                    }
                    if prs.pair.is_composite(&comp.right) && !self.is_enabled(&comp.right, inst.join) {
                        enables.push((comp.right.clone(), inst.join));
                    }
                    let before = self.from_start.get(&inst.join).copied().unwrap_or(inf);
                    let (after, continuation) = match r {
                        PrsRule::Serial { .. } => {
                            let cont = prs.pattern(&comp.right).first_tokens();
                            let after = 1 + cont
                                .iter()
                                .filter_map(|t| self.ed.dfa.next(inst.join, t))
                                .filter_map(|s| self.to_final.get(&s).copied())
                                .min()
                                .unwrap_or(inf);
                            (after, Some(cont))
                        }
                        _ => (self.to_final.get(&inst.join).copied().unwrap_or(inf), None),
                    };
                    let len = before + shortest[step.rule] + after;
                    let key = (step.rule, inst.pattern.as_str().to_string(), inst.initial);
                    ((r.grafted().clone(), inst.join, continuation, enables), key, inst.join, len)
                }
            };
            if self.excluded.contains(&step_key) {
                continue;
            }
            if let Some(i) = effects.iter().position(|e| *e == effect) {
                out[i].keys.push(step_key);
                continue;
            }
            let enables = !effect.3.is_empty();
            effects.push(effect);
            out.push(Candidate { step, keys: vec![step_key], join, first: g.first_tokens(), productive: direct <= max_len, enables });
        }
        out
    }

    fn is_enabled(&self, p: &PatternId, q: StateId) -> bool {
        self.ed.enabled.iter().any(|e| &e.pattern == p && e.initial == q)
    }

    fn apply(&mut self, prs: &Prs, step: Step) -> Result<(), EngineError> {
        let app = self.ed.apply(prs, step)?.clone();
        self.update_distances(&app);
        self.depth += 1;
        Ok(())
    }

    /// New states are reachable only through the graft head, and leave
    /// the graft only through its exit, so their distances follow from the
    /// graft's own transitions.
    fn update_distances(&mut self, app: &Application) {
        let new: BTreeSet<StateId> = app.new_states.iter().copied().collect();
        let d = &self.ed.dfa;
        let base = self.from_start[&app.head];
        let mut queue = std::collections::VecDeque::from([(app.head, base)]);
        while let Some((q, k)) = queue.pop_front() {
            for (_, r) in d.outgoing(q) {
                if new.contains(&r) && !self.from_start.contains_key(&r) {
                    self.from_start.insert(r, k + 1);
                    queue.push_back((r, k + 1));
                }
            }
        }
        // Dijkstra over new states with existing states as weighted sinks.
        let mut heap = BinaryHeap::new();
        let mut rev: HashMap<StateId, Vec<StateId>> = HashMap::new();
        for &s in &new {
            for (_, r) in d.outgoing(s) {
                rev.entry(r).or_default().push(s);
                if !new.contains(&r) {
                    if let Some(&k) = self.to_final.get(&r) {
                        heap.push(Reverse((k + 1, s)));
                    }
                }
            }
        }
        while let Some(Reverse((k, s))) = heap.pop() {
            if self.to_final.contains_key(&s) {
                continue;
            }
            self.to_final.insert(s, k);
            for &p in rev.get(&s).map(|v| v.as_slice()).unwrap_or(&[]) {
                if new.contains(&p) && !self.to_final.contains_key(&p) {
                    heap.push(Reverse((k + 1, p)));
                }
            }
        }
    }
}

struct Search<'a> {
    prs: &'a Prs,
    max_len: usize,
    budget: usize,
    spent: usize,
    leaves: Vec<Dfa>,
    target: Option<&'a [Token]>,
    found: bool,
    /// Length of the shortest word of each rule's grafted pattern.
    shortest: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, mut node: Node) -> Result<(), LanguageError> {
        loop {
            if let Some(w) = self.target {
                if node.ed.dfa.accepts(w) {
                    self.found = true;
                    return Ok(());
                }
            }
            let cands = node.candidates(self.prs, &self.shortest, self.max_len);
            let useful: Vec<&Candidate> = cands.iter().filter(|c| c.productive || c.enables).collect();
            if useful.is_empty() {
                self.leaves.push(node.ed.output());
                return Ok(());
            }
            if self.spent >= self.budget {
                return Err(LanguageError::Budget(self.budget));
            }
            self.spent += 1;
            let clashes = |c: &Candidate| {
                cands.iter().any(|o| o.step != c.step && o.join == c.join && o.productive && !o.first.is_disjoint(&c.first))
            };
            // Clash-free productive grafts can be applied without loss. Those
            // that enable no operand touch only their join state and fresh
            // states, so they commute and go in one batch.
            let free: Vec<&Candidate> = useful.iter().copied().filter(|c| c.productive && !clashes(c)).collect();
            if free.iter().any(|c| !c.enables) {
                for c in free.iter().filter(|c| !c.enables) {
                    if node.ed.check(self.prs, c.step).is_ok() {
                        node.apply(self.prs, c.step)?;
                    }
                }
                continue;
            }
            if let Some(c) = free.first() {
                node.apply(self.prs, c.step)?;
                continue;
            }
            // Operands can be enabled by any graft at the instance; pick one
            // that blocks no productive graft.
            if let Some(c) = useful.iter().find(|c| !c.productive && !clashes(c)) {
                node.apply(self.prs, c.step)?;
                continue;
            }
            let c = (*useful[0]).clone();
            let mut with = node.clone();
            with.apply(self.prs, c.step)?;
            self.run(with)?;
            if self.found {
                return Ok(());
            }
            node.excluded.extend(c.keys.iter().cloned());
        }
    }
}

fn search(prs: &Prs, max_len: usize, budget: usize, target: Option<&[Token]>) -> Result<(Vec<Dfa>, bool), LanguageError> {
    let shortest = prs.rules.iter().map(|r| prs.pattern(r.grafted()).shortest_word().len()).collect();
    let mut s = Search { prs, max_len, budget, spent: 0, leaves: Vec::new(), target, found: false, shortest };
    for (i, _) in prs.start_rules() {
        let ed = EnabledDfa::start(prs, i)?;
        s.run(Node::new(ed))?;
        if s.found {
            break;
        }
    }
    let mut leaves = s.leaves;
    leaves.sort_by_cached_key(|d| serde_json::to_string(d).unwrap_or_default());
    leaves.dedup();
    Ok((leaves, s.found))
}

/// All words of length at most `max_len` generated by the rule set.
pub fn prs_language(prs: &Prs, max_len: usize, budget: usize) -> Result<BoundedLanguage, LanguageError> {
    let (leaves, _) = search(prs, max_len, budget, None)?;
    Ok(BoundedLanguage { max_len, leaves })
}

/// Whether some automaton generated by the rule set accepts `w`, exploring
/// at most `budget` rule applications.
pub fn prs_membership(prs: &Prs, w: &[Token], budget: usize) -> Membership {
    match search(prs, w.len(), budget, Some(w)) {
        Ok((_, true)) => Membership::Member,
        Ok((leaves, false)) => {
            if leaves.iter().any(|d| d.accepts(w)) {
                Membership::Member
            } else {
                Membership::NonMember
            }
        }
        Err(_) => Membership::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prs::examples::*;

    fn w(s: &str) -> Word {
        Token::chars(s)
    }

    #[test]
    fn r_ab_membership() {
        let prs = r_ab();
        assert_eq!(prs_membership(&prs, &w("aaabbb"), 4), Membership::Member);
        assert_eq!(prs_membership(&prs, &w("aab"), 100), Membership::NonMember);
        assert_eq!(prs_membership(&prs, &w("aaaaabbbbb"), 2), Membership::Unknown);
    }

    #[test]
    fn dyck2_membership() {
        let prs = r_dyck2();
        assert_eq!(prs_membership(&prs, &w("([])"), 3), Membership::Member);
        assert_eq!(prs_membership(&prs, &w("()[]"), 3), Membership::Member);
        assert_eq!(prs_membership(&prs, &w("([)]"), 100), Membership::NonMember);
        assert_eq!(prs_membership(&prs, &[], 1), Membership::Member);
    }

    /// Bracket-matching oracle for Dyck-2.
    fn balanced(w: &[Token]) -> bool {
        let mut st = Vec::new();
        for t in w {
            match t.as_str() {
                "(" | "[" => st.push(t.as_str().to_string()),
                ")" => {
                    if st.pop().as_deref() != Some("(") {
                        return false;
                    }
                }
                "]" => {
                    if st.pop().as_deref() != Some("[") {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        st.is_empty()
    }

    #[test]
    fn dyck2_bounded_language_matches_oracle() {
        let lang = prs_language(&r_dyck2(), 8, DEFAULT_APPLICATION_BUDGET).unwrap();
        let words = lang.words();
        let sigma = Token::chars("()[]");
        let mut all = vec![Vec::new()];
        let mut expected = BTreeSet::new();
        for _ in 0..8 {
            let mut next = Vec::new();
            for p in &all {
                for t in &sigma {
                    let mut q: Word = p.clone();
                    q.push(t.clone());
                    if balanced(&q) {
                        expected.insert(q.clone());
                    }
                    next.push(q);
                }
            }
            all = next;
        }
        expected.insert(Vec::new());
        assert_eq!(words, expected);
        assert!(lang.viable_prefix(&w("([")));
        assert!(!lang.viable_prefix(&w("((((((")));
    }

    #[test]
    fn r_ab_bounded_language() {
        let lang = prs_language(&r_ab(), 9, 1000).unwrap();
        let expect: BTreeSet<Word> = (1..=4).map(|j| w(&("a".repeat(j) + &"b".repeat(j)))).collect();
        assert_eq!(lang.words(), expect);
    }

    #[test]
    fn palindrome_rules_branch() {
        let lang = prs_language(&r_pal(), 6, 10_000).unwrap();
        assert!(lang.contains(&w("0110")));
        assert!(lang.contains(&w("1001")));
        assert!(!lang.contains(&w("0000")));
    }
}
