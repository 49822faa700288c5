//! Rule application on enabled automata and DFA-sequence generation.
//!
//! The working automaton keeps stable (fresh) state ids so enabled
//! instances can be tracked across applications; emitted automata are
//! minimized and canonically numbered.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Prs, PrsRule};
use crate::automata::{Dfa, StateId, Token};
use crate::patterns::{check_instance_pair, find_instance, CompositionOp, Pattern, PatternError, PatternId, PatternPair};

/// Where a rule is applied: at the initial state (start rules) or at the
/// join state of the enabled instance with the given index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    Initial,
    Instance(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub rule: usize,
    pub site: Site,
}

impl Step {
    pub fn initial(rule: usize) -> Step {
        Step { rule, site: Site::Initial }
    }

    pub fn at(rule: usize, instance: usize) -> Step {
        Step { rule, site: Site::Instance(instance) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    pub steps: Vec<Step>,
}

impl Schedule {
    pub fn new(steps: Vec<Step>) -> Schedule {
        Schedule { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("rule {rule} is not applicable at {site:?}: {reason}")]
    InapplicableRule { rule: usize, site: Site, reason: String },
    #[error("no rule {0}")]
    UnknownRule(usize),
    #[error("the first step must apply a start rule at the initial state")]
    NotStarted,
    #[error("no applicable rule remains after {0} automata")]
    Exhausted(usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnabledInstance {
    pub pattern: PatternId,
    pub initial: StateId,
    pub join: StateId,
}

/// One recorded graft, in working-automaton state ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Application {
    /// `None` for spurious grafts injected as noise.
    pub rule: Option<usize>,
    pub pattern: PatternId,
    pub head: StateId,
    pub exit: StateId,
    pub new_states: Vec<StateId>,
    /// The host instance, for grafts at a join state.
    pub host: Option<EnabledInstance>,
}

/// A working automaton together with its enabled composite instances.
#[derive(Debug, Clone)]
pub struct EnabledDfa {
    pub dfa: Dfa,
    pub final_state: StateId,
    pub enabled: Vec<EnabledInstance>,
    pub history: Vec<Application>,
}

fn inapplicable(step: Step, reason: impl Into<String>) -> EngineError {
    EngineError::InapplicableRule { rule: step.rule, site: step.site, reason: reason.into() }
}

impl EnabledDfa {
    /// The first automaton, created by the start rule `rule`.
    pub fn start(prs: &Prs, rule: usize) -> Result<EnabledDfa, EngineError> {
        let step = Step::initial(rule);
        let r = prs.rules.get(rule).ok_or(EngineError::UnknownRule(rule))?;
        let PrsRule::Start { pattern } = r else {
            return Err(inapplicable(step, "not a start rule"));
        };
        let p = prs.pair.get(pattern)?;
        let (placed, _) = p.instantiate();
        let mut dfa = placed.dfa.clone();
        dfa.extend_alphabet(prs.alphabet.iter().cloned());
        let q0 = dfa.initial();
        let mut ed = EnabledDfa { dfa, final_state: placed.exit, enabled: Vec::new(), history: Vec::new() };
        ed.history.push(Application {
            rule: Some(rule),
            pattern: pattern.clone(),
            head: q0,
            exit: placed.exit,
            new_states: placed.states().iter().copied().collect(),
            host: None,
        });
        ed.enable(&prs.pair, pattern, q0)?;
        Ok(ed)
    }

    /// Tokens leaving `q` in the working automaton. The working automaton
    /// is trim, so these are exactly the live tokens.
    fn def(&self, q: StateId) -> BTreeSet<Token> {
        self.dfa.outgoing(q).map(|(t, _)| t.clone()).collect()
    }

    fn enable(&mut self, pair: &PatternPair, p: &PatternId, q: StateId) -> Result<(), EngineError> {
        if !pair.is_composite(p) || self.enabled.iter().any(|e| &e.pattern == p && e.initial == q) {
            return Ok(());
        }
        let join = pair
            .join_state(&self.dfa, p, q)
            .ok_or_else(|| EngineError::Invariant(format!("no instance of {p} at {q}")))?;
        self.enabled.push(EnabledInstance { pattern: p.clone(), initial: q, join });
        Ok(())
    }

    /// Whether `step` can be applied now, with the reason if not.
    pub fn check(&self, prs: &Prs, step: Step) -> Result<(), EngineError> {
        let r = prs.rules.get(step.rule).ok_or(EngineError::UnknownRule(step.rule))?;
        match (r, step.site) {
            (PrsRule::Start { pattern }, Site::Initial) => {
                let p = prs.pair.get(pattern)?;
                if !p.is_circular() {
                    return Err(inapplicable(step, "only circular patterns extend an existing automaton"));
                }
                if !self.def(self.dfa.initial()).is_disjoint(&p.first_tokens()) {
                    return Err(inapplicable(step, "initial state already defines the pattern's first tokens"));
                }
                Ok(())
            }
            (PrsRule::Start { .. }, _) => Err(inapplicable(step, "start rules apply at the initial state")),
            (_, Site::Initial) => Err(inapplicable(step, "graft rules apply at an enabled instance")),
            (PrsRule::Circular { host, graft } | PrsRule::Serial { host, graft }, Site::Instance(k)) => {
                let inst = self
                    .enabled
                    .get(k)
                    .ok_or_else(|| inapplicable(step, format!("no enabled instance {k}")))?;
                if &inst.pattern != host {
                    return Err(inapplicable(step, "instance is of a different pattern"));
                }
                let g = prs.pair.get(graft)?;
                if !self.def(inst.join).is_disjoint(&g.first_tokens()) {
                    return Err(inapplicable(step, "join state already defines the graft's first tokens"));
                }
                Ok(())
            }
        }
    }

    /// All applicable steps, ordered by site then rule. Agrees with
    /// [`EnabledDfa::check`].
    pub fn applicable(&self, prs: &Prs) -> Vec<Step> {
        let first: Vec<Option<(bool, BTreeSet<Token>)>> = prs
            .rules
            .iter()
            .map(|r| prs.pair.get(r.grafted()).ok().map(|p| (p.is_circular(), p.first_tokens())))
            .collect();
        let mut out = Vec::new();
        let q0 = self.def(self.dfa.initial());
        for (i, r) in prs.rules.iter().enumerate() {
            if let (true, Some((true, f))) = (r.is_start(), &first[i]) {
                if q0.is_disjoint(f) {
                    out.push(Step::initial(i));
                }
            }
        }
        for (k, inst) in self.enabled.iter().enumerate() {
            let mut def: Option<BTreeSet<Token>> = None;
            for (i, r) in prs.rules.iter().enumerate() {
                if r.host() != Some(&inst.pattern) {
                    continue;
                }
                let Some((_, f)) = &first[i] else { continue };
                if def.get_or_insert_with(|| self.def(inst.join)).is_disjoint(f) {
                    out.push(Step::at(i, k));
                }
            }
        }
        out
    }

    pub fn apply(&mut self, prs: &Prs, step: Step) -> Result<&Application, EngineError> {
        self.check(prs, step)?;
        match (&prs.rules[step.rule], step.site) {
            (PrsRule::Start { pattern }, _) => {
                let q0 = self.dfa.initial();
                let app = self.graft_circular(prs.pair.get(pattern)?, q0, Some(step.rule), None)?;
                self.history.push(app);
                self.enable(&prs.pair, pattern, q0)?;
            }
            (PrsRule::Circular { host, graft }, Site::Instance(k)) => {
                let inst = self.enabled[k].clone();
                let app = self.graft_circular(prs.pair.get(graft)?, inst.join, Some(step.rule), Some(inst.clone()))?;
                self.history.push(app);
                self.enable_operands(&prs.pair, host, graft, &inst)?;
            }
            (PrsRule::Serial { host, graft }, Site::Instance(k)) => {
                let inst = self.enabled[k].clone();
                let right = &prs.pair.composition(host).expect("validated host").right;
                let continuation = prs.pair.get(right)?.first_tokens();
                let app = self.graft_serial(
                    prs.pair.get(graft)?,
                    inst.join,
                    &continuation,
                    Some(step.rule),
                    Some(inst.clone()),
                )?;
                self.history.push(app);
                self.enable_operands(&prs.pair, host, graft, &inst)?;
            }
            _ => unreachable!("checked above"),
        }
        Ok(self.history.last().expect("just pushed"))
    }

    fn enable_operands(
        &mut self,
        pair: &PatternPair,
        host: &PatternId,
        graft: &PatternId,
        inst: &EnabledInstance,
    ) -> Result<(), EngineError> {
        let c = pair.composition(host).expect("validated host").clone();
        self.enable(pair, &c.left, inst.initial)?;
        self.enable(pair, &c.right, inst.join)?;
        self.enable(pair, graft, inst.join)?;
        Ok(())
    }

    /// Merges the initial (and exit) state of circular `p` into `at`.
    fn graft_circular(
        &mut self,
        p: &Pattern,
        at: StateId,
        rule: Option<usize>,
        host: Option<EnabledInstance>,
    ) -> Result<Application, EngineError> {
        let (placed, _) = p.instantiate();
        let sub = |q: StateId| if q == placed.initial() { at } else { q };
        for (a, t, b) in placed.dfa.transitions() {
            self.dfa
                .add_transition(sub(a), t, sub(b))
                .map_err(|e| EngineError::Invariant(e.to_string()))?;
        }
        let new_states = placed.states().iter().copied().filter(|&q| q != placed.initial()).collect();
        Ok(Application { rule, pattern: p.id().clone(), head: at, exit: at, new_states, host })
    }

    /// Merges the initial state of non-circular `p` into `at` and copies
    /// the transitions of `at` on `continuation` to the graft's exit.
    fn graft_serial(
        &mut self,
        p: &Pattern,
        at: StateId,
        continuation: &BTreeSet<Token>,
        rule: Option<usize>,
        host: Option<EnabledInstance>,
    ) -> Result<Application, EngineError> {
        let connecting: Vec<(Token, StateId)> = continuation
            .iter()
            .filter_map(|t| self.dfa.next(at, t).map(|r| (t.clone(), r)))
            .collect();
        let (placed, _) = p.instantiate();
        let sub = |q: StateId| if q == placed.initial() { at } else { q };
        for (a, t, b) in placed.dfa.transitions() {
            self.dfa
                .add_transition(sub(a), t, sub(b))
                .map_err(|e| EngineError::Invariant(e.to_string()))?;
        }
        for (t, r) in connecting {
            self.dfa
                .add_transition(placed.exit, t, r)
                .map_err(|e| EngineError::Invariant(e.to_string()))?;
        }
        let new_states = placed.states().iter().copied().filter(|&q| q != placed.initial()).collect();
        Ok(Application { rule, pattern: p.id().clone(), head: at, exit: placed.exit, new_states, host })
    }

    /// The emitted automaton: minimized and canonically numbered.
    pub fn output(&self) -> Dfa {
        self.dfa.minimize()
    }

    /// Grafts a pattern that no rule produces at the join state of a
    /// randomly chosen enabled instance, without enabling anything. The
    /// pattern avoids the first tokens of every rule that could later
    /// graft at that join, and every pattern in `avoid`. Returns `None`
    /// when nothing is enabled.
    pub fn inject_spurious<R: Rng>(
        &mut self,
        prs: &Prs,
        rng: &mut R,
        avoid: &BTreeSet<PatternId>,
    ) -> Option<PatternId> {
        if self.enabled.is_empty() {
            return None;
        }
        let k = rng.gen_range(0..self.enabled.len());
        let inst = self.enabled[k].clone();
        let mut forbidden = self.def(inst.join);
        for r in &prs.rules {
            forbidden.extend(prs.pattern(r.grafted()).first_tokens());
        }
        let noise = Token::new("#");
        let mut firsts: Vec<Token> = prs.alphabet.iter().filter(|t| !forbidden.contains(*t)).cloned().collect();
        let mut seconds: Vec<Token> = prs.alphabet.iter().cloned().collect();
        if !forbidden.contains(&noise) {
            firsts.push(noise.clone());
        }
        seconds.push(noise);
        // Match the host's kind so the noise looks like a legal graft.
        let comp = prs.pair.composition(&inst.pattern).expect("enabled instances are composite");
        let circular = comp.op == CompositionOp::Circular;
        let make = |a: &Token, b: &Token| {
            if circular {
                Pattern::new(
                    StateId(0),
                    StateId(0),
                    [(StateId(0), a.clone(), StateId(1)), (StateId(1), b.clone(), StateId(0))],
                )
            } else {
                Pattern::word(&[a.clone(), b.clone()])
            }
            .expect("two-token pattern")
        };
        let candidates: Vec<Pattern> = firsts
            .iter()
            .flat_map(|a| seconds.iter().map(move |b| make(a, b)))
            .filter(|p| !avoid.contains(p.id()))
            .collect();
        let p = candidates.choose(rng)?.clone();
        let app = if circular {
            self.graft_circular(&p, inst.join, None, Some(inst)).ok()?
        } else {
            let continuation = prs.pattern(&comp.right).first_tokens();
            self.graft_serial(&p, inst.join, &continuation, None, Some(inst)).ok()?
        };
        self.dfa.extend_alphabet(p.alphabet().iter().cloned());
        self.history.push(app);
        Some(p.id().clone())
    }

    /// Checks the structural invariants: one accepting state, every
    /// enabled instance present with its recorded join, distinct joins,
    /// and the edge/containment dichotomy between enabled instances.
    pub fn check_invariants(&self, pair: &PatternPair) -> Result<(), EngineError> {
        if self.dfa.accepting().len() != 1 || !self.dfa.is_accepting(self.final_state) {
            return Err(EngineError::Invariant("accepting set changed".into()));
        }
        let mut instances = Vec::new();
        let mut joins = BTreeSet::new();
        for e in &self.enabled {
            let p = pair.get(&e.pattern)?;
            let inst = find_instance(&self.dfa, p, e.initial)
                .ok_or_else(|| EngineError::Invariant(format!("enabled {} at {} not found", e.pattern, e.initial)))?;
            if pair.join_state(&self.dfa, &e.pattern, e.initial) != Some(e.join) {
                return Err(EngineError::Invariant(format!("join of {} at {} moved", e.pattern, e.initial)));
            }
            if inst.is_edge(e.join) {
                return Err(EngineError::Invariant("join state is an edge state".into()));
            }
            if !joins.insert(e.join) {
                return Err(EngineError::Invariant(format!("two enabled instances share join {}", e.join)));
            }
            instances.push(inst);
        }
        for i in 0..instances.len() {
            for j in i + 1..instances.len() {
                check_instance_pair(pair, &self.dfa, &instances[i], &instances[j]).map_err(EngineError::Invariant)?;
            }
        }
        Ok(())
    }
}

/// How to drive a generation run.
#[derive(Debug, Clone)]
pub enum Generation {
    /// Apply exactly these steps.
    Schedule(Schedule),
    /// Draw `steps` automata, choosing uniformly among applicable
    /// (rule, site) pairs.
    Random { seed: u64, steps: usize },
    /// Like `Random`, but prefers the least-used rules until every rule
    /// applicable in the run has been used `min_uses` times.
    Covering { seed: u64, min_uses: usize, max_steps: usize },
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub dfas: Vec<Dfa>,
    pub schedule: Schedule,
    pub final_state: EnabledDfa,
    /// For each emitted automaton after the first, the applications that
    /// produced it from its predecessor.
    pub applications: Vec<Vec<Application>>,
}

impl Generated {
    /// Indices of the rules used at least once.
    pub fn used_rules(&self) -> BTreeSet<usize> {
        self.schedule.steps.iter().map(|s| s.rule).collect()
    }
}

/// Generates a sequence of minimized automata. Invariants are checked
/// after every application.
pub fn generate_sequence(prs: &Prs, how: &Generation) -> Result<Generated, EngineError> {
    match how {
        Generation::Schedule(s) => run_schedule(prs, s),
        Generation::Random { seed, steps } => run_random(prs, *seed, *steps, None),
        Generation::Covering { seed, min_uses, max_steps } => {
            run_random(prs, *seed, *max_steps, Some(*min_uses))
        }
    }
}

fn run_schedule(prs: &Prs, s: &Schedule) -> Result<Generated, EngineError> {
    let first = *s.steps.first().ok_or(EngineError::NotStarted)?;
    if first.site != Site::Initial {
        return Err(EngineError::NotStarted);
    }
    let mut ed = EnabledDfa::start(prs, first.rule)?;
    ed.check_invariants(&prs.pair)?;
    let mut dfas = vec![ed.output()];
    let mut applications = Vec::new();
    for &step in &s.steps[1..] {
        let app = ed.apply(prs, step)?.clone();
        ed.check_invariants(&prs.pair)?;
        dfas.push(ed.output());
        applications.push(vec![app]);
    }
    Ok(Generated { dfas, schedule: s.clone(), final_state: ed, applications })
}

fn run_random(prs: &Prs, seed: u64, steps: usize, min_uses: Option<usize>) -> Result<Generated, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<usize> = prs.start_rules().map(|(i, _)| i).collect();
    let first = *starts.choose(&mut rng).ok_or(EngineError::NotStarted)?;
    let mut ed = EnabledDfa::start(prs, first)?;
    ed.check_invariants(&prs.pair)?;
    let mut dfas = vec![ed.output()];
    let mut schedule = vec![Step::initial(first)];
    let mut applications = Vec::new();
    let mut uses: BTreeMap<usize, usize> = BTreeMap::from([(first, 1)]);
    while dfas.len() < steps.max(1) {
        let options = ed.applicable(prs);
        if options.is_empty() {
            if min_uses.is_some() {
                break;
            }
            return Err(EngineError::Exhausted(dfas.len()));
        }
        let step = match min_uses {
            None => *options.choose(&mut rng).expect("nonempty"),
            Some(k) => {
                let least = options.iter().map(|s| uses.get(&s.rule).copied().unwrap_or(0)).min().expect("nonempty");
                // Stop once every rule that ever became applicable has k uses.
                if least >= k && prs.rules.iter().enumerate().all(|(i, r)| r.is_start() || uses.get(&i).copied().unwrap_or(0) >= k) {
                    break;
                }
                let pool: Vec<Step> =
                    options.into_iter().filter(|s| uses.get(&s.rule).copied().unwrap_or(0) == least).collect();
                *pool.choose(&mut rng).expect("nonempty")
            }
        };
        let app = ed.apply(prs, step)?.clone();
        ed.check_invariants(&prs.pair)?;
        *uses.entry(step.rule).or_default() += 1;
        schedule.push(step);
        dfas.push(ed.output());
        applications.push(vec![app]);
    }
    Ok(Generated { dfas, schedule: Schedule::new(schedule), final_state: ed, applications })
}

/// Generates a sequence and grafts `spurious` noise patterns at random
/// steps. Each spurious pattern appears in exactly one step's delta.
/// Returns the sequence and the indices of the noisy automata.
pub fn generate_with_noise(
    prs: &Prs,
    schedule: &Schedule,
    spurious: usize,
    seed: u64,
) -> Result<(Vec<Dfa>, BTreeSet<usize>), EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = *schedule.steps.first().ok_or(EngineError::NotStarted)?;
    let mut ed = EnabledDfa::start(prs, first.rule)?;
    let mut dfas = vec![ed.output()];
    let n = schedule.steps.len();
    let mut noisy_at: BTreeSet<usize> = BTreeSet::new();
    let candidates: Vec<usize> = (2..n).collect();
    for &i in candidates.choose_multiple(&mut rng, spurious.min(candidates.len())) {
        noisy_at.insert(i);
    }
    let mut noisy = BTreeSet::new();
    let mut used = BTreeSet::new();
    for (i, &step) in schedule.steps.iter().enumerate().skip(1) {
        ed.apply(prs, step)?;
        dfas.push(ed.output());
        if noisy_at.contains(&i) {
            if let Some(id) = ed.inject_spurious(prs, &mut rng, &used) {
                used.insert(id);
                noisy.insert(dfas.len());
                dfas.push(ed.output());
            }
        }
    }
    Ok((dfas, noisy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::Token;
    use crate::prs::examples::*;

    fn words(d: &Dfa, k: usize) -> BTreeSet<String> {
        d.enumerate_language(k).unwrap().iter().map(|w| crate::automata::format_word(w)).collect()
    }

    #[test]
    fn r_ab_sequence() {
        let prs = r_ab();
        let s = Schedule::new(vec![Step::initial(0), Step::at(1, 0), Step::at(1, 1)]);
        let g = generate_sequence(&prs, &Generation::Schedule(s)).unwrap();
        assert_eq!(g.dfas.len(), 3);
        for (i, d) in g.dfas.iter().enumerate() {
            let expect: BTreeSet<String> =
                (1..=i + 1).map(|j| "a".repeat(j) + &"b".repeat(j)).collect();
            assert_eq!(words(d, 12), expect);
        }
    }

    #[test]
    fn serial_graft_adds_connecting_transition() {
        let prs = r_ab();
        let mut ed = EnabledDfa::start(&prs, 0).unwrap();
        let app = ed.apply(&prs, Step::at(1, 0)).unwrap().clone();
        let out: Vec<_> = ed.dfa.outgoing(app.exit).map(|(t, _)| t.clone()).collect();
        assert_eq!(out, vec![Token::new("b")]);
    }

    #[test]
    fn dyck_start_on_existing() {
        let prs = r_dyck2();
        let mut ed = EnabledDfa::start(&prs, 0).unwrap();
        assert!(ed.dfa.accepts(&[]));
        ed.apply(&prs, Step::initial(1)).unwrap();
        assert!(ed.dfa.accepts(&Token::chars("[]()")));
        let again = ed.apply(&prs, Step::initial(1));
        assert!(matches!(again, Err(EngineError::InapplicableRule { .. })));
        assert!(matches!(ed.apply(&prs, Step::initial(0)), Err(EngineError::InapplicableRule { .. })));
    }

    #[test]
    fn dyck_nesting() {
        let prs = r_dyck2();
        let mut ed = EnabledDfa::start(&prs, 0).unwrap();
        // rule 2: c1 hosts c1
        ed.apply(&prs, Step::at(2, 0)).unwrap();
        assert!(ed.dfa.accepts(&Token::chars("(())")));
        assert!(ed.dfa.accepts(&Token::chars("(()())()")));
        assert!(!ed.dfa.accepts(&Token::chars("((()))")));
        ed.check_invariants(&prs.pair).unwrap();
    }

    #[test]
    fn random_runs_keep_invariants_and_grow() {
        for prs in [r_ab(), r_dyck2()] {
            let g = generate_sequence(&prs, &Generation::Random { seed: 3, steps: 8 }).unwrap();
            for w in g.dfas.windows(2) {
                assert!(words(&w[0], 10).is_subset(&words(&w[1], 10)));
                assert_eq!(w[1].accepting().len(), 1);
            }
        }
    }

    #[test]
    fn self_graft_is_never_applicable() {
        let prs = r_pal();
        let mut ed = EnabledDfa::start(&prs, 0).unwrap();
        // rule 2 grafts 00 onto the join of 00, which already reads 0
        assert!(matches!(ed.apply(&prs, Step::at(2, 0)), Err(EngineError::InapplicableRule { .. })));
        ed.apply(&prs, Step::at(3, 0)).unwrap();
    }

    #[test]
    fn covering_uses_each_graft_rule() {
        let prs = r_dyck2();
        let g = generate_sequence(&prs, &Generation::Covering { seed: 1, min_uses: 2, max_steps: 60 }).unwrap();
        let mut uses = BTreeMap::new();
        for s in &g.schedule.steps {
            *uses.entry(s.rule).or_insert(0) += 1;
        }
        for i in 2..6 {
            assert!(uses.get(&i).copied().unwrap_or(0) >= 2, "{uses:?}");
        }
    }

    #[test]
    fn noise_is_recorded() {
        let prs = r_ab();
        let s = Schedule::new((0..8).map(|i| if i == 0 { Step::initial(0) } else { Step::at(1, i - 1) }).collect());
        let (dfas, noisy) = generate_with_noise(&prs, &s, 1, 7).unwrap();
        assert_eq!(noisy.len(), 1);
        assert_eq!(dfas.len(), 9);
    }
}
