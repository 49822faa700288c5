//! Grammars from patterns and rule sets.
//!
//! Every pattern `p` gets a right-linear fragment with start symbol
//! `Z_<id>` generating the nonempty words of `L(p)`. Rule productions are
//! then layered on top: `S`, `C_S`, `E_S` for start rules and `C_<id>`,
//! `E_<id>` for grafts hosted by `p`.

use std::collections::{BTreeMap, BTreeSet};

use super::{Cfg, Production, ProductionKind, Symbol};
use crate::automata::Token;
use crate::patterns::{Pattern, PatternId};
use crate::prs::{Prs, PrsRule};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConvertError {
    #[error("pattern {0} hosts both circular and serial grafts; use the general construction")]
    MixedHost(PatternId),
    #[error("start rules mix circular and non-circular patterns; use the general construction")]
    MixedStart,
}

pub fn z(id: &PatternId) -> String {
    format!("Z_{id}")
}

pub fn c(id: &PatternId) -> String {
    format!("C_{id}")
}

pub fn e(id: &PatternId) -> String {
    format!("E_{id}")
}

fn n(s: String) -> Symbol {
    Symbol::N(s)
}

/// Right-linear grammar for the nonempty words of `L(p)`, rooted at
/// `Z_<id>`; state `k` of the canonical pattern becomes `Z_<id>_<k>`.
pub fn pattern_to_grammar(p: &Pattern) -> Cfg {
    let mut g = Cfg::new(&z(p.id()));
    add_fragment(&mut g, p);
    g
}

fn add_fragment(g: &mut Cfg, p: &Pattern) {
    let name = |q: crate::automata::StateId| {
        if q == p.initial() {
            z(p.id())
        } else {
            format!("Z_{}_{}", p.id(), q.0)
        }
    };
    for (s, t, r) in p.dfa().transitions() {
        if p.dfa().outgoing(r).next().is_some() {
            g.add(&name(s), vec![Symbol::T(t.clone()), n(name(r))], ProductionKind::Fragment);
        }
        if r == p.exit() {
            g.add(&name(s), vec![Symbol::T(t)], ProductionKind::Fragment);
        }
    }
    // A circular pattern's state 0 doubles as the exit, so the production
    // `Z ::= t Z` above already loops; nothing else is needed.
}

fn add_rule(g: &mut Cfg, lhs: &str, rhs: Vec<Symbol>) {
    g.add(lhs, rhs, ProductionKind::Rule);
}

fn operands(prs: &Prs, host: &PatternId) -> (PatternId, PatternId) {
    let comp = prs.pair.composition(host).expect("validated host");
    (comp.left.clone(), comp.right.clone())
}

fn add_fragments(g: &mut Cfg, prs: &Prs) {
    for p in prs.pair.patterns() {
        add_fragment(g, p);
    }
    g.terminals.extend(prs.alphabet.iter().cloned());
}

/// Grammar for a rule set in which no pattern hosts both circular and
/// serial grafts and start patterns are all circular or all non-circular.
pub fn prs_to_cfg(prs: &Prs) -> Result<Cfg, ConvertError> {
    let mut kinds: BTreeMap<&PatternId, BTreeSet<bool>> = BTreeMap::new();
    for r in &prs.rules {
        match r {
            PrsRule::Circular { host, .. } => kinds.entry(host).or_default().insert(true),
            PrsRule::Serial { host, .. } => kinds.entry(host).or_default().insert(false),
            PrsRule::Start { .. } => false,
        };
    }
    if let Some((h, _)) = kinds.iter().find(|(_, k)| k.len() > 1) {
        return Err(ConvertError::MixedHost((*h).clone()));
    }
    let starts: BTreeSet<bool> = prs.start_rules().map(|(_, r)| prs.pattern(r.grafted()).is_circular()).collect();
    if starts.len() > 1 {
        return Err(ConvertError::MixedStart);
    }
    let mut g = Cfg::new("S");
    for r in &prs.rules {
        match r {
            PrsRule::Start { pattern } => {
                if prs.pattern(pattern).is_circular() {
                    add_rule(&mut g, "S", vec![Symbol::n("C_S")]);
                    add_rule(&mut g, "C_S", vec![Symbol::n("C_S"), Symbol::n("C_S")]);
                    add_rule(&mut g, "C_S", vec![n(z(pattern))]);
                } else {
                    add_rule(&mut g, "S", vec![n(z(pattern))]);
                }
            }
            PrsRule::Serial { host, graft } => {
                let (l, r) = operands(prs, host);
                add_rule(&mut g, &z(host), vec![n(z(&l)), n(z(graft)), n(z(&r))]);
            }
            PrsRule::Circular { host, graft } => {
                let (l, r) = operands(prs, host);
                add_rule(&mut g, &z(host), vec![n(z(&l)), n(c(host)), n(z(&r))]);
                add_rule(&mut g, &c(host), vec![n(c(host)), n(c(host))]);
                add_rule(&mut g, &c(host), vec![n(z(graft))]);
            }
        }
    }
    add_fragments(&mut g, prs);
    Ok(g)
}

/// Grammar for any rule set: a hosted pattern may take circular grafts
/// followed by one final graft of either kind.
pub fn prs_to_cfg_general(prs: &Prs) -> Cfg {
    let mut g = Cfg::new("S");
    add_rule(&mut g, "S", vec![Symbol::n("E_S")]);
    add_rule(&mut g, "S", vec![Symbol::n("C_S"), Symbol::n("E_S")]);
    add_rule(&mut g, "C_S", vec![Symbol::n("C_S"), Symbol::n("C_S")]);
    for r in &prs.rules {
        match r {
            PrsRule::Start { pattern } => {
                add_rule(&mut g, "E_S", vec![n(z(pattern))]);
                if prs.pattern(pattern).is_circular() {
                    add_rule(&mut g, "C_S", vec![n(z(pattern))]);
                }
            }
            PrsRule::Serial { host, graft } | PrsRule::Circular { host, graft } => {
                let (l, rt) = operands(prs, host);
                add_rule(&mut g, &z(host), vec![n(z(&l)), n(e(host)), n(z(&rt))]);
                add_rule(&mut g, &e(host), vec![n(z(graft))]);
                if matches!(r, PrsRule::Circular { .. }) {
                    add_rule(&mut g, &z(host), vec![n(z(&l)), n(c(host)), n(e(host)), n(z(&rt))]);
                    add_rule(&mut g, &c(host), vec![n(c(host)), n(c(host))]);
                    add_rule(&mut g, &c(host), vec![n(z(graft))]);
                }
            }
        }
    }
    add_fragments(&mut g, prs);
    g
}

/// For base patterns accepting exactly one word, the fragment start symbol
/// and that word. Used to display rule productions with terminals in place
/// of single-word patterns.
pub fn base_literals(prs: &Prs) -> BTreeMap<String, Vec<Token>> {
    let mut out = BTreeMap::new();
    for p in prs.pair.patterns() {
        if prs.pair.is_composite(p.id()) || p.is_circular() {
            continue;
        }
        // A word of length at least n implies a pumpable cycle, so words up
        // to 2n decide whether the language is a singleton.
        if let Ok(words) = p.dfa().enumerate_language_with_budget(2 * p.num_states(), 10_000) {
            if words.len() == 1 {
                out.insert(z(p.id()), words.into_iter().next().expect("one word"));
            }
        }
    }
    out
}

/// Replaces pattern-id nonterminal names with the rule set's display names
/// where available.
pub fn with_display_names(g: &Cfg, prs: &Prs) -> Cfg {
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    for (id, name) in &prs.names {
        let clean: String = name.chars().map(|ch| if ch.is_alphanumeric() { ch } else { '_' }).collect();
        names.insert(z(id), format!("Z_{clean}"));
        names.insert(c(id), format!("C_{clean}"));
        names.insert(e(id), format!("E_{clean}"));
    }
    let taken: BTreeSet<String> = names.values().cloned().collect();
    if taken.len() != names.len() {
        return g.clone();
    }
    g.rename(|s| {
        if let Some(m) = names.get(s) {
            return m.clone();
        }
        for (from, to) in &names {
            if let Some(rest) = s.strip_prefix(from.as_str()) {
                if rest.starts_with('_') {
                    return format!("{to}{rest}");
                }
            }
        }
        s.to_string()
    })
}

/// Productions of `g` whose left-hand side belongs to the rule layer, in
/// the `LHS ::= ...` text format.
pub fn rule_layer_text(g: &Cfg) -> String {
    let ps: Vec<Production> = g.rule_productions().cloned().collect();
    let mut h = Cfg::new(&g.start);
    for p in ps {
        h.push(p);
    }
    h.to_text()
}
