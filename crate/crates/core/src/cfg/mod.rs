//! Context-free grammars: representation, text format, and structural
//! comparisons. Conversion from rule sets lives in [`convert`], parsing in
//! [`earley`], sampling in [`sample`] and clean-up in [`simplify`].

pub mod convert;
pub mod earley;
pub mod sample;
pub mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::automata::Token;

pub use convert::{pattern_to_grammar, prs_to_cfg, prs_to_cfg_general, ConvertError};
pub use earley::{cfg_membership, Chart, Parser};
pub use sample::{sample, SampleError, WeightedCfg};
pub use simplify::simplify;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symbol {
    T(Token),
    N(String),
}

impl Symbol {
    pub fn t(s: &str) -> Symbol {
        Symbol::T(Token::new(s))
    }

    pub fn n(s: &str) -> Symbol {
        Symbol::N(s.to_string())
    }

    pub fn as_nonterminal(&self) -> Option<&str> {
        match self {
            Symbol::N(n) => Some(n),
            Symbol::T(_) => None,
        }
    }
}

/// Where a production came from: a rule of the rule set, or the
/// right-linear fragment describing a single pattern.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProductionKind {
    #[default]
    Rule,
    Fragment,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
    #[serde(default, skip_serializing_if = "is_rule")]
    pub kind: ProductionKind,
    /// Counts towards nesting depth when bounding derivations.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub deepens: bool,
}

fn is_rule(k: &ProductionKind) -> bool {
    *k == ProductionKind::Rule
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("line {0}: expected `LHS ::= alternatives`")]
    Syntax(usize),
    #[error("grammar has no productions")]
    Empty,
    #[error("json: {0}")]
    Json(String),
}

/// A context-free grammar. Productions are unique by (lhs, rhs) and keep
/// insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub start: String,
    #[serde(default)]
    pub terminals: BTreeSet<Token>,
    productions: Vec<Production>,
}

impl Cfg {
    pub fn new(start: &str) -> Cfg {
        Cfg { start: start.to_string(), terminals: BTreeSet::new(), productions: Vec::new() }
    }

    /// Adds a production unless one with the same sides exists. Returns
    /// whether it was added.
    pub fn add(&mut self, lhs: &str, rhs: Vec<Symbol>, kind: ProductionKind) -> bool {
        self.push(Production { lhs: lhs.to_string(), rhs, kind, deepens: false })
    }

    pub fn push(&mut self, p: Production) -> bool {
        if self.productions.iter().any(|q| q.lhs == p.lhs && q.rhs == p.rhs) {
            return false;
        }
        for s in &p.rhs {
            if let Symbol::T(t) = s {
                self.terminals.insert(t.clone());
            }
        }
        self.productions.push(p);
        true
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn productions_of<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Production> + 'a {
        self.productions.iter().filter(move |p| p.lhs == lhs)
    }

    pub fn nonterminals(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::from([self.start.clone()]);
        for p in &self.productions {
            out.insert(p.lhs.clone());
            for s in &p.rhs {
                if let Symbol::N(n) = s {
                    out.insert(n.clone());
                }
            }
        }
        out
    }

    /// Nonterminals in order of first appearance, start first.
    pub fn nonterminal_order(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |n: &str, out: &mut Vec<String>| {
            if seen.insert(n.to_string()) {
                out.push(n.to_string());
            }
        };
        push(&self.start, &mut out);
        for p in &self.productions {
            push(&p.lhs, &mut out);
        }
        for p in &self.productions {
            for s in &p.rhs {
                if let Symbol::N(n) = s {
                    push(n, &mut out);
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.productions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.productions.is_empty()
    }

    /// Productions that came from rules, dropping pattern fragments.
    pub fn rule_productions(&self) -> impl Iterator<Item = &Production> {
        self.productions.iter().filter(|p| p.kind == ProductionKind::Rule)
    }

    /// Rebuilds the grammar from a list of productions, keeping start and
    /// declared terminals.
    pub fn with_productions(&self, productions: impl IntoIterator<Item = Production>) -> Cfg {
        let mut g = Cfg { start: self.start.clone(), terminals: self.terminals.clone(), productions: Vec::new() };
        for p in productions {
            g.push(p);
        }
        g
    }

    pub fn rename(&self, f: impl Fn(&str) -> String) -> Cfg {
        let ps = self.productions.iter().map(|p| Production {
            lhs: f(&p.lhs),
            rhs: p
                .rhs
                .iter()
                .map(|s| match s {
                    Symbol::N(n) => Symbol::N(f(n)),
                    t => t.clone(),
                })
                .collect(),
            kind: p.kind,
            deepens: p.deepens,
        });
        let mut g = self.with_productions(ps);
        g.start = f(&self.start);
        g
    }

    /// Renders `LHS ::= alt | alt` lines, start symbol first. Terminals
    /// that clash with nonterminal names are quoted; ε is written `ε`.
    pub fn to_text(&self) -> String {
        let nts = self.nonterminals();
        let mut out = String::new();
        for lhs in self.nonterminal_order() {
            let alts: Vec<String> = self
                .productions_of(&lhs)
                .map(|p| {
                    if p.rhs.is_empty() {
                        return "ε".to_string();
                    }
                    p.rhs
                        .iter()
                        .map(|s| match s {
                            Symbol::N(n) => n.clone(),
                            Symbol::T(t) => {
                                let l = t.as_str();
                                if nts.contains(l) || l == "|" || l == "::=" || l == "ε" || l.contains(char::is_whitespace) || l.starts_with('\'') {
                                    format!("'{}'", l.replace('\'', "\\'"))
                                } else {
                                    l.to_string()
                                }
                            }
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            if !alts.is_empty() {
                out.push_str(&format!("{lhs} ::= {}\n", alts.join(" | ")));
            }
        }
        out
    }

    /// Parses the text format. A bare symbol is a nonterminal iff it
    /// appears on some left-hand side; quoted symbols are terminals. The
    /// first left-hand side is the start symbol. `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Cfg, GrammarError> {
        let mut rows: Vec<(String, Vec<Vec<(String, bool)>>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, rhs) = line.split_once("::=").ok_or(GrammarError::Syntax(i + 1))?;
            let lhs = lhs.trim();
            if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                return Err(GrammarError::Syntax(i + 1));
            }
            let alts = split_alternatives(rhs)
                .into_iter()
                .map(|alt| {
                    let toks = tokenize(&alt);
                    if toks.len() == 1 && toks[0] == ("ε".to_string(), false) {
                        Vec::new()
                    } else {
                        toks
                    }
                })
                .collect();
            rows.push((lhs.to_string(), alts));
        }
        let first = rows.first().ok_or(GrammarError::Empty)?.0.clone();
        let lhs_set: BTreeSet<String> = rows.iter().map(|(l, _)| l.clone()).collect();
        let mut g = Cfg::new(&first);
        for (lhs, alts) in rows {
            for alt in alts {
                let rhs = alt
                    .into_iter()
                    .map(|(s, quoted)| if !quoted && lhs_set.contains(&s) { Symbol::N(s) } else { Symbol::T(Token::new(&s)) })
                    .collect();
                g.add(&lhs, rhs, ProductionKind::Rule);
            }
        }
        Ok(g)
    }

    /// (nonterminal count, production count) over the rule-derived part
    /// of the grammar, counting every nonterminal those productions
    /// mention, including the start symbols of pattern fragments.
    pub fn size(&self) -> (usize, usize) {
        let mut nts = BTreeSet::new();
        let mut count = 0;
        for p in self.rule_productions() {
            count += 1;
            nts.insert(p.lhs.as_str());
            for s in &p.rhs {
                if let Symbol::N(n) = s {
                    nts.insert(n.as_str());
                }
            }
        }
        (nts.len(), count)
    }

    /// The rule-derived productions with the given nonterminals replaced by
    /// terminal strings.
    pub fn skeleton(&self, literals: &BTreeMap<String, Vec<Token>>) -> Cfg {
        let ps = self.rule_productions().map(|p| Production {
            lhs: p.lhs.clone(),
            rhs: p
                .rhs
                .iter()
                .flat_map(|s| match s {
                    Symbol::N(n) => match literals.get(n) {
                        Some(w) => w.iter().map(|t| Symbol::T(t.clone())).collect::<Vec<_>>(),
                        None => vec![s.clone()],
                    },
                    t => vec![t.clone()],
                })
                .collect(),
            kind: ProductionKind::Rule,
            deepens: p.deepens,
        });
        let mut g = Cfg::new(&self.start);
        for p in ps {
            g.push(p);
        }
        g
    }
}

fn split_alternatives(rhs: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote = false;
    let mut chars = rhs.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if quote => {
                cur.push(c);
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            '\'' => {
                quote = !quote;
                cur.push(c);
            }
            '|' if !quote => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

fn tokenize(alt: &str) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let mut chars = alt.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '\'' {
            chars.next();
            let mut s = String::new();
            while let Some(c) = chars.next() {
                match c {
                    '\\' => {
                        if let Some(n) = chars.next() {
                            s.push(n);
                        }
                    }
                    '\'' => break,
                    _ => s.push(c),
                }
            }
            out.push((s, true));
        } else {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                s.push(c);
                chars.next();
            }
            out.push((s, false));
        }
    }
    out
}

impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// A renaming of nonterminals mapping `a` onto `b` exactly (same start,
/// same production set), if one exists.
pub fn isomorphic(a: &Cfg, b: &Cfg) -> Option<BTreeMap<String, String>> {
    let na = a.nonterminal_order();
    let nb = b.nonterminal_order();
    if na.len() != nb.len() || a.len() != b.len() {
        return None;
    }
    let sig = |g: &Cfg, n: &str| {
        let mut v: Vec<(usize, Vec<Option<Token>>)> = g
            .productions_of(n)
            .map(|p| {
                (
                    p.rhs.len(),
                    p.rhs.iter().map(|s| if let Symbol::T(t) = s { Some(t.clone()) } else { None }).collect(),
                )
            })
            .collect();
        v.sort();
        v
    };
    let target: BTreeSet<(String, Vec<Symbol>)> =
        b.productions().iter().map(|p| (p.lhs.clone(), p.rhs.clone())).collect();
    let sa: Vec<_> = na.iter().map(|n| sig(a, n)).collect();
    let sb: Vec<_> = nb.iter().map(|n| sig(b, n)).collect();
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    let mut used = vec![false; nb.len()];

    fn consistent(a: &Cfg, map: &BTreeMap<String, String>, target: &BTreeSet<(String, Vec<Symbol>)>) -> bool {
        a.productions().iter().all(|p| {
            let Some(l) = map.get(&p.lhs) else { return true };
            let mut rhs = Vec::new();
            for s in &p.rhs {
                match s {
                    Symbol::N(n) => match map.get(n) {
                        Some(m) => rhs.push(Symbol::N(m.clone())),
                        None => return true,
                    },
                    t => rhs.push(t.clone()),
                }
            }
            target.contains(&(l.clone(), rhs))
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        a: &Cfg,
        na: &[String],
        nb: &[String],
        sa: &[Vec<(usize, Vec<Option<Token>>)>],
        sb: &[Vec<(usize, Vec<Option<Token>>)>],
        map: &mut BTreeMap<String, String>,
        used: &mut [bool],
        target: &BTreeSet<(String, Vec<Symbol>)>,
    ) -> bool {
        if i == na.len() {
            return true;
        }
        for j in 0..nb.len() {
            if used[j] || sa[i] != sb[j] || (i == 0) != (j == 0) {
                continue;
            }
            map.insert(na[i].clone(), nb[j].clone());
            used[j] = true;
            if consistent(a, map, target) && go(i + 1, a, na, nb, sa, sb, map, used, target) {
                return true;
            }
            used[j] = false;
            map.remove(&na[i]);
        }
        false
    }

    if go(0, a, &na, &nb, &sa, &sb, &mut map, &mut used, &target) {
        Some(map)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const DYCK2_LISTING: &str = "S ::= SC
SC ::= SC SC | P1 | P2
P1 ::= ( P1C )
P1C ::= P1C P1C | P1 | P2
P2 ::= [ P2C ]
P2C ::= P2C P2C | P1 | P2
";

    #[test]
    fn text_round_trip() {
        let g = Cfg::parse_text(DYCK2_LISTING).unwrap();
        assert_eq!(g.start, "S");
        assert_eq!(g.size(), (6, 12));
        let again = Cfg::parse_text(&g.to_text()).unwrap();
        assert_eq!(again, g);
        assert_eq!(g.terminals.len(), 4);
    }

    #[test]
    fn quoting_and_epsilon() {
        let g = Cfg::parse_text("S ::= 'S' S | ε").unwrap();
        assert_eq!(g.productions()[0].rhs, vec![Symbol::t("S"), Symbol::n("S")]);
        assert!(g.productions()[1].rhs.is_empty());
        assert_eq!(Cfg::parse_text(&g.to_text()).unwrap(), g);
        assert!(matches!(Cfg::parse_text("S -> a"), Err(GrammarError::Syntax(1))));
    }

    #[test]
    fn single_production_size() {
        let g = Cfg::parse_text("S ::= a").unwrap();
        assert_eq!(g.size(), (1, 1));
    }

    #[test]
    fn isomorphism_up_to_renaming() {
        let a = Cfg::parse_text(DYCK2_LISTING).unwrap();
        let b = a.rename(|n| format!("X{n}"));
        assert!(isomorphic(&a, &b).is_some());
        let c = Cfg::parse_text("S ::= P1 | P2\nP1 ::= ( P2 )\nP2 ::= [ P1 ]").unwrap();
        assert!(isomorphic(&a, &c).is_none());
        let d = Cfg::parse_text("S ::= Q | R\nR ::= ( Q )\nQ ::= [ R ]").unwrap();
        assert!(isomorphic(&c, &d).is_some());
    }

    #[test]
    fn json_round_trip() {
        let g = Cfg::parse_text(DYCK2_LISTING).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<Cfg>(&s).unwrap(), g);
    }
}
