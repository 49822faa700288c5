//! The experiment languages L1–L15.
//!
//! Entries are JSON documents under `data/corpus`, compiled into the crate
//! so that [`load`] works from any directory; [`load_file`] reads an entry
//! from disk.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::automata::{parse_word, Token, Word};
use crate::cfg::{Cfg, Production, WeightedCfg};
use crate::learner::mark_bracket_depth;
use crate::patterns::{CompositionOp, Pattern, PatternId};
use crate::prs::{Prs, PrsBuilder};
use crate::versioned;

pub const SCHEMA: &str = "prsynth.corpus";

const FILES: [(&str, &str); 15] = [
    ("L1", include_str!("../data/corpus/L1.json")),
    ("L2", include_str!("../data/corpus/L2.json")),
    ("L3", include_str!("../data/corpus/L3.json")),
    ("L4", include_str!("../data/corpus/L4.json")),
    ("L5", include_str!("../data/corpus/L5.json")),
    ("L6", include_str!("../data/corpus/L6.json")),
    ("L7", include_str!("../data/corpus/L7.json")),
    ("L8", include_str!("../data/corpus/L8.json")),
    ("L9", include_str!("../data/corpus/L9.json")),
    ("L10", include_str!("../data/corpus/L10.json")),
    ("L11", include_str!("../data/corpus/L11.json")),
    ("L12", include_str!("../data/corpus/L12.json")),
    ("L13", include_str!("../data/corpus/L13.json")),
    ("L14", include_str!("../data/corpus/L14.json")),
    ("L15", include_str!("../data/corpus/L15.json")),
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown corpus entry `{0}`")]
    Unknown(String),
    #[error("{name}: {reason}")]
    Invalid { name: String, reason: String },
    #[error(transparent)]
    Json(#[from] versioned::VersionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Partial,
    Incorrect,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Correct => "Correct",
            Verdict::Partial => "Partial",
            Verdict::Incorrect => "Incorrect",
        })
    }
}

/// Which productions count towards nesting depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthRule {
    /// Bracket productions (see [`mark_bracket_depth`]).
    Brackets,
    /// Every production: derivation tree height.
    Height,
    /// The listed productions, written `LHS ::= rhs`.
    Productions(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub depth: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Examples {
    #[serde(rename = "in")]
    pub members: Vec<String>,
    #[serde(rename = "out")]
    pub non_members: Vec<String>,
}

/// How a ground-truth pattern is built. Exactly one field is set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<Vec<String>>,
    #[serde(default, rename = "loop", skip_serializing_if = "Option::is_none")]
    pub loop_of: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serial: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circular: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleSpec {
    Start { start: String },
    Circular { host: String, circular: String },
    Serial { host: String, serial: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrsSpec {
    pub patterns: Vec<PatternSpec>,
    pub rules: Vec<RuleSpec>,
}

impl PrsSpec {
    pub fn build(&self) -> Result<Prs, String> {
        let mut b = PrsBuilder::new();
        let mut ids: BTreeMap<&str, PatternId> = BTreeMap::new();
        let tokens = |v: &Vec<String>| v.iter().map(|s| Token::new(s)).collect::<Vec<_>>();
        for p in &self.patterns {
            let get = |n: &String| ids.get(n.as_str()).cloned().ok_or(format!("pattern `{n}` used before definition"));
            let id = match (&p.word, &p.choice, &p.loop_of, &p.serial, &p.circular) {
                (Some(w), None, None, None, None) => b.literal(&p.name, w),
                (None, Some(c), None, None, None) => {
                    b.pattern(&p.name, Pattern::choice(&tokens(c)).map_err(|e| e.to_string())?)
                }
                (None, None, Some(l), None, None) => {
                    b.pattern(&p.name, Pattern::loop_of(&tokens(l)).map_err(|e| e.to_string())?)
                }
                (None, None, None, Some([l, r]), None) => b.compose(&p.name, &get(l)?, CompositionOp::Serial, &get(r)?),
                (None, None, None, None, Some([l, r])) => {
                    b.compose(&p.name, &get(l)?, CompositionOp::Circular, &get(r)?)
                }
                _ => return Err(format!("pattern `{}` needs exactly one constructor", p.name)),
            };
            ids.insert(&p.name, id);
        }
        let get = |n: &String| ids.get(n.as_str()).cloned().ok_or(format!("unknown pattern `{n}`"));
        for r in &self.rules {
            match r {
                RuleSpec::Start { start } => b.start(&get(start)?),
                RuleSpec::Circular { host, circular } => b.circular(&get(host)?, &get(circular)?),
                RuleSpec::Serial { host, serial } => b.serial(&get(host)?, &get(serial)?),
            };
        }
        b.build().map_err(|e| e.to_string())
    }
}

/// One corpus document as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub name: String,
    pub description: String,
    pub grammar: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub depth: DepthRule,
    pub truncation: Truncation,
    pub expected: Verdict,
    #[serde(default)]
    pub examples: Examples,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prs: Option<PrsSpec>,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub description: String,
    /// Grammar with depth-counting productions marked.
    pub grammar: WeightedCfg,
    pub ground_truth: Option<Prs>,
    pub truncation: Truncation,
    pub expected: Verdict,
    pub members: Vec<Word>,
    pub non_members: Vec<Word>,
    pub source: CorpusFile,
}

impl CorpusEntry {
    pub fn from_file(f: CorpusFile) -> Result<CorpusEntry, CorpusError> {
        let invalid = |reason: String| CorpusError::Invalid { name: f.name.clone(), reason };
        let g = Cfg::parse_text(&f.grammar).map_err(|e| invalid(e.to_string()))?;
        let g = match &f.depth {
            DepthRule::Brackets => mark_bracket_depth(&g),
            DepthRule::Height => g,
            DepthRule::Productions(list) => {
                let marked: Vec<Cfg> = list
                    .iter()
                    .map(|s| Cfg::parse_text(s).map_err(|e| invalid(format!("depth production `{s}`: {e}"))))
                    .collect::<Result<_, _>>()?;
                let is_marked = |p: &Production| {
                    marked.iter().any(|m| {
                        let q = &m.productions()[0];
                        q.lhs == p.lhs
                            && q.rhs.len() == p.rhs.len()
                            && q.rhs.iter().zip(&p.rhs).all(|(a, b)| symbol_text(a) == symbol_text(b))
                    })
                };
                g.with_productions(g.productions().iter().map(|p| Production { deepens: is_marked(p), ..p.clone() }))
            }
        };
        let grammar = match &f.weights {
            Some(w) => WeightedCfg::new(g, w.clone()).map_err(|e| invalid(e.to_string()))?,
            None => WeightedCfg::uniform(g),
        };
        let ground_truth = f.prs.as_ref().map(|s| s.build().map_err(invalid)).transpose()?;
        Ok(CorpusEntry {
            name: f.name.clone(),
            description: f.description.clone(),
            grammar,
            ground_truth,
            truncation: f.truncation,
            expected: f.expected,
            members: f.examples.members.iter().map(|s| parse_word(s)).collect(),
            non_members: f.examples.non_members.iter().map(|s| parse_word(s)).collect(),
            source: f,
        })
    }

    pub fn cfg(&self) -> &Cfg {
        &self.grammar.cfg
    }

    pub fn alphabet(&self) -> Vec<Token> {
        self.cfg().terminals.iter().cloned().collect()
    }
}

fn symbol_text(s: &crate::cfg::Symbol) -> &str {
    match s {
        crate::cfg::Symbol::N(n) => n,
        crate::cfg::Symbol::T(t) => t.as_str(),
    }
}

pub fn names() -> Vec<&'static str> {
    FILES.iter().map(|(n, _)| *n).collect()
}

pub fn parse(text: &str) -> Result<CorpusEntry, CorpusError> {
    CorpusEntry::from_file(versioned::from_json(SCHEMA, text)?)
}

pub fn load(name: &str) -> Result<CorpusEntry, CorpusError> {
    let (_, text) = FILES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| CorpusError::Unknown(name.to_string()))?;
    parse(text)
}

pub fn load_file(path: &Path) -> Result<CorpusEntry, CorpusError> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn load_all() -> Result<Vec<CorpusEntry>, CorpusError> {
    names().into_iter().map(load).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::earley::Parser;

    #[test]
    fn all_entries_load() {
        let all = load_all().unwrap();
        assert_eq!(all.len(), 15);
        let with_truth: Vec<&str> =
            all.iter().filter(|e| e.ground_truth.is_some()).map(|e| e.name.as_str()).collect();
        for n in ["L1", "L2", "L4", "L5", "L7", "L9", "L10", "L12", "L13", "L14"] {
            assert!(with_truth.contains(&n), "{n}");
        }
        for n in ["L3", "L6", "L11", "L15"] {
            assert!(!with_truth.contains(&n), "{n}");
        }
        assert!(matches!(load("L16"), Err(CorpusError::Unknown(_))));
    }

    #[test]
    fn examples_match_grammars() {
        for e in load_all().unwrap() {
            let p = Parser::new(e.cfg());
            for w in &e.members {
                assert!(p.accepts(w), "{}: {:?}", e.name, w);
            }
            for w in &e.non_members {
                assert!(!p.accepts(w), "{}: {:?}", e.name, w);
            }
            assert!(!p.accepts(&[]), "{} accepts the empty word", e.name);
        }
    }

    #[test]
    fn l15_statement_examples() {
        let e = load("L15").unwrap();
        let p = Parser::new(e.cfg());
        assert!(p.accepts(&parse_word("(abc()())d")));
        assert!(!p.accepts(&parse_word("a(bc()())d")));
    }

    #[test]
    fn depth_marking() {
        let e = load("L15").unwrap();
        let deep: Vec<String> = e
            .cfg()
            .productions()
            .iter()
            .filter(|p| p.deepens)
            .map(|p| p.rhs.iter().map(symbol_text).collect::<Vec<_>>().join(" "))
            .collect();
        assert_eq!(deep, vec!["( S )", "( )"]);
        let e = load("L2").unwrap();
        assert_eq!(e.cfg().productions().iter().filter(|p| p.deepens).count(), 2);
    }
}
