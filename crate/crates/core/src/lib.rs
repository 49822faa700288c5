//! Pattern rule sets over deterministic finite automata.
//!
//! The crate covers the whole synthesis pipeline: generating DFA sequences
//! from a pattern rule set ([`prs`]), extracting DFA sequences from a
//! membership teacher ([`learner`]), recovering the rule set behind a
//! sequence ([`inference`]) and turning a rule set into a context-free
//! grammar ([`cfg`]). The experiment languages live in [`corpus`] and the
//! end-to-end runs in [`pipeline`].

pub mod automata;
pub mod cfg;
pub mod corpus;
pub mod exec;
pub mod inference;
pub mod learner;
pub mod patterns;
pub mod pipeline;
pub mod prs;
pub mod versioned;

pub use automata::{Dfa, StateId, Token, Word};
pub use cfg::{Cfg, Symbol, WeightedCfg};
pub use exec::Exec;
pub use patterns::{Pattern, PatternId, PatternInstance, PatternPair};
pub use prs::{EnabledDfa, Prs, PrsRule, Schedule};
