//! Random words from a weighted grammar.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cfg, Symbol};
use crate::automata::Word;
use crate::exec::Exec;

const ATTEMPTS_PER_SAMPLE: usize = 100;
const MAX_EXPANSIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("{got} weights for {expected} productions")]
    WeightCount { expected: usize, got: usize },
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("nonterminal {0} has no production with positive weight")]
    ZeroMass(String),
    #[error("no word of length at most {0} is derivable")]
    NoDerivation(usize),
    #[error("sample {index} rejected {attempts} times in a row")]
    Rejection { index: usize, attempts: usize },
}

/// A grammar with production weights normalized to sum to one per
/// left-hand side. `weights[i]` belongs to `cfg.productions()[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCfg {
    pub cfg: Cfg,
    pub weights: Vec<f64>,
}

impl WeightedCfg {
    pub fn new(cfg: Cfg, weights: Vec<f64>) -> Result<WeightedCfg, SampleError> {
        if weights.len() != cfg.len() {
            return Err(SampleError::WeightCount { expected: cfg.len(), got: weights.len() });
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(SampleError::BadWeight(w));
        }
        let mut out = WeightedCfg { cfg, weights };
        for lhs in out.cfg.nonterminals() {
            let idx: Vec<usize> = (0..out.cfg.len()).filter(|&i| out.cfg.productions()[i].lhs == lhs).collect();
            if idx.is_empty() {
                continue;
            }
            let total: f64 = idx.iter().map(|&i| out.weights[i]).sum();
            if total <= 0.0 {
                return Err(SampleError::ZeroMass(lhs));
            }
            for i in idx {
                out.weights[i] /= total;
            }
        }
        Ok(out)
    }

    pub fn uniform(cfg: Cfg) -> WeightedCfg {
        let n = cfg.len();
        WeightedCfg::new(cfg, vec![1.0; n]).expect("uniform weights are valid")
    }

    /// Per left-hand side, the total weight of its productions.
    pub fn mass(&self) -> Vec<(String, f64)> {
        self.cfg
            .nonterminal_order()
            .into_iter()
            .filter_map(|n| {
                let ps: Vec<usize> = (0..self.cfg.len()).filter(|&i| self.cfg.productions()[i].lhs == n).collect();
                (!ps.is_empty()).then(|| (n, ps.iter().map(|&i| self.weights[i]).sum()))
            })
            .collect()
    }
}

struct Compiled {
    nts: Vec<String>,
    /// Per nonterminal: (production index, rhs, min length of rhs).
    alts: Vec<Vec<(usize, Vec<Sym>, usize)>>,
    min_len: Vec<usize>,
    start: usize,
}

#[derive(Clone)]
enum Sym {
    T(crate::automata::Token),
    N(usize),
}

fn compile(g: &Cfg) -> Compiled {
    let nts = g.nonterminal_order();
    let index = |n: &str| nts.iter().position(|m| m == n).expect("known nonterminal");
    let mut alts: Vec<Vec<(usize, Vec<Sym>, usize)>> = vec![Vec::new(); nts.len()];
    for (i, p) in g.productions().iter().enumerate() {
        let rhs = p
            .rhs
            .iter()
            .map(|s| match s {
                Symbol::T(t) => Sym::T(t.clone()),
                Symbol::N(n) => Sym::N(index(n)),
            })
            .collect();
        alts[index(&p.lhs)].push((i, rhs, 0));
    }
    let mut min_len = vec![usize::MAX; nts.len()];
    loop {
        let mut changed = false;
        for (n, list) in alts.iter().enumerate() {
            for (_, rhs, _) in list {
                let mut len = 0usize;
                for s in rhs {
                    len = len.saturating_add(match s {
                        Sym::T(_) => 1,
                        Sym::N(m) => min_len[*m],
                    });
                }
                if len < min_len[n] {
                    min_len[n] = len;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for list in alts.iter_mut() {
        for (_, rhs, l) in list.iter_mut() {
            *l = rhs.iter().fold(0usize, |a, s| {
                a.saturating_add(match s {
                    Sym::T(_) => 1,
                    Sym::N(m) => min_len[*m],
                })
            });
        }
    }
    let start = index(&g.start);
    Compiled { nts, alts, min_len, start }
}

/// One leftmost derivation, refusing expansions that could not finish
/// within `max_len` tokens. `None` when the expansion budget runs out.
fn derive(c: &Compiled, weights: &[f64], max_len: usize, rng: &mut ChaCha8Rng) -> Option<Word> {
    let mut out = Vec::new();
    let mut stack = vec![Sym::N(c.start)];
    let mut pending = c.min_len[c.start];
    let mut expansions = 0;
    while let Some(s) = stack.pop() {
        match s {
            Sym::T(t) => {
                out.push(t);
                pending -= 1;
            }
            Sym::N(n) => {
                expansions += 1;
                if expansions > MAX_EXPANSIONS {
                    return None;
                }
                let base = out.len() + pending - c.min_len[n];
                let ok: Vec<&(usize, Vec<Sym>, usize)> =
                    c.alts[n].iter().filter(|(i, _, l)| base.saturating_add(*l) <= max_len && weights[*i] > 0.0).collect();
                if ok.is_empty() {
                    return None;
                }
                let dist = WeightedIndex::new(ok.iter().map(|(i, _, _)| weights[*i])).ok()?;
                let (_, rhs, l) = ok[dist.sample(rng)];
                pending = pending - c.min_len[n] + l;
                stack.extend(rhs.iter().rev().cloned());
            }
        }
    }
    Some(out)
}

/// Draws `n` words of length at most `max_len`. Sample `i` uses its own
/// stream derived from `seed`, so results do not depend on `exec`.
pub fn sample(g: &WeightedCfg, n: usize, max_len: usize, seed: u64, exec: Exec) -> Result<Vec<Word>, SampleError> {
    let c = compile(&g.cfg);
    if c.min_len[c.start] > max_len {
        return Err(SampleError::NoDerivation(max_len));
    }
    log::debug!("sampling {n} words over {} nonterminals", c.nts.len());
    exec.map_range(n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for _ in 0..ATTEMPTS_PER_SAMPLE {
            if let Some(w) = derive(&c, &g.weights, max_len, &mut rng) {
                return Ok(w);
            }
        }
        Err(SampleError::Rejection { index: i, attempts: ATTEMPTS_PER_SAMPLE })
    })
    .into_iter()
    .collect()
}
