//! Earley recognition with ε-productions handled at prediction time.
//!
//! [`Chart`] grows one token at a time and can be rolled back, so a
//! depth-first walk over words shares the work for common prefixes.

use std::collections::{HashMap, HashSet};

use super::{Cfg, Symbol};
use crate::automata::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Sym {
    T(u32),
    N(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    prod: u32,
    dot: u32,
    origin: u32,
}

/// A grammar compiled for recognition.
#[derive(Debug, Clone)]
pub struct Parser {
    prods: Vec<(u32, Vec<Sym>)>,
    by_lhs: Vec<Vec<u32>>,
    nullable: Vec<bool>,
    terminals: HashMap<Token, u32>,
    /// Index of the augmented start production.
    top: u32,
}

impl Parser {
    pub fn new(g: &Cfg) -> Parser {
        let mut nts: HashMap<String, u32> = HashMap::new();
        let order = g.nonterminal_order();
        for n in &order {
            let k = nts.len() as u32;
            nts.insert(n.clone(), k);
        }
        let mut terminals: HashMap<Token, u32> = HashMap::new();
        for t in &g.terminals {
            let k = terminals.len() as u32;
            terminals.insert(t.clone(), k);
        }
        let mut prods: Vec<(u32, Vec<Sym>)> = g
            .productions()
            .iter()
            .map(|p| {
                let rhs = p
                    .rhs
                    .iter()
                    .map(|s| match s {
                        Symbol::N(n) => Sym::N(nts[n]),
                        Symbol::T(t) => {
                            let k = terminals.len() as u32;
                            Sym::T(*terminals.entry(t.clone()).or_insert(k))
                        }
                    })
                    .collect();
                (nts[&p.lhs], rhs)
            })
            .collect();
        let top_nt = nts.len() as u32;
        prods.push((top_nt, vec![Sym::N(nts[&g.start])]));
        let top = prods.len() as u32 - 1;
        let n = nts.len() + 1;
        let mut by_lhs = vec![Vec::new(); n];
        for (i, (l, _)) in prods.iter().enumerate() {
            by_lhs[*l as usize].push(i as u32);
        }
        let mut nullable = vec![false; n];
        loop {
            let mut changed = false;
            for (l, rhs) in &prods {
                if !nullable[*l as usize]
                    && rhs.iter().all(|s| matches!(s, Sym::N(m) if nullable[*m as usize]))
                {
                    nullable[*l as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Parser { prods, by_lhs, nullable, terminals, top }
    }

    pub fn chart(&self) -> Chart<'_> {
        let mut c = Chart { parser: self, sets: Vec::new() };
        let mut set = ItemSet::default();
        set.add(Item { prod: self.top, dot: 0, origin: 0 });
        c.sets.push(set);
        c.close(0);
        c
    }

    pub fn accepts(&self, w: &[Token]) -> bool {
        let mut c = self.chart();
        for t in w {
            if !c.push(t) {
                return false;
            }
        }
        c.accepts()
    }

    fn next_sym(&self, it: &Item) -> Option<Sym> {
        self.prods[it.prod as usize].1.get(it.dot as usize).copied()
    }
}

#[derive(Debug, Clone, Default)]
struct ItemSet {
    items: Vec<Item>,
    seen: HashSet<Item>,
}

impl ItemSet {
    fn add(&mut self, it: Item) {
        if self.seen.insert(it) {
            self.items.push(it);
        }
    }
}

/// Earley sets for a prefix.
#[derive(Debug, Clone)]
pub struct Chart<'a> {
    parser: &'a Parser,
    sets: Vec<ItemSet>,
}

impl Chart<'_> {
    /// Length of the prefix read so far.
    pub fn len(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn close(&mut self, i: usize) {
        let p = self.parser;
        let mut k = 0;
        while k < self.sets[i].items.len() {
            let it = self.sets[i].items[k];
            k += 1;
            match p.next_sym(&it) {
                None => {
                    let lhs = p.prods[it.prod as usize].0;
                    let origin = it.origin as usize;
                    let waiting: Vec<Item> = self.sets[origin]
                        .items
                        .iter()
                        .filter(|w| p.next_sym(w) == Some(Sym::N(lhs)))
                        .copied()
                        .collect();
                    for w in waiting {
                        self.sets[i].add(Item { dot: w.dot + 1, ..w });
                    }
                }
                Some(Sym::N(b)) => {
                    for &q in &p.by_lhs[b as usize] {
                        self.sets[i].add(Item { prod: q, dot: 0, origin: i as u32 });
                    }
                    if p.nullable[b as usize] {
                        self.sets[i].add(Item { dot: it.dot + 1, ..it });
                    }
                }
                Some(Sym::T(_)) => {}
            }
        }
    }

    /// Reads one token. Returns whether the new prefix is still viable.
    pub fn push(&mut self, t: &Token) -> bool {
        let p = self.parser;
        let mut set = ItemSet::default();
        if let Some(&k) = p.terminals.get(t) {
            let last = self.sets.last().expect("chart has an initial set");
            for it in &last.items {
                if p.next_sym(it) == Some(Sym::T(k)) {
                    set.add(Item { dot: it.dot + 1, ..*it });
                }
            }
        }
        self.sets.push(set);
        let i = self.sets.len() - 1;
        self.close(i);
        self.is_viable()
    }

    /// Drops the last token read.
    pub fn pop(&mut self) {
        if self.sets.len() > 1 {
            self.sets.pop();
        }
    }

    /// Whether some continuation might still be accepted. Exact when every
    /// nonterminal is productive.
    pub fn is_viable(&self) -> bool {
        !self.sets.last().expect("nonempty").items.is_empty()
    }

    pub fn accepts(&self) -> bool {
        let p = self.parser;
        self.sets
            .last()
            .expect("nonempty")
            .items
            .iter()
            .any(|it| it.prod == p.top && it.origin == 0 && p.next_sym(it).is_none())
    }
}

/// Whether `g` derives `w`.
pub fn cfg_membership(g: &Cfg, w: &[Token]) -> bool {
    Parser::new(g).accepts(w)
}
