//! Language-preserving clean-up of grammars.

use std::collections::{BTreeMap, BTreeSet};

use super::{Cfg, Production, Symbol};

/// Removes useless nonterminals and unit productions, merges nonterminals
/// with identical production sets and inlines nonterminals that have a
/// single non-recursive production. The start symbol keeps its name.
pub fn simplify(g: &Cfg) -> Cfg {
    let mut g = remove_useless(g);
    g = remove_units(&g);
    g = remove_useless(&g);
    loop {
        let before = (g.len(), g.nonterminals().len());
        g = merge_equivalent(&g);
        g = inline_single(&g);
        g = remove_useless(&g);
        if (g.len(), g.nonterminals().len()) == before {
            return g;
        }
    }
}

fn productive(g: &Cfg) -> BTreeSet<String> {
    let mut ok = BTreeSet::new();
    loop {
        let mut changed = false;
        for p in g.productions() {
            if !ok.contains(&p.lhs)
                && p.rhs.iter().all(|s| match s {
                    Symbol::N(n) => ok.contains(n),
                    Symbol::T(_) => true,
                })
            {
                ok.insert(p.lhs.clone());
                changed = true;
            }
        }
        if !changed {
            return ok;
        }
    }
}

fn reachable(g: &Cfg) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([g.start.clone()]);
    let mut stack = vec![g.start.clone()];
    while let Some(n) = stack.pop() {
        for p in g.productions_of(&n) {
            for s in &p.rhs {
                if let Symbol::N(m) = s {
                    if seen.insert(m.clone()) {
                        stack.push(m.clone());
                    }
                }
            }
        }
    }
    seen
}

fn remove_useless(g: &Cfg) -> Cfg {
    let ok = productive(g);
    let mentions_only = |p: &Production, set: &BTreeSet<String>| {
        set.contains(&p.lhs) && p.rhs.iter().all(|s| s.as_nonterminal().is_none_or(|n| set.contains(n)))
    };
    let g = g.with_productions(g.productions().iter().filter(|p| mentions_only(p, &ok)).cloned());
    let live = reachable(&g);
    g.with_productions(g.productions().iter().filter(|p| live.contains(&p.lhs)).cloned())
}

fn is_unit(p: &Production) -> bool {
    matches!(p.rhs.as_slice(), [Symbol::N(_)])
}

fn remove_units(g: &Cfg) -> Cfg {
    let mut out = Vec::new();
    for a in g.nonterminal_order() {
        let mut closure = BTreeSet::from([a.clone()]);
        let mut stack = vec![a.clone()];
        while let Some(b) = stack.pop() {
            for p in g.productions_of(&b) {
                if let [Symbol::N(c)] = p.rhs.as_slice() {
                    if closure.insert(c.clone()) {
                        stack.push(c.clone());
                    }
                }
            }
        }
        for b in g.nonterminal_order().into_iter().filter(|b| closure.contains(b)) {
            for p in g.productions_of(&b).filter(|p| !is_unit(p)) {
                out.push(Production { lhs: a.clone(), ..p.clone() });
            }
        }
    }
    g.with_productions(out)
}

/// Coarsest partition in which members of a class have the same
/// productions once every nonterminal is replaced by its class.
fn merge_equivalent(g: &Cfg) -> Cfg {
    let order = g.nonterminal_order();
    let mut class: BTreeMap<String, usize> = order.iter().map(|n| (n.clone(), 0)).collect();
    loop {
        let sig = |n: &String, class: &BTreeMap<String, usize>| {
            let set: BTreeSet<Vec<Result<usize, String>>> = g
                .productions_of(n)
                .map(|p| {
                    p.rhs
                        .iter()
                        .map(|s| match s {
                            Symbol::N(m) => Ok(class[m]),
                            Symbol::T(t) => Err(t.as_str().to_string()),
                        })
                        .collect()
                })
                .collect();
            (class[n], set)
        };
        let mut ids: BTreeMap<(usize, BTreeSet<Vec<Result<usize, String>>>), usize> = BTreeMap::new();
        let mut next = BTreeMap::new();
        for n in &order {
            let k = sig(n, &class);
            let len = ids.len();
            let id = *ids.entry(k).or_insert(len);
            next.insert(n.clone(), id);
        }
        let stable = ids.len() == class.values().collect::<BTreeSet<_>>().len();
        class = next;
        if stable {
            break;
        }
    }
    let mut rep: BTreeMap<usize, String> = BTreeMap::new();
    rep.insert(class[&g.start], g.start.clone());
    for n in &order {
        rep.entry(class[n]).or_insert_with(|| n.clone());
    }
    g.rename(|n| rep[&class[n]].clone())
}

fn inline_single(g: &Cfg) -> Cfg {
    let mut g = g.clone();
    loop {
        let target = g.nonterminal_order().into_iter().find(|n| {
            if *n == g.start {
                return false;
            }
            let ps: Vec<&Production> = g.productions_of(n).collect();
            ps.len() == 1 && !ps[0].rhs.iter().any(|s| s.as_nonterminal() == Some(n.as_str()))
        });
        let Some(n) = target else { return g };
        let body = g.productions_of(&n).next().expect("one production").rhs.clone();
        let rest = g.productions().iter().filter(|p| p.lhs != n).map(|p| Production {
            rhs: p
                .rhs
                .iter()
                .flat_map(|s| if s.as_nonterminal() == Some(n.as_str()) { body.clone() } else { vec![s.clone()] })
                .collect(),
            ..p.clone()
        });
        g = g.with_productions(rest.collect::<Vec<_>>());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::Token;
    use crate::cfg::earley::Parser;
    use crate::cfg::{prs_to_cfg, prs_to_cfg_general};
    use crate::prs::examples::*;

    fn words(sigma: &[Token], k: usize) -> Vec<Vec<Token>> {
        let mut out = vec![Vec::new()];
        let mut layer = vec![Vec::new()];
        for _ in 0..k {
            layer = layer
                .iter()
                .flat_map(|p: &Vec<Token>| {
                    sigma.iter().map(move |t| {
                        let mut q = p.clone();
                        q.push(t.clone());
                        q
                    })
                })
                .collect();
            out.extend(layer.iter().cloned());
        }
        out
    }

    fn same_language(a: &Cfg, b: &Cfg, k: usize) {
        let sigma: Vec<Token> = a.terminals.iter().cloned().collect();
        let (pa, pb) = (Parser::new(a), Parser::new(b));
        for w in words(&sigma, k) {
            assert_eq!(pa.accepts(&w), pb.accepts(&w), "{w:?}\n{a}\n{b}");
        }
    }

    #[test]
    fn preserves_language() {
        let grammars = [
            prs_to_cfg(&r_dyck2()).unwrap(),
            prs_to_cfg(&r_ab()).unwrap(),
            prs_to_cfg_general(&r_ab()),
            Cfg::parse_text("S ::= A | B\nA ::= a A | a\nB ::= a B | a\nD ::= D d").unwrap(),
            Cfg::parse_text("S ::= X Y\nX ::= ε | x\nY ::= Y y | y | X").unwrap(),
        ];
        for g in grammars {
            let s = simplify(&g);
            same_language(&g, &s, 8);
        }
    }

    #[test]
    fn merges_and_drops() {
        let g = Cfg::parse_text("S ::= A | B\nA ::= a A | a\nB ::= a B | a\nD ::= D d").unwrap();
        let s = simplify(&g);
        assert_eq!(s.to_text(), "S ::= a S | a\n");
    }

    #[test]
    fn dyck2_shrinks() {
        let g = prs_to_cfg(&r_dyck2()).unwrap();
        let s = simplify(&g);
        assert!(s.nonterminals().len() <= 5, "{s}");
        assert!(s.len() < g.len());
        assert!(s.productions_of("S").any(|p| p.rhs == vec![Symbol::n("S"), Symbol::n("S")]));
    }
}
