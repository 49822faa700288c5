//! Shared oracles for the integration tests.

use std::collections::BTreeSet;

use prsynth::automata::StateId;
use prsynth::corpus;
use prsynth::patterns::find_instance;
use prsynth::prs::{examples, EnabledDfa, Prs};

pub fn corpus_rule_sets() -> Vec<(String, Prs)> {
    let mut out: Vec<(String, Prs)> = corpus::load_all()
        .unwrap()
        .into_iter()
        .filter_map(|e| e.ground_truth.map(|p| (e.name, p)))
        .collect();
    out.push(("R_ab".into(), examples::r_ab()));
    out.push(("R_Dyck2".into(), examples::r_dyck2()));
    out
}

/// The two options for a pair of enabled instances, checked from their
/// raw state sets: shared states are all edges of one of them, or one
/// contains the other and the container's join state is outside the inner
/// instance or on its edge.
pub fn dichotomy(ed: &EnabledDfa, prs: &Prs) -> Result<(), String> {
    let mut insts = Vec::new();
    for e in &ed.enabled {
        let p = prs.pair.get(&e.pattern).map_err(|x| x.to_string())?;
        let i = find_instance(&ed.dfa, p, e.initial).ok_or("enabled instance missing")?;
        let states: BTreeSet<StateId> = i.map.values().copied().collect();
        insts.push((e.initial, i.exit, e.join, states));
    }
    let joins: BTreeSet<StateId> = insts.iter().map(|x| x.2).collect();
    if joins.len() != insts.len() {
        return Err("two enabled instances share a join state".into());
    }
    for (a, ia) in insts.iter().enumerate() {
        if ia.2 == ia.0 || ia.2 == ia.1 {
            return Err("join state is an edge state".into());
        }
        for ib in &insts[a + 1..] {
            let edge = |x: &(StateId, StateId, StateId, BTreeSet<StateId>), q: StateId| q == x.0 || q == x.1;
            let shared: Vec<StateId> = ia.3.intersection(&ib.3).copied().collect();
            if shared.iter().all(|&q| edge(ia, q) || edge(ib, q)) {
                continue;
            }
            let inside = |outer: &(StateId, StateId, StateId, BTreeSet<StateId>), inner: &(StateId, StateId, StateId, BTreeSet<StateId>)| {
                inner.3.is_subset(&outer.3) && (!inner.3.contains(&outer.2) || edge(inner, outer.2))
            };
            if !inside(ia, ib) && !inside(ib, ia) {
                return Err(format!("instances at {} and {} overlap on {:?}", ia.0, ib.0, shared));
            }
        }
    }
    Ok(())
}
