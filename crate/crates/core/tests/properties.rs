mod common;

use proptest::prelude::*;

use prsynth::automata::{Dfa, StateId, Token, Word};
use prsynth::cfg::cfg_membership;
use prsynth::corpus;
use prsynth::inference::{infer, normalize_epsilon};
use prsynth::learner::grammar_words;
use prsynth::pipeline::grammar_of;
use prsynth::prs::{generate_sequence, prs_language, Generation};

use common::{corpus_rule_sets, dichotomy};

fn words_upto(alphabet: &[Token], k: usize) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for w in &layer {
            for t in alphabet {
                let mut v: Word = w.clone();
                v.push(t.clone());
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn random_dfa(n: usize, edges: &[(usize, usize, usize)], accepting: &[bool]) -> Dfa {
    let alphabet = [Token::new("a"), Token::new("b")];
    let q = |i: usize| StateId(i as u64);
    let mut d = Dfa::new(alphabet.iter().cloned(), (0..n).map(q), q(0), (0..n).filter(|&i| accepting[i % accepting.len()]).map(q), []).unwrap();
    for &(s, t, r) in edges {
        let (s, r) = (s % n, r % n);
        let tok = alphabet[t % 2].clone();
        if d.next(q(s), &tok).is_none() {
            d.add_transition(q(s), tok, q(r)).unwrap();
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enabled_instances_satisfy_the_dichotomy(which in 0usize..64, seed in any::<u64>(), steps in 2usize..12) {
        let sets = corpus_rule_sets();
        let (_, prs) = &sets[which % sets.len()];
        let g = generate_sequence(prs, &Generation::Random { seed, steps }).unwrap();
        prop_assert!(dichotomy(&g.final_state, prs).is_ok(), "{:?}", dichotomy(&g.final_state, prs));
        prop_assert!(g.final_state.check_invariants(&prs.pair).is_ok());
    }

    #[test]
    fn minimization_preserves_language(n in 1usize..6, edges in prop::collection::vec((0usize..6, 0usize..2, 0usize..6), 0..14), acc in prop::collection::vec(any::<bool>(), 1..6)) {
        let d = random_dfa(n, &edges, &acc);
        let m = d.minimize();
        let alphabet = [Token::new("a"), Token::new("b")];
        for w in words_upto(&alphabet, 6) {
            prop_assert_eq!(d.accepts(&w), m.accepts(&w));
        }
        prop_assert!(m.num_states() <= d.num_states().max(1));
        prop_assert_eq!(m.minimize(), m);
    }

    #[test]
    fn inclusion_matches_enumeration(n in 1usize..5, e1 in prop::collection::vec((0usize..5, 0usize..2, 0usize..5), 0..10), a1 in prop::collection::vec(any::<bool>(), 1..5),
                                     m in 1usize..5, e2 in prop::collection::vec((0usize..5, 0usize..2, 0usize..5), 0..10), a2 in prop::collection::vec(any::<bool>(), 1..5)) {
        let (x, y) = (random_dfa(n, &e1, &a1), random_dfa(m, &e2, &a2));
        let alphabet = [Token::new("a"), Token::new("b")];
        // automata with at most 5 states differ on some word of length < 25; 8 covers these sizes in practice
        let counter = words_upto(&alphabet, 8).into_iter().find(|w| x.accepts(w) && !y.accepts(w));
        match x.difference_witness(&y) {
            Some(w) => {
                prop_assert!(x.accepts(&w) && !y.accepts(&w));
                if let Some(c) = counter {
                    prop_assert!(w.len() <= c.len());
                }
            }
            None => prop_assert!(counter.is_none()),
        }
    }

    #[test]
    fn epsilon_normalization_keeps_nonempty_words(n in 1usize..5, edges in prop::collection::vec((0usize..5, 0usize..2, 0usize..5), 0..10), acc in prop::collection::vec(any::<bool>(), 1..5)) {
        let d = random_dfa(n, &edges, &acc).minimize();
        let e = normalize_epsilon(&d);
        let alphabet = [Token::new("a"), Token::new("b")];
        if e != d {
            for w in words_upto(&alphabet, 6).into_iter().filter(|w| !w.is_empty()) {
                prop_assert!(!d.accepts(&w) || e.accepts(&w));
            }
        }
    }

    #[test]
    fn covering_schedules_round_trip(which in 0usize..64, seed in 0u64..1000) {
        let sets = corpus_rule_sets();
        let (name, prs) = &sets[which % sets.len()];
        let g = generate_sequence(prs, &Generation::Covering { seed, min_uses: 2, max_steps: 40 }).unwrap();
        let truth = prs.restrict(&g.used_rules());
        let rep = infer(&g.dfas, 1);
        let got = rep.prs.clone();
        prop_assert!(got.as_ref().is_some_and(|p| p.same_rules(&truth)), "{name}: {:?}", rep.unresolved);
    }

    #[test]
    fn rule_sets_and_grammars_agree_on_random_words(which in 0usize..64, words in prop::collection::vec(prop::collection::vec(0usize..16, 1..9), 20)) {
        let sets = corpus_rule_sets();
        let (_, prs) = &sets[which % sets.len()];
        let g = grammar_of(prs);
        let alphabet: Vec<Token> = prs.alphabet.iter().cloned().collect();
        let lang = prs_language(prs, 8, 5_000_000).unwrap();
        for w in words {
            let w: Word = w.into_iter().map(|i| alphabet[i % alphabet.len()].clone()).collect();
            prop_assert_eq!(lang.contains(&w), cfg_membership(&g, &w));
        }
    }
}

#[test]
fn grammar_words_match_earley() {
    for e in corpus::load_all().unwrap() {
        if e.alphabet().len() > 4 {
            continue;
        }
        let words = grammar_words(e.cfg(), 6);
        for w in words_upto(&e.alphabet(), 6) {
            assert_eq!(words.contains(&w), cfg_membership(e.cfg(), &w), "{} {:?}", e.name, w);
        }
    }
}
