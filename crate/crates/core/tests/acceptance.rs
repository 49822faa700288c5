//! The acceptance suite. Every criterion prints one `PASS`/`FAIL` line;
//! run with `cargo test --test acceptance -- --nocapture` to see them.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prsynth::automata::format_word;
use prsynth::cfg::convert::base_literals;
use prsynth::cfg::{isomorphic, prs_to_cfg, Cfg};
use prsynth::corpus::{self, Verdict};
use prsynth::exec::Exec;
use prsynth::inference::{infer, StepEvent};
use prsynth::pipeline::{bounded_equivalence, grammar_of, roundtrip, RoundtripConfig};
use prsynth::prs::{examples, generate_sequence, EnabledDfa, EngineError, Generation, Prs, Step};

use common::{corpus_rule_sets, dichotomy};

const ROUNDTRIP_LIMIT: Duration = Duration::from_secs(5);
const EQUIVALENCE_LIMIT: Duration = Duration::from_secs(60);
const EQUIVALENCE_BOUND: usize = 12;
const R_AB_STEPS: usize = 6;
const NOISE_MIN_DFAS: usize = 10;
const NOISE_MAX_SPURIOUS: usize = 2;
const NOISE_SEEDS: u64 = 4;
const MIN_APPLICATIONS: usize = 1000;

const DYCK2_LISTING: &str = "S ::= SC
SC ::= SC SC | P1 | P2
P1 ::= ( P1C )
P1C ::= P1C P1C | P1 | P2
P2 ::= [ P2C ]
P2C ::= P2C P2C | P1 | P2";

const L12_LISTING: &str = "S ::= P1 | P2
P1 ::= ( P2 )
P2 ::= [ P1 ]";

fn verdict(n: usize, title: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("criterion {n:>2} PASS  {title}: {detail}"),
        Err(detail) => {
            println!("criterion {n:>2} FAIL  {title}: {detail}");
            panic!("criterion {n} failed: {detail}");
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn l12() -> Prs {
    corpus::load("L12").unwrap().ground_truth.unwrap()
}

#[test]
fn c01_round_trip_identity() {
    let run = || -> Result<String, String> {
        let mut out = Vec::new();
        for (name, prs) in [("R_ab", examples::r_ab()), ("R_Dyck2", examples::r_dyck2()), ("L12", l12())] {
            let t = Instant::now();
            let g = generate_sequence(&prs, &Generation::Covering { seed: 0, min_uses: 2, max_steps: 40 })
                .map_err(|e| format!("{name}: {e}"))?;
            let used = g.used_rules();
            for &r in &used {
                if prs.rules[r].is_start() {
                    continue;
                }
                let n = g.schedule.steps.iter().filter(|s| s.rule == r).count();
                check(n >= 2, || format!("{name}: rule {r} applied {n} times"))?;
            }
            let truth = prs.restrict(&used);
            let rep = infer(&g.dfas, 1);
            let got = rep.prs.ok_or_else(|| format!("{name}: no rule set ({:?})", rep.error))?;
            let el = t.elapsed();
            check(got.same_rules(&truth), || {
                let (extra, missing) = got.rule_difference(&truth);
                format!("{name}: extra {extra:?} missing {missing:?}")
            })?;
            check(el < ROUNDTRIP_LIMIT, || format!("{name}: {el:?}"))?;
            out.push(format!("{name} {} DFAs {el:.1?}", g.dfas.len()));
        }
        Ok(out.join(", "))
    };
    verdict(1, "round-trip identity", run());
}

#[test]
fn c02_r_ab_sequence_semantics() {
    let run = || -> Result<String, String> {
        let prs = examples::r_ab();
        let g = generate_sequence(&prs, &Generation::Random { seed: 0, steps: R_AB_STEPS }).map_err(|e| e.to_string())?;
        check(g.dfas.len() == R_AB_STEPS, || format!("{} automata", g.dfas.len()))?;
        for (k, d) in g.dfas.iter().enumerate() {
            let i = k + 1;
            let got: BTreeSet<String> =
                d.enumerate_language(2 * i).map_err(|e| e.to_string())?.iter().map(|w| format_word(w)).collect();
            let want: BTreeSet<String> = (1..=i).map(|j| "a".repeat(j) + &"b".repeat(j)).collect();
            check(got == want, || format!("A{i}: {got:?}"))?;
        }
        Ok(format!("A1..A{R_AB_STEPS} match"))
    };
    verdict(2, "R_ab sequence semantics", run());
}

#[test]
fn c03_bounded_equivalence() {
    let run = || -> Result<String, String> {
        let sets = corpus_rule_sets();
        let mut out = Vec::new();
        for (name, prs) in sets {
            let t = Instant::now();
            let g = grammar_of(&prs);
            let eq = bounded_equivalence(&prs, &g, EQUIVALENCE_BOUND, 0, Exec::default()).map_err(|e| format!("{name}: {e}"))?;
            let el = t.elapsed();
            check(eq.agrees(), || format!("{name}: {:?}", &eq.disagreements[..eq.disagreements.len().min(5)]))?;
            check(el < EQUIVALENCE_LIMIT, || format!("{name}: {el:?}"))?;
            let how = if eq.exhaustive { "exhaustive" } else { "sampled" };
            out.push(format!("{name} {} words {how} {el:.1?}", eq.words_checked));
        }
        Ok(out.join(", "))
    };
    verdict(3, "bounded equivalence at length 12", run());
}

#[test]
fn c04_listed_grammars() {
    let run = || -> Result<String, String> {
        for (name, prs, listing) in [("R_Dyck2", examples::r_dyck2(), DYCK2_LISTING), ("L12", l12(), L12_LISTING)] {
            let g = prs_to_cfg(&prs).map_err(|e| e.to_string())?;
            let sk = g.skeleton(&base_literals(&prs));
            let want = Cfg::parse_text(listing).map_err(|e| e.to_string())?;
            check(isomorphic(&sk, &want).is_some(), || format!("{name}:\n{sk}"))?;
        }
        Ok("Dyck-2 and L12 match up to renaming".into())
    };
    verdict(4, "listed grammars", run());
}

#[test]
fn c05_dyck2_grammar_size() {
    let size = prs_to_cfg(&examples::r_dyck2()).map(|g| g.size()).map_err(|e| e.to_string());
    verdict(
        5,
        "Dyck-2 grammar size",
        size.and_then(|s| if s == (10, 12) { Ok(format!("{s:?}")) } else { Err(format!("{s:?}")) }),
    );
}

#[test]
fn c06_noise_threshold() {
    let run = || -> Result<String, String> {
        let mut out = Vec::new();
        for name in ["L1", "L7", "L12"] {
            let e = corpus::load(name).map_err(|e| e.to_string())?;
            for seed in 0..NOISE_SEEDS {
                let cfg = RoundtripConfig {
                    seed,
                    min_uses: 8,
                    spurious: NOISE_MAX_SPURIOUS,
                    threshold: Some(2),
                    ..Default::default()
                };
                let r = roundtrip(&e, &cfg);
                let truth = r.target_prs.clone().ok_or("no target")?;
                check(r.num_dfas >= NOISE_MIN_DFAS, || format!("{name}/{seed}: {} automata", r.num_dfas))?;
                check((1..=NOISE_MAX_SPURIOUS).contains(&r.noisy_steps.len()), || {
                    format!("{name}/{seed}: {} spurious", r.noisy_steps.len())
                })?;
                let th2 = r.inference.prs.as_ref().ok_or_else(|| format!("{name}/{seed}: nothing inferred"))?;
                check(th2.same_rules(&truth), || format!("{name}/{seed}: threshold 2 {:?}", th2.rule_difference(&truth)))?;
                let th1 = infer(&r.dfas, 1).prs.ok_or_else(|| format!("{name}/{seed}: nothing inferred"))?;
                let extra = th1.rule_difference(&truth).0.len();
                check(extra >= 1, || format!("{name}/{seed}: threshold 1 gave no extra rule"))?;
                if seed == 0 {
                    out.push(format!("{name} {} DFAs, +{extra} at threshold 1", r.num_dfas));
                }
            }
        }
        Ok(format!("{} seeds each; {}", NOISE_SEEDS, out.join(", ")))
    };
    verdict(6, "noise threshold", run());
}

#[test]
fn c07_extraction_verdicts() {
    let run = || -> Result<String, String> {
        let mut out = Vec::new();
        for name in ["L1", "L2", "L3", "L4", "L5", "L7", "L12"] {
            let e = corpus::load(name).map_err(|e| e.to_string())?;
            let t = e.truncation;
            check((3..=4).contains(&t.depth) && (10..=14).contains(&t.len), || format!("{name}: truncation {t:?}"))?;
            let r = roundtrip(&e, &RoundtripConfig::extraction());
            check(r.errors.is_empty() || r.verdict() != Verdict::Correct, || format!("{name}: {:?}", r.errors))?;
            if name == "L3" {
                check(r.verdict() == Verdict::Incorrect, || format!("L3: {}", r.verdict()))?;
                check(r.alternation_split(), || "L3: no split alternation in the trace".into())?;
            } else {
                check(r.verdict() == Verdict::Correct, || format!("{name}: {} {:?}", r.verdict(), r.errors))?;
            }
            out.push(format!("{name} {} ({} DFAs)", r.verdict(), r.num_dfas));
        }
        Ok(out.join(", "))
    };
    verdict(7, "extraction verdicts", run());
}

#[test]
fn c08_cycle_split() {
    let run = || -> Result<String, String> {
        let prs = corpus::load("L13").map_err(|e| e.to_string())?.ground_truth.ok_or("no rule set")?;
        // rules: 0 start c1, 1 start N, 2 c1 →c c1, 3 c1 →c N
        let newest = |ed: &EnabledDfa| ed.enabled.len() - 1;
        let err = |e: EngineError| e.to_string();
        let mut ed = EnabledDfa::start(&prs, 0).map_err(err)?;
        let mut dfas = vec![ed.output()];
        ed.apply(&prs, Step::at(2, 0)).map_err(err)?;
        dfas.push(ed.output());
        // a nesting step and a neutral loop at its join, observed together
        ed.apply(&prs, Step::at(2, newest(&ed))).map_err(err)?;
        let k = newest(&ed);
        ed.apply(&prs, Step::at(3, k)).map_err(err)?;
        dfas.push(ed.output());
        // a later graft at the cycle state exposes it as a join
        ed.apply(&prs, Step::at(2, k)).map_err(err)?;
        dfas.push(ed.output());
        ed.apply(&prs, Step::at(3, newest(&ed))).map_err(err)?;
        dfas.push(ed.output());
        let rep = infer(&dfas, 1);
        check(rep.events().any(|e| matches!(e, StepEvent::CycleSplit { .. })), || "no cycle split".into())?;
        let got = rep.prs.ok_or("nothing inferred")?;
        let truth = prs.restrict(&[0, 2, 3].into_iter().collect());
        check(got.same_rules(&truth), || format!("{:?}", got.rule_difference(&truth)))?;
        check(got.rules.len() == truth.rules.len(), || format!("{} rules", got.rules.len()))?;
        Ok(format!("{} automata, {} rules", dfas.len(), got.rules.len()))
    };
    verdict(8, "cycle split", run());
}

#[test]
fn c09_enabled_instance_invariants() {
    let run = || -> Result<String, String> {
        let sets = corpus_rule_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut applications, mut pairs, mut round) = (0usize, 0usize, 0usize);
        while applications < MIN_APPLICATIONS {
            let (name, prs) = &sets[round % sets.len()];
            round += 1;
            let starts: Vec<usize> = prs.start_rules().map(|(i, _)| i).collect();
            let mut ed = EnabledDfa::start(prs, *starts.choose(&mut rng).unwrap()).map_err(|e| e.to_string())?;
            applications += 1;
            for _ in 0..12 {
                let Some(&step) = ed.applicable(prs).choose(&mut rng) else { break };
                ed.apply(prs, step).map_err(|e| format!("{name}: {e}"))?;
                applications += 1;
                dichotomy(&ed, prs).map_err(|e| format!("{name}: {e}"))?;
                ed.check_invariants(&prs.pair).map_err(|e| format!("{name}: {e}"))?;
                pairs += ed.enabled.len() * ed.enabled.len().saturating_sub(1) / 2;
            }
        }
        check(pairs > 0, || "no pair of enabled instances was ever checked".into())?;
        Ok(format!("{applications} applications, {pairs} instance pairs, 0 violations"))
    };
    verdict(9, "enabled-instance invariants", run());
}

#[test]
fn c10_palindrome_self_grafts() {
    let run = || -> Result<String, String> {
        let prs = examples::r_pal();
        // rules: 0 start p00, 1 start p11, 2 p00 →s p00, 3 p00 →s p11, 4 p11 →s p00, 5 p11 →s p11
        let self_graft = |ed: &EnabledDfa, k: usize| if ed.enabled[k].pattern == *prs.rules[0].grafted() { 2 } else { 5 };
        let mut tried = 0;
        for (start, cross) in [(0, 3), (1, 4)] {
            let mut ed = EnabledDfa::start(&prs, start).map_err(|e| e.to_string())?;
            ed.apply(&prs, Step::at(cross, 0)).map_err(|e| e.to_string())?;
            for k in 0..ed.enabled.len() {
                let own = self_graft(&ed, k);
                check(!ed.applicable(&prs).contains(&Step::at(own, k)), || format!("rule {own} listed at instance {k}"))?;
                let res = ed.clone().apply(&prs, Step::at(own, k)).map(|_| ());
                check(matches!(res, Err(EngineError::InapplicableRule { .. })), || format!("rule {own} at instance {k}: {res:?}"))?;
                tried += 1;
            }
        }
        Ok(format!("{tried} self-grafts rejected"))
    };
    verdict(10, "R_pal self-grafts", run());
}
