//! End-to-end runs: produce a DFA sequence (from the engine or by
//! extraction), infer a rule set, convert it to a grammar and score the
//! result against the target. Runs persist every artifact so that scoring
//! can be redone from disk.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::automata::{format_word, Dfa, Token, Word};
use crate::cfg::sample::{sample, WeightedCfg};
use crate::cfg::{isomorphic, prs_to_cfg, prs_to_cfg_general, simplify, Cfg, Parser};
use crate::corpus::{CorpusEntry, Truncation, Verdict};
use crate::exec::Exec;
use crate::inference::{infer, InferenceReport, StepEvent, StepTrace};
use crate::learner::{corrupt, grammar_words, lstar_extract, ExtractionMeta, LStarConfig, NoisePolicy, TruncatedCfgTeacher};
use crate::prs::language::DEFAULT_APPLICATION_BUDGET;
use crate::prs::{generate_sequence, generate_with_noise, prs_language, Generation, Prs};
use crate::versioned::{self, VersionError};

pub const RUN_SCHEMA: &str = "prsynth.run";
pub const DFA_SCHEMA: &str = "prsynth.dfa";
pub const PRS_SCHEMA: &str = "prsynth.prs";
pub const TRACE_SCHEMA: &str = "prsynth.trace";

/// Alphabets up to this size are checked exhaustively.
pub const EXHAUSTIVE_ALPHABET: usize = 4;
pub const RANDOM_WORDS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("io at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Version(#[from] VersionError),
    #[error("{0}")]
    Stage(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Membership disagreements between a rule set and a grammar on words up
/// to a length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub bound: usize,
    pub exhaustive: bool,
    pub words_checked: usize,
    /// (word, in first language, in second language)
    pub disagreements: Vec<(String, bool, bool)>,
}

impl EquivalenceCheck {
    pub fn agrees(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Compares a rule set with a grammar on nonempty words of length at most
/// `bound`. Small alphabets are compared exhaustively, by enumerating both
/// languages; otherwise the words of a generated DFA sequence, grammar
/// samples and `RANDOM_WORDS` uniform random words are checked.
pub fn bounded_equivalence(prs: &Prs, g: &Cfg, bound: usize, seed: u64, exec: Exec) -> Result<EquivalenceCheck, PipelineError> {
    let lang = prs_language(prs, bound, DEFAULT_APPLICATION_BUDGET).map_err(|e| PipelineError::Stage(e.to_string()))?;
    let alphabet: Vec<Token> = prs.alphabet.iter().chain(g.terminals.iter()).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if alphabet.len() <= EXHAUSTIVE_ALPHABET {
        let a: BTreeSet<Word> = lang.words().into_iter().filter(|w| !w.is_empty()).collect();
        let b: BTreeSet<Word> = grammar_words(g, bound).into_iter().filter(|w| !w.is_empty()).collect();
        let disagreements = a
            .symmetric_difference(&b)
            .map(|w| (format_word(w), a.contains(w), b.contains(w)))
            .collect();
        let space = (1..=bound as u32).map(|k| (alphabet.len() as u64).saturating_pow(k)).fold(0u64, u64::saturating_add);
        return Ok(EquivalenceCheck { bound, exhaustive: true, words_checked: space as usize, disagreements });
    }
    let mut words: BTreeSet<Word> = BTreeSet::new();
    let generated = generate_sequence(prs, &Generation::Covering { seed, min_uses: 2, max_steps: 16 })
        .map_err(|e| PipelineError::Stage(e.to_string()))?;
    for d in &generated.dfas {
        if let Ok(ws) = d.enumerate_language_with_budget(bound, 200_000) {
            words.extend(ws);
        }
    }
    if let Ok(ws) = sample(&WeightedCfg::uniform(g.clone()), 2_000, bound, seed, exec) {
        words.extend(ws);
    }
    words.extend(random_words(&alphabet, RANDOM_WORDS, bound, seed));
    words.remove(&Vec::new());
    let words: Vec<Word> = words.into_iter().collect();
    // Few leaves are cheaper to query than to enumerate.
    let members: Option<HashSet<Word>> =
        (lang.leaves.len().saturating_mul(words.len()) > 50_000_000).then(|| lang.words().into_iter().collect());
    let parser = Parser::new(g);
    let verdicts = exec.map(&words, |w| {
        let in_prs = members.as_ref().map_or_else(|| lang.contains(w), |m| m.contains(w));
        (in_prs, parser.accepts(w))
    });
    let disagreements = words
        .iter()
        .zip(&verdicts)
        .filter(|(_, (a, b))| a != b)
        .map(|(w, &(a, b))| (format_word(w), a, b))
        .collect();
    Ok(EquivalenceCheck { bound, exhaustive: false, words_checked: words.len(), disagreements })
}

/// Distinct random words with uniformly drawn lengths in `1..=bound` and
/// uniform tokens; fewer than `n` only when the space is nearly exhausted.
pub fn random_words(alphabet: &[Token], n: usize, bound: usize, seed: u64) -> Vec<Word> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if alphabet.is_empty() || bound == 0 {
        return Vec::new();
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n.saturating_mul(20) {
        if out.len() == n {
            break;
        }
        let len = rng.gen_range(1..=bound);
        let w: Word = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())].clone()).collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Compares two grammars on sampled and random nonempty words.
pub fn grammar_agreement(a: &Cfg, b: &Cfg, bound: usize, seed: u64, exec: Exec) -> EquivalenceCheck {
    let alphabet: Vec<Token> = a.terminals.union(&b.terminals).cloned().collect();
    let mut words: BTreeSet<Word> = BTreeSet::new();
    for (i, g) in [a, b].into_iter().enumerate() {
        if let Ok(ws) = sample(&WeightedCfg::uniform(g.clone()), 2_000, bound, seed.wrapping_add(i as u64), exec) {
            words.extend(ws);
        }
    }
    words.extend(random_words(&alphabet, 2_000, bound, seed));
    words.remove(&Vec::new());
    let words: Vec<Word> = words.into_iter().collect();
    let (pa, pb) = (Parser::new(a), Parser::new(b));
    let verdicts = exec.map(&words, |w| (pa.accepts(w), pb.accepts(w)));
    let disagreements = words
        .iter()
        .zip(&verdicts)
        .filter(|(_, (x, y))| x != y)
        .map(|(w, &(x, y))| (format_word(w), x, y))
        .collect();
    EquivalenceCheck { bound, exhaustive: false, words_checked: words.len(), disagreements }
}

/// The grammar of a rule set: the plain construction when it applies,
/// otherwise the generalized one.
pub fn grammar_of(prs: &Prs) -> Cfg {
    prs_to_cfg(prs).unwrap_or_else(|_| prs_to_cfg_general(prs))
}

/// A verdict with the productions that differ from the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub verdict: Verdict,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
}

fn production_lines(g: &Cfg) -> BTreeSet<String> {
    g.productions().iter().map(|p| {
        let rhs: Vec<&str> = p.rhs.iter().map(|s| match s {
            crate::cfg::Symbol::N(n) => n.as_str(),
            crate::cfg::Symbol::T(t) => t.as_str(),
        }).collect();
        format!("{} ::= {}", p.lhs, rhs.join(" "))
    }).collect()
}

/// Scores an inferred grammar. With a target grammar the production sets
/// are compared after simplification; nonterminals are named after pattern
/// ids, which are canonical, and an isomorphism check absorbs any remaining
/// renaming. One or two differing productions give `Partial`. Without a
/// target grammar the language check decides between `Correct` and
/// `Incorrect`.
pub fn score(inferred: Option<&Cfg>, target: Option<&Cfg>, language: Option<&EquivalenceCheck>) -> Score {
    let incorrect = Score { verdict: Verdict::Incorrect, missing: Vec::new(), extra: Vec::new() };
    let Some(g) = inferred else { return incorrect };
    match target {
        Some(t) => {
            let (a, b) = (simplify(g), simplify(t));
            if isomorphic(&a, &b).is_some() {
                return Score { verdict: Verdict::Correct, missing: Vec::new(), extra: Vec::new() };
            }
            let (pa, pb) = (production_lines(&a), production_lines(&b));
            let missing: Vec<String> = pb.difference(&pa).cloned().collect();
            let extra: Vec<String> = pa.difference(&pb).cloned().collect();
            let verdict = match missing.len() + extra.len() {
                0 => Verdict::Correct,
                1 | 2 => Verdict::Partial,
                _ => Verdict::Incorrect,
            };
            Score { verdict, missing, extra }
        }
        None => match language {
            Some(l) if l.agrees() => Score { verdict: Verdict::Correct, missing: Vec::new(), extra: Vec::new() },
            _ => incorrect,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sequences produced by applying the ground-truth rules.
    Engine,
    /// Sequences produced by L* against the truncated grammar teacher.
    Extraction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Defaults to 1 for clean sequences and 2 for noisy ones.
    pub threshold: Option<usize>,
    /// Engine: exact number of automata, drawn at random. Without it the
    /// run covers every reachable rule `min_uses` times.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Engine: each used rule is applied at least this often.
    pub min_uses: usize,
    pub max_steps: usize,
    /// Engine: spurious patterns inserted into the sequence.
    pub spurious: usize,
    /// Extraction: overrides the entry's truncation.
    pub truncation: Option<Truncation>,
    /// Extraction: teacher noise.
    pub noise: Option<NoisePolicy>,
    /// Length bound of the language checks.
    pub bound: usize,
    pub lstar: LStarConfig,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        RoundtripConfig {
            mode: Mode::Engine,
            seed: 0,
            threshold: None,
            steps: None,
            min_uses: 2,
            max_steps: 40,
            spurious: 0,
            truncation: None,
            noise: None,
            bound: 12,
            lstar: LStarConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl RoundtripConfig {
    pub fn extraction() -> Self {
        RoundtripConfig { mode: Mode::Extraction, ..Default::default() }
    }

    pub fn is_noisy(&self) -> bool {
        match self.mode {
            Mode::Engine => self.spurious > 0,
            Mode::Extraction => self.noise.is_some(),
        }
    }

    pub fn effective_threshold(&self) -> usize {
        self.threshold.unwrap_or(if self.is_noisy() { 2 } else { 1 })
    }
}

/// Everything a run produced, except the DFA sequence which is stored
/// next to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Run {
    pub name: String,
    pub config: RoundtripConfig,
    pub threshold: usize,
    pub num_dfas: usize,
    /// Engine runs: indices of automata carrying a spurious pattern.
    #[serde(default)]
    pub noisy_steps: BTreeSet<usize>,
    #[serde(default)]
    pub extraction: Option<ExtractionMeta>,
    /// Extraction runs with a noisy teacher: corrupted words and the answer given.
    #[serde(default)]
    pub corrupted: BTreeMap<String, bool>,
    pub inference: InferenceReport,
    pub grammar: Option<Cfg>,
    /// Ground-truth grammar, when the entry has a rule set.
    pub target: Option<Cfg>,
    /// Rule set the sequence was generated from (engine runs use only the
    /// rules the schedule applied).
    pub target_prs: Option<Prs>,
    pub language: Option<EquivalenceCheck>,
    pub score: Score,
    pub expected: Option<Verdict>,
    #[serde(default)]
    pub errors: Vec<String>,
    #[serde(skip)]
    pub dfas: Vec<Dfa>,
}

impl Run {
    pub fn verdict(&self) -> Verdict {
        self.score.verdict
    }

    /// Recomputes the score from the stored artifacts.
    pub fn rescore(&self) -> Score {
        score(self.grammar.as_ref(), self.target.as_ref(), self.language.as_ref())
    }

    /// A non-correct verdict that the entry expects.
    pub fn expected_failure(&self) -> bool {
        self.verdict() != Verdict::Correct && self.expected == Some(self.verdict())
    }

    pub fn alternation_split(&self) -> bool {
        self.inference.events().any(|e| matches!(e, StepEvent::AlternationSplit { .. }))
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        save_sequence(&dir.join("seq"), &self.dfas)?;
        write(&dir.join("run.json"), &versioned::to_json(RUN_SCHEMA, self))?;
        let trace = TraceDoc { name: &self.name, threshold: self.threshold, steps: &self.inference.trace };
        write(&dir.join("trace.json"), &versioned::to_json(TRACE_SCHEMA, &trace))?;
        if let Some(p) = &self.inference.prs {
            write(&dir.join("prs.json"), &versioned::to_json(PRS_SCHEMA, p))?;
        }
        if let Some(g) = &self.grammar {
            write(&dir.join("grammar.txt"), &g.to_text())?;
        }
        Ok(())
    }

    /// Reads `run.json` and the stored sequence.
    pub fn load(dir: &Path) -> Result<Run, PipelineError> {
        let path = dir.join("run.json");
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let mut run: Run = versioned::from_json(RUN_SCHEMA, &text)?;
        let seq = dir.join("seq");
        if seq.is_dir() {
            run.dfas = load_sequence(&seq)?;
        }
        Ok(run)
    }
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    name: &'a str,
    threshold: usize,
    steps: &'a [StepTrace],
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io(path))
}

/// Writes `A000.json`, `A000.dot`, ... into `dir`.
pub fn save_sequence(dir: &Path, dfas: &[Dfa]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (i, d) in dfas.iter().enumerate() {
        write(&dir.join(format!("A{i:03}.json")), &versioned::to_json(DFA_SCHEMA, d))?;
        write(&dir.join(format!("A{i:03}.dot")), &d.to_dot())?;
    }
    Ok(())
}

/// Reads the automata `A*.json` in `dir`, in file name order.
pub fn load_sequence(dir: &Path) -> Result<Vec<Dfa>, PipelineError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('A'))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io(p))?;
            Ok(versioned::from_json(DFA_SCHEMA, &text)?)
        })
        .collect()
}

/// Generates or extracts a sequence for `entry`, infers a rule set and
/// scores it. Stage failures are recorded in the run, never raised.
pub fn roundtrip(entry: &CorpusEntry, cfg: &RoundtripConfig) -> Run {
    let threshold = cfg.effective_threshold();
    let mut errors = Vec::new();
    let mut noisy_steps = BTreeSet::new();
    let mut extraction = None;
    let mut corrupted = BTreeMap::new();
    let mut target_prs = entry.ground_truth.clone();
    let dfas: Vec<Dfa> = match cfg.mode {
        Mode::Engine => match &entry.ground_truth {
            None => {
                errors.push(format!("{} has no rule set to generate from", entry.name));
                Vec::new()
            }
            Some(prs) => {
                let how = match cfg.steps {
                    Some(steps) => Generation::Random { seed: cfg.seed, steps },
                    None => Generation::Covering { seed: cfg.seed, min_uses: cfg.min_uses, max_steps: cfg.max_steps },
                };
                match generate_sequence(prs, &how) {
                    Err(e) => {
                        errors.push(format!("generation: {e}"));
                        Vec::new()
                    }
                    Ok(g) => {
                        target_prs = Some(prs.restrict(&g.used_rules()));
                        if cfg.spurious == 0 {
                            g.dfas
                        } else {
                            match generate_with_noise(prs, &g.schedule, cfg.spurious, cfg.seed) {
                                Ok((d, noisy)) => {
                                    noisy_steps = noisy;
                                    d
                                }
                                Err(e) => {
                                    errors.push(format!("noise: {e}"));
                                    g.dfas
                                }
                            }
                        }
                    }
                }
            }
        },
        Mode::Extraction => {
            let t = cfg.truncation.unwrap_or(entry.truncation);
            let teacher = TruncatedCfgTeacher::new(entry.cfg().clone(), t.depth, t.len);
            let result = match &cfg.noise {
                None => lstar_extract(&teacher, &cfg.lstar),
                Some(policy) => match corrupt(teacher, policy.clone(), cfg.seed) {
                    Err(e) => Err(e),
                    Ok(noisy) => {
                        let r = lstar_extract(&noisy, &cfg.lstar);
                        corrupted = noisy.corruption_log().into_iter().map(|(w, b)| (format_word(&w), b)).collect();
                        r
                    }
                },
            };
            match result {
                Ok(x) => {
                    extraction = Some(x.meta);
                    x.hypotheses
                }
                Err(e) => {
                    errors.push(format!("extraction: {e}"));
                    Vec::new()
                }
            }
        }
    };
    let inference = infer(&dfas, threshold);
    if let Some(e) = &inference.error {
        errors.push(format!("inference: {e}"));
    }
    let grammar = inference.prs.as_ref().map(grammar_of);
    let target = target_prs.as_ref().map(grammar_of);
    let bound = cfg.bound;
    let language = grammar.as_ref().map(|g| match &target {
        Some(t) => grammar_agreement(g, t, bound, cfg.seed, cfg.exec),
        None => grammar_agreement(g, entry.cfg(), bound, cfg.seed, cfg.exec),
    });
    let score = score(grammar.as_ref(), target.as_ref(), language.as_ref());
    Run {
        name: entry.name.clone(),
        config: cfg.clone(),
        threshold,
        num_dfas: dfas.len(),
        noisy_steps,
        extraction,
        corrupted,
        inference,
        grammar,
        target,
        target_prs,
        language,
        score,
        expected: Some(entry.expected),
        errors,
        dfas,
    }
}

/// Infers a rule set from a stored sequence without a target.
pub fn infer_only(name: &str, dfas: Vec<Dfa>, threshold: usize) -> Run {
    let inference = infer(&dfas, threshold);
    let grammar = inference.prs.as_ref().map(grammar_of);
    let errors = inference.error.iter().map(|e| format!("inference: {e}")).collect();
    let score = score(grammar.as_ref(), None, None);
    Run {
        name: name.to_string(),
        config: RoundtripConfig::default(),
        threshold,
        num_dfas: dfas.len(),
        noisy_steps: BTreeSet::new(),
        extraction: None,
        corrupted: BTreeMap::new(),
        inference,
        grammar,
        target: None,
        target_prs: None,
        language: None,
        score,
        expected: None,
        errors,
        dfas,
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub language: String,
    pub dfas: usize,
    pub initial_patterns: usize,
    pub final_patterns: usize,
    pub min_votes: usize,
    pub max_votes: usize,
    pub verdict: Verdict,
}

impl ReportRow {
    pub fn of(run: &Run) -> ReportRow {
        let (min_votes, max_votes) = run.inference.min_max_votes().unwrap_or((0, 0));
        ReportRow {
            language: run.name.clone(),
            dfas: run.num_dfas,
            initial_patterns: run.inference.patterns_found(),
            final_patterns: run.inference.final_patterns().len(),
            min_votes,
            max_votes,
            verdict: run.rescore().verdict,
        }
    }
}

/// Collects the runs under each directory: the directory itself when it
/// holds `run.json`, otherwise its immediate subdirectories that do.
pub fn collect_runs(dirs: &[PathBuf]) -> Result<Vec<Run>, PipelineError> {
    let mut runs = Vec::new();
    for d in dirs {
        if d.join("run.json").is_file() {
            runs.push(Run::load(d)?);
            continue;
        }
        let mut subs: Vec<PathBuf> = fs::read_dir(d)
            .map_err(io(d))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("run.json").is_file())
            .collect();
        subs.sort_by_key(|p| natural_key(&p.to_string_lossy()));
        for s in subs {
            runs.push(Run::load(&s)?);
        }
    }
    Ok(runs)
}

/// Orders `L2` before `L10`: digit runs compare by value.
fn natural_key(s: &str) -> Vec<(String, u64)> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut digits = String::new();
    for c in s.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
        } else {
            if !digits.is_empty() {
                out.push((std::mem::take(&mut text), digits.parse().unwrap_or(u64::MAX)));
                digits.clear();
            }
            text.push(c);
        }
    }
    out.push((text, digits.parse().unwrap_or(0)));
    out
}

pub fn report(runs: &[Run]) -> Vec<ReportRow> {
    runs.iter().map(ReportRow::of).collect()
}

pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<10} {:>6} {:>8} {:>8} {:>9} {:>9}\n",
        "language", "#DFAs", "initial", "final", "min/max", "verdict"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>6} {:>8} {:>8} {:>9} {:>9}\n",
            r.language,
            r.dfas,
            r.initial_patterns,
            r.final_patterns,
            format!("{}/{}", r.min_votes, r.max_votes),
            r.verdict
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::prs::examples;

    #[test]
    fn r_ab_grammar_agrees_exhaustively() {
        let p = examples::r_ab();
        let c = bounded_equivalence(&p, &grammar_of(&p), 10, 0, Exec::Sequential).unwrap();
        assert!(c.exhaustive);
        assert!(c.agrees(), "{:?}", c.disagreements);
        assert_eq!(c.words_checked, (1 << 11) - 2);
    }

    #[test]
    fn wrong_grammar_disagrees() {
        let p = examples::r_ab();
        let g = Cfg::parse_text("S ::= a S b | a b | a a b b b").unwrap();
        let c = bounded_equivalence(&p, &g, 6, 0, Exec::Sequential).unwrap();
        assert_eq!(c.disagreements, vec![("aabbb".to_string(), false, true)]);
    }

    #[test]
    fn score_counts_production_differences() {
        let t = Cfg::parse_text("S ::= a S b | a b").unwrap();
        assert_eq!(score(Some(&t), Some(&t), None).verdict, Verdict::Correct);
        let renamed = Cfg::parse_text("X ::= a X b | a b").unwrap();
        assert_eq!(score(Some(&renamed), Some(&t), None).verdict, Verdict::Correct);
        let one_more = Cfg::parse_text("S ::= a S b | a b | c").unwrap();
        let s = score(Some(&one_more), Some(&t), None);
        assert_eq!(s.verdict, Verdict::Partial);
        assert_eq!(s.extra, vec!["S ::= c".to_string()]);
        let other = Cfg::parse_text("S ::= c S d | c d | e | f").unwrap();
        assert_eq!(score(Some(&other), Some(&t), None).verdict, Verdict::Incorrect);
        assert_eq!(score(None, Some(&t), None).verdict, Verdict::Incorrect);
    }

    #[test]
    fn l1_engine_roundtrip_is_correct_and_reloads() {
        let e = corpus::load("L1").unwrap();
        let cfg = RoundtripConfig { steps: Some(3), ..Default::default() };
        let run = roundtrip(&e, &cfg);
        assert_eq!(run.verdict(), Verdict::Correct, "{:?}", run.errors);
        let row = ReportRow::of(&run);
        assert_eq!((row.dfas, row.final_patterns, row.min_votes, row.max_votes), (3, 1, 2, 2));
        let dir = std::env::temp_dir().join(format!("prsynth-run-{}", std::process::id()));
        run.save(&dir).unwrap();
        let back = Run::load(&dir).unwrap();
        assert_eq!(back.dfas, run.dfas);
        assert_eq!(ReportRow::of(&back), row);
        assert_eq!(collect_runs(&[dir.clone()]).unwrap().len(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_directory_gives_empty_table() {
        let dir = std::env::temp_dir().join(format!("prsynth-empty-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let runs = collect_runs(&[dir.clone()]).unwrap();
        assert!(report(&runs).is_empty());
        fs::remove_dir_all(&dir).unwrap();
    }
}
