use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prsynth::cfg::{prs_to_cfg, prs_to_cfg_general, Cfg, WeightedCfg};
use prsynth::corpus::{self, CorpusEntry, CorpusFile, DepthRule, Examples, PrsSpec, Truncation, Verdict};
use prsynth::inference::{infer, DEFAULT_THRESHOLD};
use prsynth::learner::{corrupt, lstar_extract, mark_bracket_depth, LStarConfig, NoisePolicy, TruncatedCfgTeacher};
use prsynth::pipeline::{
    self, collect_runs, format_table, load_sequence, report, save_sequence, Mode, RoundtripConfig, Run,
    PRS_SCHEMA, TRACE_SCHEMA,
};
use prsynth::prs::{generate_sequence, generate_with_noise, Generation};
use prsynth::{versioned, Exec, Prs};

const SCHEDULE_SCHEMA: &str = "prsynth.schedule";
const EXTRACTION_SCHEMA: &str = "prsynth.extraction";
const NOISE_SCHEMA: &str = "prsynth.noise";
const DEFAULT_TRUNCATION: Truncation = Truncation { depth: 4, len: 12 };

/// Exit status for a run whose non-correct verdict is the one its entry expects.
const EXPECTED_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "prsynth", version, about = "Infer pattern rule sets and grammars from DFA sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a DFA sequence from a rule set.
    Generate(GenerateArgs),
    /// Extract a DFA sequence with L* against a truncated grammar teacher.
    Extract(ExtractArgs),
    /// Infer a rule set from a stored DFA sequence.
    Infer(InferArgs),
    /// Convert a rule set to a context-free grammar.
    Convert(ConvertArgs),
    /// Generate or extract, infer, convert and score against the target.
    Roundtrip(RoundtripArgs),
    /// Tabulate stored roundtrip runs.
    Report(ReportArgs),
    /// Inspect the built-in languages.
    #[command(subcommand)]
    Corpus(CorpusCommand),
}

#[derive(Args)]
struct GenerateArgs {
    /// Rule set: a JSON file or a corpus entry name.
    #[arg(long)]
    prs: String,
    /// Number of automata, chosen uniformly among applicable steps.
    /// Without it, steps favour the least-used rules.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    min_uses: usize,
    #[arg(long, default_value_t = 40)]
    max_steps: usize,
    /// Spurious patterns to graft into the sequence.
    #[arg(long, default_value_t = 0)]
    spurious: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Grammar: a corpus entry name, a corpus JSON file or a grammar text file.
    #[arg(long)]
    grammar: String,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    len: Option<usize>,
    /// Noise policy JSON.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Directory of automata `A000.json`, `A001.json`, ...
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Rule set: a JSON file or a corpus entry name.
    #[arg(long)]
    prs: String,
    /// Use the construction that admits mixed hosts and mixed start rules.
    #[arg(long)]
    general: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RoundtripArgs {
    /// Corpus entry names or rule set files.
    targets: Vec<String>,
    /// Every corpus entry.
    #[arg(long, conflicts_with = "targets")]
    all: bool,
    /// Extract with L* instead of generating from the rule set.
    #[arg(long)]
    extraction: bool,
    #[arg(long)]
    seed: u64,
    /// Default: 2 with noise, 1 without.
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_uses: usize,
    #[arg(long, default_value_t = 0)]
    spurious: usize,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Length bound of the language comparison.
    #[arg(long, default_value_t = 12)]
    bound: usize,
    /// Run without worker threads.
    #[arg(long)]
    sequential: bool,
    /// Directory for the run artifacts; one subdirectory per target.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, or directories of run directories.
    dirs: Vec<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum CorpusCommand {
    List,
    Show {
        name: String,
        /// Print the stored JSON document.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Extract(a) => extract(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Convert(a) => convert(a),
        Command::Roundtrip(a) => roundtrip(a),
        Command::Report(a) => report_cmd(a),
        Command::Corpus(c) => corpus_cmd(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

macro_rules! out {
    ($($t:tt)*) => {
        emit(format_args!($($t)*))
    };
}

/// Prints a line; a closed stdout (e.g. piping into `head`) ends the process quietly.
fn emit(line: impl std::fmt::Display) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn is_file(arg: &str) -> bool {
    Path::new(arg).is_file()
}

/// A rule set from a stored PRS document, a hand-written pattern/rule
/// `PrsSpec` document, or the ground truth of a corpus entry.
fn load_prs(arg: &str) -> Result<Prs> {
    if !is_file(arg) {
        let e = corpus::load(arg).with_context(|| format!("`{arg}` is neither a file nor a corpus entry"))?;
        return e.ground_truth.ok_or_else(|| anyhow!("corpus entry {} has no rule set", e.name));
    }
    let text = fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
    match versioned::from_json::<Prs>(PRS_SCHEMA, &text) {
        Ok(p) => {
            p.validate().map_err(|e| anyhow!("{arg}: {e}"))?;
            Ok(p)
        }
        Err(stored) => {
            let spec: PrsSpec = serde_json::from_str(&text)
                .map_err(|_| anyhow!("{arg}: not a rule set document ({stored})"))?;
            spec.build().map_err(|e| anyhow!("{arg}: {e}"))
        }
    }
}

/// A corpus entry, a corpus JSON file, or a plain grammar whose bracket
/// productions count towards depth.
fn load_entry(arg: &str) -> Result<CorpusEntry> {
    if !is_file(arg) {
        return Ok(corpus::load(arg)?);
    }
    let text = fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
    if text.trim_start().starts_with('{') {
        return Ok(corpus::parse(&text).with_context(|| format!("parsing {arg}"))?);
    }
    let g = Cfg::parse_text(&text).with_context(|| format!("parsing {arg}"))?;
    let name = Path::new(arg).file_stem().map_or("grammar".into(), |s| s.to_string_lossy().into_owned());
    Ok(entry_for(name, g, None))
}

fn entry_for(name: String, g: Cfg, prs: Option<Prs>) -> CorpusEntry {
    let source = CorpusFile {
        name: name.clone(),
        description: String::new(),
        grammar: g.to_text(),
        weights: None,
        depth: DepthRule::Brackets,
        truncation: DEFAULT_TRUNCATION,
        expected: Verdict::Correct,
        examples: Examples::default(),
        prs: None,
    };
    CorpusEntry {
        name,
        description: String::new(),
        grammar: WeightedCfg::uniform(mark_bracket_depth(&g)),
        ground_truth: prs,
        truncation: DEFAULT_TRUNCATION,
        expected: Verdict::Correct,
        members: Vec::new(),
        non_members: Vec::new(),
        source,
    }
}

fn load_noise(path: &Path) -> Result<NoisePolicy> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(versioned::from_json(NOISE_SCHEMA, &text).with_context(|| format!("parsing {}", path.display()))?)
}

fn generate(a: GenerateArgs) -> Result<u8> {
    let prs = load_prs(&a.prs)?;
    let how = match a.steps {
        Some(steps) => Generation::Random { seed: a.seed, steps },
        None => Generation::Covering { seed: a.seed, min_uses: a.min_uses, max_steps: a.max_steps },
    };
    let g = generate_sequence(&prs, &how)?;
    let dfas = if a.spurious > 0 {
        let (dfas, noisy) = generate_with_noise(&prs, &g.schedule, a.spurious, a.seed)?;
        write(&a.out.join("noise.json"), &versioned::to_json(NOISE_SCHEMA, &serde_json::json!({ "noisy_steps": noisy })))?;
        dfas
    } else {
        g.dfas
    };
    save_sequence(&a.out, &dfas)?;
    write(&a.out.join("schedule.json"), &versioned::to_json(SCHEDULE_SCHEMA, &serde_json::json!({ "steps": g.schedule })))?;
    out!("wrote {} automata to {}", dfas.len(), a.out.display());
    Ok(0)
}

fn extract(a: ExtractArgs) -> Result<u8> {
    let entry = load_entry(&a.grammar)?;
    let depth = a.depth.unwrap_or(entry.truncation.depth);
    let len = a.len.unwrap_or(entry.truncation.len);
    let teacher = TruncatedCfgTeacher::new(entry.cfg().clone(), depth, len);
    let cfg = LStarConfig::default();
    let (x, corrupted) = match &a.noise {
        None => (lstar_extract(&teacher, &cfg)?, Default::default()),
        Some(path) => {
            let noisy = corrupt(teacher, load_noise(path)?, a.seed)?;
            let x = lstar_extract(&noisy, &cfg)?;
            let log: std::collections::BTreeMap<String, bool> =
                noisy.corruption_log().into_iter().map(|(w, b)| (prsynth::automata::format_word(&w), b)).collect();
            (x, log)
        }
    };
    save_sequence(&a.out, &x.hypotheses)?;
    let meta = serde_json::json!({
        "grammar": entry.name,
        "depth": depth,
        "len": len,
        "seed": a.seed,
        "meta": x.meta,
        "corrupted": corrupted,
    });
    write(&a.out.join("meta.json"), &versioned::to_json(EXTRACTION_SCHEMA, &meta))?;
    out!(
        "wrote {} automata to {} ({} membership, {} equivalence queries)",
        x.hypotheses.len(),
        a.out.display(),
        x.meta.membership_queries,
        x.meta.equivalence_queries
    );
    Ok(0)
}

fn infer_cmd(a: InferArgs) -> Result<u8> {
    let dfas = load_sequence(&a.seq)?;
    if dfas.is_empty() {
        bail!("no automata in {}", a.seq.display());
    }
    let rep = infer(&dfas, a.threshold);
    if let Some(path) = &a.trace {
        let doc = serde_json::json!({ "threshold": a.threshold, "steps": rep.trace });
        write(path, &versioned::to_json(TRACE_SCHEMA, &doc))?;
    }
    let Some(prs) = &rep.prs else {
        bail!("no rule set: {}", rep.error.as_deref().unwrap_or("nothing inferred"));
    };
    if let Some(path) = &a.out {
        write(path, &versioned::to_json(PRS_SCHEMA, prs))?;
    }
    for r in &prs.rules {
        out!("{}", prs.rule_to_string(r));
    }
    if !rep.unresolved.is_empty() {
        eprintln!("unresolved steps: {:?}", rep.unresolved);
    }
    Ok(0)
}

fn convert(a: ConvertArgs) -> Result<u8> {
    let prs = load_prs(&a.prs)?;
    let g = if a.general {
        prs_to_cfg_general(&prs)
    } else {
        prs_to_cfg(&prs).map_err(|e| anyhow!("{e}"))?
    };
    match &a.out {
        Some(path) => write(path, &g.to_text())?,
        None => emit(g.to_text().trim_end()),
    }
    let (n, p) = g.size();
    eprintln!("{n} nonterminals, {p} productions");
    Ok(0)
}

fn roundtrip(a: RoundtripArgs) -> Result<u8> {
    let entries: Vec<CorpusEntry> = if a.all {
        corpus::load_all()?
    } else if a.targets.is_empty() {
        bail!("name at least one corpus entry or rule set file, or pass --all");
    } else {
        a.targets
            .iter()
            .map(|t| {
                if is_file(t) && !a.extraction {
                    let prs = load_prs(t)?;
                    let name = Path::new(t).file_stem().map_or("prs".into(), |s| s.to_string_lossy().into_owned());
                    Ok(entry_for(name, pipeline::grammar_of(&prs), Some(prs)))
                } else {
                    load_entry(t)
                }
            })
            .collect::<Result<_>>()?
    };
    let noise = a.noise.as_deref().map(load_noise).transpose()?;
    let base = RoundtripConfig {
        mode: if a.extraction { Mode::Extraction } else { Mode::Engine },
        seed: a.seed,
        threshold: a.threshold,
        steps: a.steps,
        min_uses: a.min_uses,
        spurious: a.spurious,
        noise,
        bound: a.bound,
        exec: if a.sequential { Exec::Sequential } else { Exec::default() },
        ..Default::default()
    };
    let runs: Vec<Run> = std::thread::scope(|s| {
        let handles: Vec<_> = entries
            .iter()
            .map(|e| {
                let mut cfg = base.clone();
                if a.depth.is_some() || a.len.is_some() {
                    cfg.truncation = Some(Truncation {
                        depth: a.depth.unwrap_or(e.truncation.depth),
                        len: a.len.unwrap_or(e.truncation.len),
                    });
                }
                let go = move || pipeline::roundtrip(e, &cfg);
                if a.sequential {
                    Ok(go())
                } else {
                    Err(s.spawn(go))
                }
            })
            .collect();
        handles.into_iter().map(|h| h.unwrap_or_else(|r| r.join().expect("roundtrip worker"))).collect()
    });
    let mut code = 0;
    for r in &runs {
        if let Some(out) = &a.out {
            let dir = if runs.len() == 1 { out.clone() } else { out.join(&r.name) };
            r.save(&dir)?;
        }
        let rules = r.inference.prs.as_ref().map_or(0, |p| p.rules.len());
        // no sequence means a stage failed before inference
        let status = if r.num_dfas == 0 {
            1
        } else if r.verdict() == Verdict::Correct {
            0
        } else if r.expected_failure() {
            EXPECTED_FAILURE
        } else {
            1
        };
        let note = match status {
            0 => String::new(),
            2 => " (expected)".into(),
            _ => format!(" (expected {})", r.expected.map_or("-".into(), |v| v.to_string())),
        };
        out!("{}: {}{note}, {} DFAs, {rules} rules", r.name, r.verdict(), r.num_dfas);
        for e in &r.errors {
            eprintln!("{}: {e}", r.name);
        }
        code = match (code, status) {
            (1, _) | (_, 1) => 1,
            (c, s) => c.max(s),
        };
    }
    Ok(code)
}

fn report_cmd(a: ReportArgs) -> Result<u8> {
    let rows = report(&collect_runs(&a.dirs)?);
    if a.json {
        out!("{}", versioned::to_json("prsynth.report", &serde_json::json!({ "rows": rows })));
    } else {
        emit(format_table(&rows).trim_end());
    }
    Ok(0)
}

fn corpus_cmd(c: CorpusCommand) -> Result<u8> {
    match c {
        CorpusCommand::List => {
            for e in corpus::load_all()? {
                let truth = if e.ground_truth.is_some() { "rules" } else { "-" };
                out!("{:<4} {:<6} {:<10} {}", e.name, truth, e.expected, e.description);
            }
        }
        CorpusCommand::Show { name, json } => {
            let e = corpus::load(&name)?;
            if json {
                out!("{}", versioned::to_json(corpus::SCHEMA, &e.source));
                return Ok(0);
            }
            out!("{}: {}", e.name, e.description);
            out!("truncation: depth {}, length {}", e.truncation.depth, e.truncation.len);
            out!("expected: {}", e.expected);
            out!("grammar:\n{}", e.cfg().to_text());
            if let Some(p) = &e.ground_truth {
                out!("rules:");
                for r in &p.rules {
                    out!("  {}", p.rule_to_string(r));
                }
            }
        }
    }
    Ok(0)
}
