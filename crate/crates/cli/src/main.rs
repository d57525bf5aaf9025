use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use ragveil_core::corpus::{load_anonymized, load_corpus, read_jsonl, write_anonymized, write_jsonl, Corpus, Document};
use ragveil_core::eval::{sweep, utility_scores, TauPolicy};
use ragveil_core::index::{build_index, leakage_rate, load_attack_queries, recall_at_k, VectorIndex};
use ragveil_core::metrics::feature_overlap;
use ragveil_core::pipeline::{Baseline, Pipeline, PipelineConfig, RunSummary};
use ragveil_core::select::{calibrate_threshold, greedy_gap_report, load_calibration_records, CalibrationSample, DEFAULT_MARGIN};
use ragveil_core::synth::{generate_corpus, SynthSpec};

/// Exit status when some documents failed and were left out of the output.
const EXIT_DOC_FAILURES: u8 = 2;

#[derive(Parser)]
#[command(name = "ragveil", version, about = "Context-aware anonymization of retrieval knowledge bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anonymize a corpus at the configured threshold (or run a baseline).
    Anonymize(AnonymizeArgs),
    /// Emit every document with per-entity score vectors as JSONL.
    Score(CorpusIo),
    /// Derive τ from documents annotated with their critical entities.
    Calibrate(CalibrateArgs),
    /// Build and save a vector index over a corpus.
    Index(CorpusIo),
    /// Retrieval, utility, leakage and feature-overlap evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Grid sweep over (β, γ).
    Sweep(SweepArgs),
    /// Compare threshold selection with the exhaustive optimum per document.
    ExactCompare(ExactArgs),
    /// Generate the seeded synthetic corpus, lexicon and queries.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for per-document work.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn pipeline(&self) -> Result<Pipeline> {
        let cfg = PipelineConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        let p = Pipeline::from_config(cfg)?;
        Ok(match self.workers {
            Some(n) => p.with_workers(n)?,
            None => p,
        })
    }
}

#[derive(Args)]
struct CorpusIo {
    #[command(flatten)]
    common: Common,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "text")]
    text_field: String,
    #[arg(long)]
    id_field: Option<String>,
}

impl CorpusIo {
    fn corpus(&self) -> Result<Corpus> {
        load(&self.input, &self.text_field, self.id_field.as_deref())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Trip,
    Origin,
    Redact,
}

#[derive(Args)]
struct AnonymizeArgs {
    #[command(flatten)]
    io: CorpusIo,
    #[arg(long, value_enum, default_value = "trip")]
    method: Method,
    /// Overrides the configured τ.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// Where to write the run summary JSON; stderr when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus holding the calibration documents.
    #[arg(long)]
    corpus: PathBuf,
    /// JSONL of {"id", "critical": [entity indices]}.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    margin: f64,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Recall@{1,5,10} between original and anonymized indexes.
    Retrieval(PairArgs),
    /// Mean BLEU and ROUGE-L of anonymized text against the original.
    Utility(PairArgs),
    /// Leakage rate of attack queries against the anonymized corpus.
    Leakage(PairArgs),
    /// Pairwise Spearman among the three entity features of a scored corpus.
    Overlap(OverlapArgs),
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    orig: PathBuf,
    /// Anonymized JSONL as written by `anonymize`.
    #[arg(long)]
    anon: PathBuf,
    /// Query JSONL {"query", "sensitive"}; required except for utility.
    #[arg(long)]
    queries: Option<PathBuf>,
}

#[derive(Args)]
struct OverlapArgs {
    /// Output of `score`.
    #[arg(long)]
    scored: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// JSON grid: {"alpha", "beta": [...], "gamma": [...], "tau"?: f, "calibration"?: path, "margin"?: f}.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default = "one")]
    alpha: f64,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    tau: Option<f64>,
    calibration: Option<PathBuf>,
    margin: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    n_docs: usize,
    #[arg(long, default_value_t = 3)]
    min_entities: usize,
    #[arg(long, default_value_t = 8)]
    max_entities: usize,
    #[arg(long, default_value_t = 2000)]
    vocab_size: usize,
    /// JSON object label → probability; the built-in mix when absent.
    #[arg(long)]
    label_mix: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn load(path: &Path, text_field: &str, id_field: Option<&str>) -> Result<Corpus> {
    load_corpus(path, text_field, id_field).with_context(|| format!("loading corpus {}", path.display()))
}

fn write_json(value: &impl serde::Serialize, path: Option<&Path>) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, s + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{s}"),
    }
    Ok(())
}

fn anon_corpus(path: &Path) -> Result<Corpus> {
    let docs = load_anonymized(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Corpus::from_anonymized(&docs, path.display().to_string())?)
}

fn report_failures(summary: &RunSummary) -> ExitCode {
    for f in &summary.failures {
        log::error!("document '{}' failed: {}", f.id, f.error);
    }
    if summary.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_DOC_FAILURES)
    }
}

fn anonymize(a: &AnonymizeArgs) -> Result<ExitCode> {
    let p = a.io.common.pipeline()?;
    let corpus = a.io.corpus()?;
    let out = match a.method {
        Method::Trip => p.run_with_tau(&corpus, a.tau.unwrap_or(p.config.tau)),
        Method::Origin => p.run_baseline(Baseline::Origin, &corpus),
        Method::Redact => p.run_baseline(Baseline::Redact, &corpus),
    };
    write_anonymized(&out.docs, &a.io.out)?;
    match &a.summary {
        Some(path) => write_json(&out.summary, Some(path))?,
        None => eprintln!("{}", serde_json::to_string(&out.summary)?),
    }
    Ok(report_failures(&out.summary))
}

fn score(io: &CorpusIo) -> Result<ExitCode> {
    let p = io.common.pipeline()?;
    let corpus = io.corpus()?;
    let mut scored = Vec::new();
    let mut failed = false;
    for (doc, r) in corpus.docs.iter().zip(p.score_corpus(&corpus)) {
        match r {
            Ok(d) => scored.push(d),
            Err(e) => {
                failed = true;
                log::error!("document '{}' failed: {e}", doc.id);
            }
        }
    }
    write_jsonl(&scored, &io.out)?;
    Ok(if failed { ExitCode::from(EXIT_DOC_FAILURES) } else { ExitCode::SUCCESS })
}

fn calibrate(a: &CalibrateArgs) -> Result<ExitCode> {
    let p = a.common.pipeline()?;
    let corpus = load(&a.corpus, "text", None)?;
    let records = load_calibration_records(&a.samples)?;
    let mut samples = Vec::with_capacity(records.len());
    for r in &records {
        let doc = corpus
            .get(&r.id)
            .with_context(|| format!("calibration sample '{}' is not in the corpus", r.id))?;
        let scored = p.score(doc).with_context(|| format!("scoring '{}'", r.id))?;
        samples.push(CalibrationSample::new(scored, r.critical.iter().copied().collect())?);
    }
    let tau = calibrate_threshold(&samples, a.margin)?;
    write_json(&serde_json::json!({ "tau": tau, "margin": a.margin, "samples": samples.len() }), None)?;
    Ok(ExitCode::SUCCESS)
}

fn index(io: &CorpusIo) -> Result<ExitCode> {
    let p = io.common.pipeline()?;
    let idx = build_index(&io.corpus()?, p.embedder(), p.config.retrieval.metric)?;
    idx.save(&io.out)?;
    Ok(ExitCode::SUCCESS)
}

fn eval(cmd: &EvalCommand) -> Result<ExitCode> {
    if let EvalCommand::Overlap(o) = cmd {
        let docs: Vec<Document> = read_jsonl(&o.scored)?;
        write_json(&feature_overlap(&docs), None)?;
        return Ok(ExitCode::SUCCESS);
    }
    let (EvalCommand::Retrieval(a) | EvalCommand::Utility(a) | EvalCommand::Leakage(a)) = cmd else {
        unreachable!()
    };
    let cfg = PipelineConfig::load(&a.config)?;
    let p = Pipeline::from_config(cfg)?;
    let orig = load(&a.orig, "text", None)?;
    let anon = anon_corpus(&a.anon)?;
    let queries = || -> Result<_> {
        let path = a.queries.as_ref().context("--queries is required for this evaluation")?;
        Ok(load_attack_queries(path)?)
    };
    let (e, metric, k) = (p.embedder(), p.config.retrieval.metric, p.config.retrieval.k);
    let value = match cmd {
        EvalCommand::Retrieval(_) => {
            let q = queries()?;
            let texts: Vec<&str> = q.iter().map(|q| q.query.as_str()).collect();
            let (oi, ai) = (build_index(&orig, e, metric)?, build_index(&anon, e, metric)?);
            let recall: BTreeMap<String, f64> = [1usize, 5, 10]
                .iter()
                .map(|&k| Ok((k.to_string(), recall_at_k(&oi, &ai, &texts, k, e)?)))
                .collect::<Result<_>>()?;
            serde_json::json!({ "recall_at_k": recall })
        }
        EvalCommand::Utility(_) => {
            let (bleu, rouge_l) = utility_scores(&orig, &anon)?;
            serde_json::json!({ "bleu": bleu, "rouge_l": rouge_l })
        }
        _ => {
            let attacks: Vec<_> = queries()?.into_iter().filter(|q| !q.sensitive.is_empty()).collect();
            if attacks.is_empty() {
                bail!("no query lists sensitive surfaces");
            }
            let ai: VectorIndex = build_index(&anon, e, metric)?;
            serde_json::json!({ "leakage_rate": leakage_rate(&ai, &attacks, k, e, &anon)?, "k": k })
        }
    };
    write_json(&value, None)?;
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(a: &SweepArgs) -> Result<ExitCode> {
    let p = a.common.pipeline()?;
    let src = std::fs::read_to_string(&a.grid).with_context(|| format!("reading {}", a.grid.display()))?;
    let grid: GridFile = serde_json::from_str(&src).with_context(|| format!("parsing {}", a.grid.display()))?;
    let policy = match (&grid.calibration, grid.tau) {
        (Some(_), Some(_)) => bail!("grid sets both tau and calibration"),
        (Some(path), None) => {
            let path = if path.is_relative() { a.grid.parent().unwrap_or(Path::new(".")).join(path) } else { path.clone() };
            TauPolicy::calibrated(&load_calibration_records(path)?, grid.margin.unwrap_or(DEFAULT_MARGIN))
        }
        (None, tau) => TauPolicy::Fixed(tau.unwrap_or(p.config.tau)),
    };
    let corpus = load(&a.corpus, "text", None)?;
    let queries = load_attack_queries(&a.queries)?;
    let result = sweep(&p, &corpus, &queries, grid.alpha, &grid.beta, &grid.gamma, &policy)?;
    write_json(&result, Some(&a.out))?;
    if let Some(csv) = &a.csv {
        std::fs::write(csv, result.to_csv()?).with_context(|| format!("writing {}", csv.display()))?;
    }
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        log::error!("{failed} sweep cells failed");
        return Ok(ExitCode::from(EXIT_DOC_FAILURES));
    }
    Ok(ExitCode::SUCCESS)
}

fn exact_compare(a: &ExactArgs) -> Result<ExitCode> {
    let p = a.common.pipeline()?;
    let corpus = load(&a.input, "text", None)?;
    let mut scored = Vec::new();
    let mut failed = false;
    for (doc, r) in corpus.docs.iter().zip(p.score_corpus(&corpus)) {
        match r {
            Ok(d) => scored.push(d),
            Err(e) => {
                failed = true;
                log::error!("document '{}' failed: {e}", doc.id);
            }
        }
    }
    let o = &p.config.optimize;
    let report = greedy_gap_report(&scored, p.config.tau, &p.config.weights, o.b_priv, o.eta, o.min_delta)?;
    write_json(&report, a.out.as_deref())?;
    Ok(if failed { ExitCode::from(EXIT_DOC_FAILURES) } else { ExitCode::SUCCESS })
}

fn synth(a: &SynthArgs) -> Result<ExitCode> {
    let mut spec = SynthSpec {
        n_docs: a.n_docs,
        entities_per_doc: (a.min_entities, a.max_entities),
        seed: a.seed,
        vocab_size: a.vocab_size,
        ..SynthSpec::default()
    };
    if let Some(path) = &a.label_mix {
        let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        spec.label_mix = serde_json::from_str(&src)?;
    }
    let out = generate_corpus(&spec)?;
    out.write_to(&a.out_dir)?;
    eprintln!(
        "wrote {} documents, {} lexicon entries, {} queries to {}",
        out.corpus.len(),
        out.lexicon.len(),
        out.queries.len(),
        a.out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Anonymize(a) => anonymize(a),
        Command::Score(io) => score(io),
        Command::Calibrate(a) => calibrate(a),
        Command::Index(io) => index(io),
        Command::Eval(e) => eval(e),
        Command::Sweep(a) => run_sweep(a),
        Command::ExactCompare(a) => exact_compare(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
