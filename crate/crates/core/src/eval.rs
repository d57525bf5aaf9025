//! Evaluation harness: retrieval overlap, text utility, leakage, and the
//! weight sweep.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnonymizedDocument, Corpus, Document};
use crate::embed::TextEmbedder;
use crate::error::{Error, Result};
use crate::index::{build_index, leakage_rate, recall_at_k, AttackQuery, Metric, VectorIndex};
use crate::metrics::{bleu, feature_overlap, rouge_l, spearman, DEFAULT_MAX_N, DEFAULT_ROUGE_BETA};
use crate::pipeline::Pipeline;
use crate::scoring::{rescore, Weights};
use crate::select::{calibrate_threshold, CalibrationRecord, CalibrationSample};

pub const REPORT_KS: [usize; 3] = [1, 5, 10];

/// Caveats attached to every report.
pub const PROXY_NOTES: [&str; 2] = [
    "leakage is a retrieval-side proxy: an attack counts as leaked when any sensitive surface appears in its top-k anonymized context",
    "BLEU and ROUGE-L compare anonymized text against the original text, not generated answers",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Keyed by k.
    pub recall_at_k: BTreeMap<usize, f64>,
    pub bleu: f64,
    pub rouge_l: f64,
    pub leakage_rate: Option<f64>,
    pub spearman: BTreeMap<String, f64>,
    pub config: serde_json::Value,
    pub notes: Vec<String>,
}

/// The original corpus with its index, shared across evaluations.
pub struct EvalContext<'a> {
    pub original: &'a Corpus,
    pub original_index: VectorIndex,
    pub queries: &'a [AttackQuery],
    pub embedder: &'a dyn TextEmbedder,
    pub metric: Metric,
    /// Depth used for leakage.
    pub k: usize,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        original: &'a Corpus,
        queries: &'a [AttackQuery],
        embedder: &'a dyn TextEmbedder,
        metric: Metric,
        k: usize,
    ) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::InvalidInput("evaluation needs at least one query".into()));
        }
        Ok(EvalContext {
            original,
            original_index: build_index(original, embedder, metric)?,
            queries,
            embedder,
            metric,
            k,
        })
    }

    /// Aligns anonymized output with the original corpus. Documents missing
    /// from the output (failed upstream) are an error.
    pub fn align(&self, anon: &[AnonymizedDocument]) -> Result<Corpus> {
        let by_id: HashMap<&str, &AnonymizedDocument> = anon.iter().map(|d| (d.id.as_str(), d)).collect();
        let mut docs = Vec::with_capacity(self.original.len());
        for d in &self.original.docs {
            let a = by_id
                .get(d.id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("anonymized output lacks document '{}'", d.id)))?;
            docs.push(Document::without_entities(a.id.clone(), a.text.clone()));
        }
        if anon.len() != docs.len() {
            return Err(Error::InvalidInput("anonymized output has documents absent from the original".into()));
        }
        Corpus::new(docs, "anonymized")
    }

    pub fn recall(&self, anon: &Corpus) -> Result<BTreeMap<usize, f64>> {
        let anon_index = build_index(anon, self.embedder, self.metric)?;
        let queries: Vec<&str> = self.queries.iter().map(|q| q.query.as_str()).collect();
        REPORT_KS
            .iter()
            .map(|&k| Ok((k, recall_at_k(&self.original_index, &anon_index, &queries, k, self.embedder)?)))
            .collect()
    }

    /// Mean BLEU and ROUGE-L of each anonymized text against its original.
    pub fn utility(&self, anon: &Corpus) -> Result<(f64, f64)> {
        utility_scores(self.original, anon)
    }

    /// Leakage over the queries that name sensitive surfaces; `None` when
    /// no query does.
    pub fn leakage(&self, anon: &Corpus) -> Result<Option<f64>> {
        let attacks: Vec<AttackQuery> = self.queries.iter().filter(|q| !q.sensitive.is_empty()).cloned().collect();
        if attacks.is_empty() {
            return Ok(None);
        }
        let anon_index = build_index(anon, self.embedder, self.metric)?;
        leakage_rate(&anon_index, &attacks, self.k, self.embedder, anon).map(Some)
    }

    pub fn evaluate(&self, method: &str, anon: &[AnonymizedDocument], config: serde_json::Value) -> Result<EvalReport> {
        let anon = self.align(anon)?;
        let (bleu, rouge_l) = self.utility(&anon)?;
        Ok(EvalReport {
            method: method.to_string(),
            recall_at_k: self.recall(&anon)?,
            bleu,
            rouge_l,
            leakage_rate: self.leakage(&anon)?,
            spearman: BTreeMap::new(),
            config,
            notes: PROXY_NOTES.iter().map(|s| s.to_string()).collect(),
        })
    }
}

pub fn utility_scores(original: &Corpus, anon: &Corpus) -> Result<(f64, f64)> {
    if original.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let (mut b, mut r) = (0.0, 0.0);
    for d in &original.docs {
        let a = anon
            .get(&d.id)
            .ok_or_else(|| Error::InvalidInput(format!("anonymized corpus lacks document '{}'", d.id)))?;
        b += bleu(&a.text, &d.text, DEFAULT_MAX_N)?;
        r += rouge_l(&a.text, &d.text, DEFAULT_ROUGE_BETA);
    }
    let n = original.len() as f64;
    Ok((b / n, r / n))
}

/// How a sweep cell picks τ.
#[derive(Debug, Clone, PartialEq)]
pub enum TauPolicy {
    Fixed(f64),
    /// Recalibrate per cell from critical-entity annotations keyed by doc id.
    Calibrated {
        critical: BTreeMap<String, BTreeSet<usize>>,
        margin: f64,
    },
}

impl TauPolicy {
    pub fn calibrated(records: &[CalibrationRecord], margin: f64) -> Self {
        TauPolicy::Calibrated {
            critical: records
                .iter()
                .map(|r| (r.id.clone(), r.critical.iter().copied().collect()))
                .collect(),
            margin,
        }
    }

    pub fn resolve(&self, scored: &[Document]) -> Result<f64> {
        match self {
            TauPolicy::Fixed(t) => Ok(*t),
            TauPolicy::Calibrated { critical, margin } => {
                let samples = scored
                    .iter()
                    .filter_map(|d| critical.get(&d.id).map(|c| CalibrationSample::new(d.clone(), c.clone())))
                    .collect::<Result<Vec<_>>>()?;
                calibrate_threshold(&samples, *margin)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: Option<f64>,
    pub n_generalized: usize,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Row-major over (beta, gamma).
    pub cells: Vec<SweepCell>,
    /// Recall depth used for the trend statistic.
    pub k: usize,
    /// Spearman of (β+γ) against Recall@k over successful cells.
    pub weight_recall_spearman: Option<f64>,
}

impl SweepResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        w.write_record(["alpha", "beta", "gamma", "tau", "n_generalized", "recall_at_1", "recall_at_5", "recall_at_10", "bleu", "rouge_l", "leakage_rate", "error"])
            .map_err(io)?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let r = c.report.as_ref();
            let recall = |k: usize| fmt(r.and_then(|r| r.recall_at_k.get(&k).copied()));
            w.write_record([
                c.alpha.to_string(),
                c.beta.to_string(),
                c.gamma.to_string(),
                fmt(c.tau),
                c.n_generalized.to_string(),
                recall(1),
                recall(5),
                recall(10),
                fmt(r.map(|r| r.bleu)),
                fmt(r.map(|r| r.rouge_l)),
                fmt(r.and_then(|r| r.leakage_rate)),
                c.error.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// Grid sweep over (β, γ) at fixed α. Documents are scored once; each cell
/// only recombines the stored normalized scores.
pub fn sweep(
    pipeline: &Pipeline,
    corpus: &Corpus,
    queries: &[AttackQuery],
    alpha: f64,
    betas: &[f64],
    gammas: &[f64],
    policy: &TauPolicy,
) -> Result<SweepResult> {
    if betas.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidInput("sweep grid is empty".into()));
    }
    let scored = pipeline
        .score_corpus(corpus)
        .into_iter()
        .zip(&corpus.docs)
        .map(|(r, d)| r.map_err(|e| Error::InvalidInput(format!("scoring document '{}': {e}", d.id))))
        .collect::<Result<Vec<_>>>()?;
    let k = pipeline.config.retrieval.k;
    let ctx = EvalContext::new(corpus, queries, pipeline.embedder(), pipeline.config.retrieval.metric, k)?;
    let grid: Vec<(f64, f64)> = betas.iter().flat_map(|&b| gammas.iter().map(move |&g| (b, g))).collect();

    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|&(beta, gamma)| {
            let mut cell = SweepCell {
                alpha,
                beta,
                gamma,
                tau: None,
                n_generalized: 0,
                report: None,
                error: None,
            };
            let run = || -> Result<(f64, usize, EvalReport)> {
                let w = Weights::new(alpha, beta, gamma)?;
                let docs = scored.iter().map(|d| rescore(d, &w)).collect::<Result<Vec<_>>>()?;
                let tau = policy.resolve(&docs)?;
                let mut anon = Vec::with_capacity(docs.len());
                let mut n_gen = 0;
                for d in &docs {
                    let (sel, a) = pipeline.anonymize_scored(d, tau)?;
                    n_gen += sel.generalize_set.len();
                    anon.push(a);
                }
                let config = serde_json::json!({ "alpha": alpha, "beta": beta, "gamma": gamma, "tau": tau });
                let mut report = ctx.evaluate("trip", &anon, config)?;
                report.spearman = feature_overlap(&docs);
                Ok((tau, n_gen, report))
            };
            match run() {
                Ok((tau, n, report)) => {
                    cell.tau = Some(tau);
                    cell.n_generalized = n;
                    cell.report = Some(report);
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect();

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for c in &cells {
        if let Some(r) = c.report.as_ref().and_then(|r| r.recall_at_k.get(&k).copied().or_else(|| recall_fallback(r, k))) {
            xs.push(c.beta + c.gamma);
            ys.push(r);
        }
    }
    Ok(SweepResult {
        weight_recall_spearman: spearman(&xs, &ys).ok(),
        cells,
        k,
    })
}

fn recall_fallback(r: &EvalReport, k: usize) -> Option<f64> {
    // configured k outside the reported set: use the nearest reported depth
    REPORT_KS
        .iter()
        .min_by_key(|&&rk| rk.abs_diff(k))
        .and_then(|rk| r.recall_at_k.get(rk).copied())
}
