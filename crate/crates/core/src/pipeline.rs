//! Configuration and end-to-end orchestration:
//! extract → score → select → generalize.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, write_anonymized, AnonymizedDocument, Corpus, Document};
use crate::embed::{Embedder, EmbedderSpec, TextEmbedder};
use crate::error::{Error, Result};
use crate::extract::{EntityExtractor, Extractor, ExtractorSpec};
use crate::generalize::{generalize_document, load_generalization_map, GeneralizationMap};
use crate::index::{Metric, DEFAULT_K};
use crate::scoring::{build_privacy_scorer, score_document, PrivacyScorer, PrivacyScorerSpec, Weights};
use crate::select::{
    entropy_lower_bound, select_by_threshold, Selection, DEFAULT_B_PRIV, DEFAULT_ETA, DEFAULT_MIN_DELTA,
};

/// Calibrated threshold reported for the medical Q&A corpus.
pub const DEFAULT_TAU_MEDICAL: f64 = 0.6237;
/// Calibrated threshold reported for the e-mail Q&A corpus.
pub const DEFAULT_TAU_EMAIL: f64 = 0.564;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub metric: Metric,
}

fn default_k() -> usize {
    DEFAULT_K
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: DEFAULT_K,
            metric: Metric::L2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default = "default_b_priv")]
    pub b_priv: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_min_delta")]
    pub min_delta: u64,
}

fn default_b_priv() -> f64 {
    DEFAULT_B_PRIV
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_min_delta() -> u64 {
    DEFAULT_MIN_DELTA
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            b_priv: DEFAULT_B_PRIV,
            eta: DEFAULT_ETA,
            min_delta: DEFAULT_MIN_DELTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub weights: Weights,
    pub tau: f64,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    pub extractor: ExtractorSpec,
    #[serde(default)]
    pub privacy_scorer: PrivacyScorerSpec,
    /// Generalization map file; the built-in table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_path: Option<PathBuf>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    /// Reference backends, default weights and the medical-corpus threshold.
    pub fn with_defaults(lexicon_path: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            weights: Weights::DEFAULT,
            tau: DEFAULT_TAU_MEDICAL,
            embedder: EmbedderSpec::default(),
            extractor: ExtractorSpec::reference(lexicon_path),
            privacy_scorer: PrivacyScorerSpec::default(),
            map_path: None,
            retrieval: RetrievalConfig::default(),
            optimize: OptimizeConfig::default(),
            seed: 0,
        }
    }

    /// Parses TOML (`.toml`) or JSON (anything else); relative paths inside
    /// are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&src).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&src).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.extractor.lexicon_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.map_path.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be finite, got {}", self.tau)));
        }
        if self.retrieval.k == 0 {
            return Err(Error::Config("retrieval.k must be at least 1".into()));
        }
        let o = &self.optimize;
        if !(o.b_priv >= 0.0 && o.b_priv.is_finite()) || !(o.eta >= 0.0 && o.eta.is_finite()) {
            return Err(Error::Config("optimize.b_priv and optimize.eta must be finite and non-negative".into()));
        }
        if o.min_delta < 2 {
            return Err(Error::Config("optimize.min_delta must be at least 2".into()));
        }
        self.embedder.validate()?;
        self.extractor.validate()?;
        self.privacy_scorer.validate()?;
        for p in self.extractor.lexicon_path.iter().chain(self.map_path.iter()) {
            if !p.exists() {
                return Err(Error::Config(format!("path does not exist: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Passthrough.
    Origin,
    /// Generalize every extracted entity.
    Redact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocSummary {
    pub id: String,
    pub n_entities: usize,
    pub n_generalized: usize,
    pub mean_psi: Option<f64>,
    /// |E_G| · log2(min_delta).
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub tau: Option<f64>,
    pub n_docs: usize,
    pub total_entities: usize,
    pub total_generalized: usize,
    pub mean_psi: Option<f64>,
    pub docs: Vec<DocSummary>,
    pub failures: Vec<DocFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub docs: Vec<AnonymizedDocument>,
    pub selections: Vec<Selection>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_anonymized(&self.docs, self.summary.method.clone())
    }
}

/// Backends resolved from a config, ready to process documents.
pub struct Pipeline {
    pub config: PipelineConfig,
    embedder: Arc<dyn TextEmbedder>,
    extractor: Arc<dyn EntityExtractor>,
    scorer: Arc<dyn PrivacyScorer>,
    map: GeneralizationMap,
    pool: Option<rayon::ThreadPool>,
}

impl Pipeline {
    pub fn from_config(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let embedder: Arc<dyn TextEmbedder> = Arc::new(Embedder::from_spec(&config.embedder)?);
        let extractor: Arc<dyn EntityExtractor> = Arc::new(Extractor::from_spec(&config.extractor)?);
        let scorer: Arc<dyn PrivacyScorer> = Arc::from(build_privacy_scorer(&config.privacy_scorer, extractor.clone())?);
        let map = match &config.map_path {
            Some(p) => load_generalization_map(p)?,
            None => GeneralizationMap::default_table().clone(),
        };
        Ok(Pipeline {
            config,
            embedder,
            extractor,
            scorer,
            map,
            pool: None,
        })
    }

    /// Uses caller-supplied backends; `config` supplies weights, τ and the
    /// retrieval/optimize settings only.
    pub fn with_backends(
        config: PipelineConfig,
        embedder: Arc<dyn TextEmbedder>,
        extractor: Arc<dyn EntityExtractor>,
        scorer: Arc<dyn PrivacyScorer>,
        map: GeneralizationMap,
    ) -> Self {
        Pipeline {
            config,
            embedder,
            extractor,
            scorer,
            map,
            pool: None,
        }
    }

    /// Bounds per-document parallelism to `workers` threads.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        self.pool = Some(pool);
        Ok(self)
    }

    pub fn embedder(&self) -> &dyn TextEmbedder {
        self.embedder.as_ref()
    }

    pub fn extractor(&self) -> &dyn EntityExtractor {
        self.extractor.as_ref()
    }

    pub fn map(&self) -> &GeneralizationMap {
        &self.map
    }

    /// Order-preserving parallel map over documents.
    pub(crate) fn par_map<T, F>(&self, docs: &[Document], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Document) -> T + Send + Sync,
    {
        match &self.pool {
            Some(pool) => pool.install(|| docs.par_iter().map(&f).collect()),
            None => docs.par_iter().map(&f).collect(),
        }
    }

    pub fn extract(&self, doc: &Document) -> Result<Document> {
        doc.with_entities(self.extractor.extract(&doc.text)?)
    }

    /// Extracts and scores under the configured weights.
    pub fn score(&self, doc: &Document) -> Result<Document> {
        let doc = self.extract(doc)?;
        score_document(&doc, &self.config.weights, self.embedder.as_ref(), self.scorer.as_ref())
    }

    pub fn score_corpus(&self, corpus: &Corpus) -> Vec<Result<Document>> {
        self.par_map(&corpus.docs, |d| self.score(d))
    }

    pub fn anonymize_scored(&self, scored: &Document, tau: f64) -> Result<(Selection, AnonymizedDocument)> {
        let sel = select_by_threshold(scored, tau)?;
        let anon = generalize_document(scored, &sel, &self.map)?;
        Ok((sel, anon))
    }

    fn doc_summary(&self, doc: &Document, sel: &Selection) -> Result<DocSummary> {
        let psis: Vec<f64> = doc.entities.iter().filter_map(|e| e.scores.map(|s| s.psi)).collect();
        let sizes = vec![self.config.optimize.min_delta; sel.generalize_set.len()];
        Ok(DocSummary {
            id: doc.id.clone(),
            n_entities: doc.entities.len(),
            n_generalized: sel.generalize_set.len(),
            mean_psi: (!psis.is_empty()).then(|| psis.iter().sum::<f64>() / psis.len() as f64),
            entropy_bits: entropy_lower_bound(&sizes)?.simplified_bits,
        })
    }

    fn collect(&self, method: &str, tau: Option<f64>, corpus: &Corpus, results: Vec<Result<(Document, Selection, AnonymizedDocument)>>) -> RunOutput {
        let mut docs = Vec::new();
        let mut selections = Vec::new();
        let mut summaries = Vec::new();
        let mut failures = Vec::new();
        for (src, r) in corpus.docs.iter().zip(results) {
            match r.and_then(|(d, sel, anon)| Ok((self.doc_summary(&d, &sel)?, sel, anon))) {
                Ok((summary, sel, anon)) => {
                    summaries.push(summary);
                    selections.push(sel);
                    docs.push(anon);
                }
                Err(e) => failures.push(DocFailure {
                    id: src.id.clone(),
                    error: e.to_string(),
                }),
            }
        }
        let psis: Vec<f64> = summaries.iter().filter_map(|s| s.mean_psi.map(|m| (m, s.n_entities))).map(|(m, n)| m * n as f64).collect();
        let total_entities: usize = summaries.iter().map(|s| s.n_entities).sum();
        let mean_psi = (total_entities > 0 && tau.is_some()).then(|| psis.iter().sum::<f64>() / total_entities as f64);
        RunOutput {
            summary: RunSummary {
                method: method.to_string(),
                tau,
                n_docs: corpus.len(),
                total_entities,
                total_generalized: summaries.iter().map(|s| s.n_generalized).sum(),
                mean_psi,
                docs: summaries,
                failures,
            },
            docs,
            selections,
        }
    }

    /// Threshold anonymization at the configured τ.
    pub fn run(&self, corpus: &Corpus) -> RunOutput {
        self.run_with_tau(corpus, self.config.tau)
    }

    pub fn run_with_tau(&self, corpus: &Corpus, tau: f64) -> RunOutput {
        let results = self.par_map(&corpus.docs, |d| {
            let scored = self.score(d)?;
            let (sel, anon) = self.anonymize_scored(&scored, tau)?;
            Ok((scored, sel, anon))
        });
        self.collect("trip", Some(tau), corpus, results)
    }

    /// Threshold anonymization of documents that already carry scores.
    pub fn run_scored(&self, scored: &Corpus, tau: f64) -> RunOutput {
        let results = self.par_map(&scored.docs, |d| {
            let (sel, anon) = self.anonymize_scored(d, tau)?;
            Ok((d.clone(), sel, anon))
        });
        self.collect("trip", Some(tau), scored, results)
    }

    pub fn run_baseline(&self, kind: Baseline, corpus: &Corpus) -> RunOutput {
        let results = self.par_map(&corpus.docs, |d| {
            let doc = self.extract(d)?;
            let sel = match kind {
                Baseline::Origin => Selection::new(&doc, BTreeSet::new(), f64::INFINITY)?,
                Baseline::Redact => Selection::generalize_all(&doc),
            };
            let anon = generalize_document(&doc, &sel, &self.map)?;
            Ok((doc, sel, anon))
        });
        let name = match kind {
            Baseline::Origin => "origin",
            Baseline::Redact => "redact",
        };
        self.collect(name, None, corpus, results)
    }
}

/// Loads the corpus, anonymizes it at `config.tau`, and writes the output.
pub fn run_pipeline(config: PipelineConfig, corpus_path: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<RunOutput> {
    let pipeline = Pipeline::from_config(config)?;
    let corpus = load_corpus(corpus_path, "text", None)?;
    let out = pipeline.run(&corpus);
    write_anonymized(&out.docs, out_path)?;
    Ok(out)
}

pub fn run_baseline(kind: Baseline, corpus: &Corpus, config: PipelineConfig) -> Result<RunOutput> {
    Ok(Pipeline::from_config(config)?.run_baseline(kind, corpus))
}
