//! Exhaustive vector index, Recall@k overlap and the retrieval-context
//! leakage proxy.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, Corpus};
use crate::embed::{cosine_similarity, l2_distance, TextEmbedder, Vector};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    L2,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub vector: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub metric: Metric,
    pub dim: usize,
    pub entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn new(metric: Metric, entries: Vec<IndexEntry>) -> Result<Self> {
        let dim = entries.first().map(|e| e.vector.dim()).unwrap_or(0);
        let mut ids = BTreeSet::new();
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: e.vector.dim(),
                });
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(VectorIndex { metric, dim, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    /// Ranked ids nearest to `query`: l2 ascending or cosine descending,
    /// ties by id ascending.
    pub fn search(&self, query: &Vector, k: usize) -> Result<Vec<String>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .map(|e| {
                let key = match self.metric {
                    Metric::L2 => l2_distance(query, &e.vector)?,
                    Metric::Cosine => -cosine_similarity(query, &e.vector)?,
                };
                Ok((key, e.id.as_str()))
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self).map_err(|e| Error::io(path, e.into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let idx: VectorIndex = serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        VectorIndex::new(idx.metric, idx.entries)
    }
}

/// Embeds every document's full text.
pub fn build_index(corpus: &Corpus, embedder: &dyn TextEmbedder, metric: Metric) -> Result<VectorIndex> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot index an empty corpus".into()));
    }
    let texts: Vec<&str> = corpus.docs.iter().map(|d| d.text.as_str()).collect();
    let vectors = embedder.embed(&texts)?;
    let entries = corpus
        .docs
        .iter()
        .zip(vectors)
        .map(|(d, vector)| IndexEntry {
            id: d.id.clone(),
            vector,
        })
        .collect();
    VectorIndex::new(metric, entries)
}

pub fn query_topk(index: &VectorIndex, query_text: &str, k: usize, embedder: &dyn TextEmbedder) -> Result<Vec<String>> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    index.search(&embedder.embed_one(query_text)?, k)
}

/// Mean over queries of |top-k(orig) ∩ top-k(anon)| / min(k, |index|).
pub fn recall_at_k(
    orig: &VectorIndex,
    anon: &VectorIndex,
    queries: &[&str],
    k: usize,
    embedder: &dyn TextEmbedder,
) -> Result<f64> {
    if orig.ids() != anon.ids() {
        return Err(Error::InvalidInput("indexes cover different document ids".into()));
    }
    if orig.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if queries.is_empty() {
        return Err(Error::InvalidInput("recall needs at least one query".into()));
    }
    let denom = k.min(orig.len()) as f64;
    let qv = embedder.embed(queries)?;
    let mut total = 0.0;
    for q in &qv {
        let a: BTreeSet<String> = orig.search(q, k)?.into_iter().collect();
        let b: BTreeSet<String> = anon.search(q, k)?.into_iter().collect();
        total += a.intersection(&b).count() as f64 / denom;
    }
    Ok(total / qv.len() as f64)
}

/// An extraction attack: a query and the surfaces it tries to elicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackQuery {
    pub query: String,
    pub sensitive: Vec<String>,
}

pub fn load_attack_queries(path: impl AsRef<Path>) -> Result<Vec<AttackQuery>> {
    read_jsonl(path)
}

/// Fraction of attack queries whose top-k retrieved texts contain any of the
/// query's sensitive surfaces (case-insensitive substring).
pub fn leakage_rate(
    anon_index: &VectorIndex,
    attacks: &[AttackQuery],
    k: usize,
    embedder: &dyn TextEmbedder,
    anon_corpus: &Corpus,
) -> Result<f64> {
    if anon_index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if attacks.is_empty() {
        return Err(Error::InvalidInput("leakage needs at least one attack query".into()));
    }
    if let Some(a) = attacks.iter().find(|a| a.sensitive.is_empty()) {
        return Err(Error::InvalidInput(format!("attack query '{}' lists no sensitive surfaces", a.query)));
    }
    let texts: HashMap<&str, String> = anon_corpus
        .docs
        .iter()
        .map(|d| (d.id.as_str(), d.text.to_lowercase()))
        .collect();
    let queries: Vec<&str> = attacks.iter().map(|a| a.query.as_str()).collect();
    let qv = embedder.embed(&queries)?;
    let mut hits = 0usize;
    for (attack, q) in attacks.iter().zip(&qv) {
        let ids = anon_index.search(q, k)?;
        let mut context = String::new();
        for id in &ids {
            let t = texts
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("index id '{id}' missing from anonymized corpus")))?;
            context.push_str(t);
            context.push('\n');
        }
        if attack.sensitive.iter().any(|s| context.contains(&s.to_lowercase())) {
            hits += 1;
        }
    }
    Ok(hits as f64 / attacks.len() as f64)
}
