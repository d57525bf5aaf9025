//! Entity quantification: marginal privacy risk, knowledge divergence,
//! topical relevance, and the weighted priority score that drives selection.
//!
//! Knowledge divergence and topical relevance are min-max normalized over the
//! entity set of one document. Marginal privacy risk is used as is.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Entity};
use crate::embed::{cosine_similarity, http_client, l2_distance, post_json, BackendKind, TextEmbedder};
use crate::error::{Error, Result};
use crate::extract::EntityExtractor;
use crate::generalize::mask_entity;

/// Placeholder used by the masking operator during scoring.
pub const MASK_TOKEN: &str = "[MASK]";

pub const DEFAULT_LEXICON_JSON: &str = include_str!("../data/privacy_lexicon.json");

/// Midpoints of the four rubric score bands.
pub const LEVEL_3_RISK: f64 = 0.85;
pub const LEVEL_2_RISK: f64 = 0.55;
pub const LEVEL_1_RISK: f64 = 0.25;
pub const LEVEL_0_RISK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreVector {
    pub s_priv: f64,
    pub s_knw_raw: f64,
    pub s_retr_raw: f64,
    pub s_knw: f64,
    pub s_retr: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Weights {
    pub const DEFAULT: Weights = Weights {
        alpha: 1.0,
        beta: 0.5,
        gamma: 0.4,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Weights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("weight {name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Weights {
        Weights {
            alpha: self.alpha * c,
            beta: self.beta * c,
            gamma: self.gamma * c,
        }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::DEFAULT
    }
}

pub fn priority_score(s: &ScoreVector, w: &Weights) -> f64 {
    w.alpha * s.s_priv - w.beta * s.s_retr - w.gamma * s.s_knw
}

/// Min-max scaling; a constant list maps to 0.5 everywhere.
pub fn normalize_scores(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot normalize an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("normalization input contains a non-finite value".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.5; values.len()]);
    }
    let range = max - min;
    Ok(values.iter().map(|v| ((v - min) / range).clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyScorerSpec {
    pub kind: BackendKind,
    /// Label to base risk; the built-in rubric table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl Default for PrivacyScorerSpec {
    fn default() -> Self {
        PrivacyScorerSpec {
            kind: BackendKind::Reference,
            lexicon: None,
            endpoint: None,
        }
    }
}

impl PrivacyScorerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Remote && self.endpoint.is_none() {
            return Err(Error::Config("remote privacy scorer requires an endpoint".into()));
        }
        if let Some(lex) = &self.lexicon {
            for (label, r) in lex {
                if !(0.0..=1.0).contains(r) {
                    return Err(Error::Config(format!("risk for '{label}' must lie in [0,1], got {r}")));
                }
            }
        }
        Ok(())
    }

    pub fn risk_table(&self) -> Result<BTreeMap<String, f64>> {
        match &self.lexicon {
            Some(l) => Ok(l.clone()),
            None => default_risk_table(),
        }
    }
}

pub fn default_risk_table() -> Result<BTreeMap<String, f64>> {
    serde_json::from_str(DEFAULT_LEXICON_JSON).map_err(|e| Error::Config(format!("built-in privacy lexicon: {e}")))
}

/// Maps texts to absolute privacy risk in [0,1].
pub trait PrivacyScorer: Send + Sync {
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>>;
}

/// Noisy-or over detected entities: `1 - prod(1 - r(label))`.
pub struct ReferencePrivacyScorer {
    risks: BTreeMap<String, f64>,
    extractor: Arc<dyn EntityExtractor>,
    missing: AtomicUsize,
}

impl ReferencePrivacyScorer {
    pub fn new(risks: BTreeMap<String, f64>, extractor: Arc<dyn EntityExtractor>) -> Self {
        ReferencePrivacyScorer {
            risks,
            extractor,
            missing: AtomicUsize::new(0),
        }
    }

    /// Number of detected entities whose label had no lexicon risk.
    pub fn missing_label_count(&self) -> usize {
        self.missing.load(Ordering::Relaxed)
    }

    pub fn score_text(&self, text: &str) -> Result<f64> {
        let ents = self.extractor.extract(text)?;
        let mut keep = 1.0;
        for e in &ents {
            match self.risks.get(&e.label) {
                Some(r) => keep *= 1.0 - r,
                None => {
                    self.missing.fetch_add(1, Ordering::Relaxed);
                    log::warn!("no privacy risk for label '{}', treating as 0", e.label);
                }
            }
        }
        Ok(1.0 - keep)
    }
}

impl PrivacyScorer for ReferencePrivacyScorer {
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>> {
        texts.iter().map(|t| self.score_text(t)).collect()
    }
}

#[derive(Serialize)]
struct PrivacyRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct PrivacyResponse {
    scores: Vec<f64>,
}

/// HTTP client for `POST {endpoint}/privacy_score`; scores clamped to [0,1].
#[derive(Debug, Clone)]
pub struct RemotePrivacyScorer {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemotePrivacyScorer {
    pub fn new(endpoint: impl Into<String>) -> Result<Self> {
        let endpoint = endpoint.into();
        Ok(RemotePrivacyScorer {
            client: http_client(&endpoint)?,
            endpoint: endpoint.trim_end_matches('/').to_string(),
        })
    }
}

impl PrivacyScorer for RemotePrivacyScorer {
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>> {
        let url = format!("{}/privacy_score", self.endpoint);
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(crate::embed::REMOTE_BATCH) {
            let resp: PrivacyResponse = post_json(&self.client, &url, &self.endpoint, &PrivacyRequest { texts: chunk })?;
            if resp.scores.len() != chunk.len() {
                return Err(Error::Contract {
                    endpoint: self.endpoint.clone(),
                    message: format!("{} scores for {} texts", resp.scores.len(), chunk.len()),
                });
            }
            for s in resp.scores {
                if !s.is_finite() {
                    return Err(Error::Contract {
                        endpoint: self.endpoint.clone(),
                        message: "non-finite privacy score".into(),
                    });
                }
                out.push(s.clamp(0.0, 1.0));
            }
        }
        Ok(out)
    }
}

pub fn build_privacy_scorer(spec: &PrivacyScorerSpec, extractor: Arc<dyn EntityExtractor>) -> Result<Box<dyn PrivacyScorer>> {
    spec.validate()?;
    Ok(match spec.kind {
        BackendKind::Reference => Box::new(ReferencePrivacyScorer::new(spec.risk_table()?, extractor)),
        BackendKind::Remote => Box::new(RemotePrivacyScorer::new(spec.endpoint.as_deref().unwrap_or_default())?),
    })
}

pub fn privacy_score_text(scorer: &dyn PrivacyScorer, text: &str) -> Result<f64> {
    Ok(scorer.score_texts(&[text])?[0])
}

fn ensure_member(doc: &Document, entity: &Entity) -> Result<()> {
    if doc
        .entities
        .iter()
        .any(|e| e.span() == entity.span() && e.surface == entity.surface)
    {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "entity '{}' at {}..{} is not part of document '{}'",
            entity.surface, entity.start, entity.end, doc.id
        )))
    }
}

/// `f(T) - f(mask_e(T))`.
pub fn marginal_privacy_risk(doc: &Document, entity: &Entity, scorer: &dyn PrivacyScorer) -> Result<f64> {
    ensure_member(doc, entity)?;
    let masked = mask_entity(&doc.text, entity, MASK_TOKEN)?;
    let s = scorer.score_texts(&[&doc.text, &masked])?;
    Ok(s[0] - s[1])
}

/// `1 - cos(E(T), E(mask_e(T)))`.
pub fn knowledge_divergence_raw(doc: &Document, entity: &Entity, embedder: &dyn TextEmbedder) -> Result<f64> {
    knowledge_divergence_raw_with(doc, entity, embedder, MASK_TOKEN)
}

pub fn knowledge_divergence_raw_with(
    doc: &Document,
    entity: &Entity,
    embedder: &dyn TextEmbedder,
    placeholder: &str,
) -> Result<f64> {
    ensure_member(doc, entity)?;
    let masked = mask_entity(&doc.text, entity, placeholder)?;
    let v = embedder.embed(&[&doc.text, &masked])?;
    Ok(1.0 - cosine_similarity(&v[0], &v[1])?)
}

/// `-||E(e) - E(T)||`.
pub fn topical_relevance_raw(doc: &Document, entity: &Entity, embedder: &dyn TextEmbedder) -> Result<f64> {
    ensure_member(doc, entity)?;
    let v = embedder.embed(&[&entity.surface, &doc.text])?;
    Ok(-l2_distance(&v[0], &v[1])?)
}

/// Scores every entity of `doc` with one embedding batch and one privacy batch.
pub fn score_document(
    doc: &Document,
    weights: &Weights,
    embedder: &dyn TextEmbedder,
    scorer: &dyn PrivacyScorer,
) -> Result<Document> {
    let n = doc.entities.len();
    if n == 0 {
        return Ok(doc.clone());
    }
    let masked: Vec<String> = doc
        .entities
        .iter()
        .map(|e| mask_entity(&doc.text, e, MASK_TOKEN))
        .collect::<Result<_>>()?;

    let mut priv_batch: Vec<&str> = Vec::with_capacity(n + 1);
    priv_batch.push(&doc.text);
    priv_batch.extend(masked.iter().map(String::as_str));
    let privacy = scorer.score_texts(&priv_batch)?;
    if privacy.len() != n + 1 {
        return Err(Error::InvalidInput(format!("privacy scorer returned {} scores for {} texts", privacy.len(), n + 1)));
    }

    let mut emb_batch = priv_batch;
    emb_batch.extend(doc.entities.iter().map(|e| e.surface.as_str()));
    let vecs = embedder.embed(&emb_batch)?;
    let h_doc = &vecs[0];

    let mut knw_raw = Vec::with_capacity(n);
    let mut retr_raw = Vec::with_capacity(n);
    for i in 0..n {
        knw_raw.push(1.0 - cosine_similarity(h_doc, &vecs[1 + i])?);
        retr_raw.push(-l2_distance(&vecs[1 + n + i], h_doc)?);
    }
    let knw = normalize_scores(&knw_raw)?;
    let retr = normalize_scores(&retr_raw)?;

    let mut out = doc.clone();
    for (i, e) in out.entities.iter_mut().enumerate() {
        let mut s = ScoreVector {
            s_priv: privacy[0] - privacy[1 + i],
            s_knw_raw: knw_raw[i],
            s_retr_raw: retr_raw[i],
            s_knw: knw[i],
            s_retr: retr[i],
            psi: 0.0,
        };
        s.psi = priority_score(&s, weights);
        e.scores = Some(s);
    }
    Ok(out)
}

/// Recomputes ψ for already-scored entities under different weights.
pub fn rescore(doc: &Document, weights: &Weights) -> Result<Document> {
    let mut out = doc.clone();
    for (i, e) in out.entities.iter_mut().enumerate() {
        let s = e.scores.as_mut().ok_or(Error::Unscored(i))?;
        s.psi = priority_score(s, weights);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{ReferenceEmbedder, Vector};
    use crate::extract::{default_labels, ReferenceExtractor};
    use std::sync::Mutex;

    fn lexicon_extractor(pairs: &[(&str, &str)]) -> Arc<dyn EntityExtractor> {
        let lex = pairs.iter().map(|(s, l)| (s.to_string(), l.to_string())).collect();
        Arc::new(ReferenceExtractor::new(lex, default_labels()).unwrap())
    }

    fn scorer(pairs: &[(&str, &str)]) -> ReferencePrivacyScorer {
        ReferencePrivacyScorer::new(default_risk_table().unwrap(), lexicon_extractor(pairs))
    }

    fn doc_with(x: &dyn EntityExtractor, text: &str) -> Document {
        Document::new("d", text, x.extract(text).unwrap()).unwrap()
    }

    #[test]
    fn rubric_levels_in_default_table() {
        let t = default_risk_table().unwrap();
        assert_eq!(t["person full name"], LEVEL_3_RISK);
        assert_eq!(t["person age"], LEVEL_2_RISK);
        assert_eq!(t["city name"], LEVEL_1_RISK);
        assert_eq!(t["medication"], LEVEL_0_RISK);
        assert_eq!(t.len(), 58);
    }

    #[test]
    fn noisy_or_examples() {
        let s = scorer(&[("alice", "person full name"), ("bob", "person full name")]);
        assert_eq!(s.score_text("no entities here").unwrap(), 0.0);
        assert!((s.score_text("alice is here").unwrap() - 0.85).abs() < 1e-12);
        // oracle: 1 - 0.15^2
        assert!((s.score_text("alice and bob").unwrap() - 0.9775).abs() < 1e-12);
    }

    #[test]
    fn missing_label_counts_as_zero_risk() {
        let s = scorer(&[("teal", "favorite color")]);
        let x = lexicon_extractor(&[("teal", "favorite color")]);
        assert!(x.extract("teal").unwrap().is_empty(), "label outside request list");
        let mut risks = BTreeMap::new();
        risks.insert("gender".to_string(), 0.25);
        let lex = vec![("teal".to_string(), "favorite color".to_string())];
        let labels = vec!["favorite color".to_string()];
        let x: Arc<dyn EntityExtractor> = Arc::new(ReferenceExtractor::new(lex, labels).unwrap());
        let s2 = ReferencePrivacyScorer::new(risks, x);
        assert_eq!(s2.score_text("teal shirt").unwrap(), 0.0);
        assert_eq!(s2.missing_label_count(), 1);
        assert_eq!(s.missing_label_count(), 0);
    }

    #[test]
    fn marginal_risk_examples() {
        let pairs = [("alice", "person full name"), ("bob", "person full name"), ("tuesday", "ordinal direction")];
        let s = scorer(&pairs);
        let x = lexicon_extractor(&pairs);

        let d = doc_with(x.as_ref(), "alice is here");
        assert!((marginal_privacy_risk(&d, &d.entities[0], &s).unwrap() - 0.85).abs() < 1e-12);

        let d = doc_with(x.as_ref(), "alice and bob");
        // oracle: 0.9775 - 0.85
        assert!((marginal_privacy_risk(&d, &d.entities[0], &s).unwrap() - 0.1275).abs() < 1e-12);

        let mut zero = default_risk_table().unwrap();
        zero.insert("ordinal direction".into(), 0.0);
        let s0 = ReferencePrivacyScorer::new(zero, x.clone());
        let d = doc_with(x.as_ref(), "alice on tuesday");
        assert_eq!(marginal_privacy_risk(&d, &d.entities[1], &s0).unwrap(), 0.0);
    }

    #[test]
    fn foreign_entity_rejected() {
        let x = lexicon_extractor(&[("alice", "person full name")]);
        let d = doc_with(x.as_ref(), "alice");
        let other = Entity::new("bob", "person full name", 0, 3);
        let e = ReferenceEmbedder::new(32);
        assert!(topical_relevance_raw(&d, &other, &e).is_err());
    }

    #[test]
    fn knowledge_divergence_examples() {
        let e = ReferenceEmbedder::new(256);
        // masking "MASK" with "[MASK]" leaves the token bag unchanged
        let d = Document::new("k", "MASK report", vec![Entity::new("MASK", "x", 0, 4)]).unwrap();
        assert_eq!(knowledge_divergence_raw(&d, &d.entities[0], &e).unwrap(), 0.0);

        let d = Document::new("k", "alice", vec![Entity::new("alice", "person full name", 0, 5)]).unwrap();
        assert_eq!(knowledge_divergence_raw_with(&d, &d.entities[0], &e, "").unwrap(), 1.0);

        let d = Document::new("k", "alice has diabetes", vec![Entity::new("alice", "person full name", 0, 5)]).unwrap();
        let got = knowledge_divergence_raw(&d, &d.entities[0], &e).unwrap();
        // oracle: direct formula on independently computed vectors
        let a = e.embed_text("alice has diabetes");
        let b = e.embed_text("[MASK] has diabetes");
        let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
        let expect = 1.0 - dot / (a.norm() * b.norm());
        assert!(got > 0.0);
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn topical_relevance_examples() {
        let e = ReferenceEmbedder::new(256);
        let d = Document::new("t", "diabetes", vec![Entity::new("diabetes", "disease", 0, 8)]).unwrap();
        assert_eq!(topical_relevance_raw(&d, &d.entities[0], &e).unwrap(), 0.0);

        let ha = e.embed_text("alice");
        let hz = e.embed_text("zebra");
        assert_eq!(ha.dot(&hz).unwrap(), 0.0, "fixture relies on disjoint buckets");

        // orthogonal unit vectors sit sqrt(2) apart
        let doc = Document::new("t", "alice zebra", vec![Entity::new("alice", "person full name", 0, 5)]).unwrap();
        let r_on = topical_relevance_raw(&doc, &doc.entities[0], &e).unwrap();
        assert!(r_on < 0.0);
        let text = "alice has diabetes";
        let d2 = Document::new("t2", text, vec![Entity::new("diabetes", "disease", 10, 18)]).unwrap();
        let on_topic = topical_relevance_raw(&d2, &d2.entities[0], &e).unwrap();
        let h_doc = e.embed_text(text);
        let off_topic = -crate::embed::l2_distance(&e.embed_text("volcano"), &h_doc).unwrap();
        assert!(on_topic < 0.0);
        assert!(on_topic > off_topic);
        assert!((off_topic + 2f64.sqrt()).abs() < 1e-12, "disjoint tokens give -sqrt(2)");
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_scores(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_scores(&[7.0, 7.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_scores(&[-3.0, -1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(normalize_scores(&[1.0, f64::NAN]).is_err());
        assert!(normalize_scores(&[]).is_err());
        let unit = [0.0, 0.25, 1.0, 0.6];
        assert_eq!(normalize_scores(&unit).unwrap(), unit.to_vec());
    }

    #[test]
    fn priority_examples() {
        let w = Weights::DEFAULT;
        let s = ScoreVector {
            s_priv: 0.8,
            s_retr: 0.4,
            s_knw: 0.5,
            ..Default::default()
        };
        assert!((priority_score(&s, &w) - 0.4).abs() < 1e-12);
        assert_eq!(priority_score(&ScoreVector::default(), &w), 0.0);
        let s = ScoreVector {
            s_priv: 1.0,
            ..Default::default()
        };
        assert_eq!(priority_score(&s, &Weights::new(1.0, 0.0, 0.0).unwrap()), 1.0);
        assert!(Weights::new(-1.0, 0.0, 0.0).is_err());
        assert!(Weights::new(1.0, f64::INFINITY, 0.0).is_err());
    }

    struct CountingEmbedder {
        inner: ReferenceEmbedder,
        calls: Mutex<Vec<usize>>,
    }

    impl TextEmbedder for CountingEmbedder {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>> {
            self.calls.lock().unwrap().push(texts.len());
            self.inner.embed(texts)
        }
    }

    #[test]
    fn score_document_batches_and_degenerate_cases() {
        let pairs = [("alice", "person full name"), ("diabetes", "disease"), ("insulin", "medication")];
        let s = scorer(&pairs);
        let x = lexicon_extractor(&pairs);
        let emb = CountingEmbedder {
            inner: ReferenceEmbedder::new(256),
            calls: Mutex::new(Vec::new()),
        };
        let empty = Document::without_entities("e", "nothing");
        assert_eq!(score_document(&empty, &Weights::default(), &emb, &s).unwrap(), empty);
        assert!(emb.calls.lock().unwrap().is_empty());

        let one = doc_with(x.as_ref(), "alice went home");
        let scored = score_document(&one, &Weights::default(), &emb, &s).unwrap();
        let sv = scored.entities[0].scores.unwrap();
        assert_eq!((sv.s_knw, sv.s_retr), (0.5, 0.5));
        assert_eq!(*emb.calls.lock().unwrap(), vec![3]);

        emb.calls.lock().unwrap().clear();
        let three = doc_with(x.as_ref(), "alice has diabetes and takes insulin daily");
        assert_eq!(three.entities.len(), 3);
        score_document(&three, &Weights::default(), &emb, &s).unwrap();
        assert_eq!(*emb.calls.lock().unwrap(), vec![1 + 3 + 3]);
    }

    #[test]
    fn score_document_matches_scripted_evaluation() {
        let pairs = [("alice smith", "person full name"), ("type 2 diabetes", "disease"), ("insulin", "medication")];
        let s = scorer(&pairs);
        let x = lexicon_extractor(&pairs);
        let emb = ReferenceEmbedder::new(256);
        let w = Weights::DEFAULT;
        let doc = doc_with(x.as_ref(), "alice smith has type 2 diabetes and takes insulin daily");
        assert_eq!(doc.entities.len(), 3);
        let scored = score_document(&doc, &w, &emb, &s).unwrap();

        // Scripted oracle built from the single-entity operations.
        let priv_: Vec<f64> = doc.entities.iter().map(|e| marginal_privacy_risk(&doc, e, &s).unwrap()).collect();
        let knw: Vec<f64> = doc.entities.iter().map(|e| knowledge_divergence_raw(&doc, e, &emb).unwrap()).collect();
        let retr: Vec<f64> = doc.entities.iter().map(|e| topical_relevance_raw(&doc, e, &emb).unwrap()).collect();
        let norm = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            v.iter().map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 }).collect::<Vec<_>>()
        };
        let (kn, rn) = (norm(&knw), norm(&retr));
        let psi: Vec<f64> = (0..3).map(|i| priv_[i] - 0.5 * rn[i] - 0.4 * kn[i]).collect();
        for (i, e) in scored.entities.iter().enumerate() {
            let sv = e.scores.unwrap();
            assert!((sv.psi - psi[i]).abs() < 1e-12);
            assert!((sv.s_priv - priv_[i]).abs() < 1e-12);
        }
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|a, b| v[*b].partial_cmp(&v[*a]).unwrap());
            idx
        };
        let got: Vec<f64> = scored.entities.iter().map(|e| e.scores.unwrap().psi).collect();
        assert_eq!(rank(&got), rank(&psi));
        // the name dominates: highest marginal risk
        assert_eq!(rank(&got)[0], 0);
    }

    #[test]
    fn rescore_requires_scores() {
        let d = Document::new("r", "alice", vec![Entity::new("alice", "x", 0, 5)]).unwrap();
        assert!(matches!(rescore(&d, &Weights::default()), Err(Error::Unscored(0))));
    }
}
