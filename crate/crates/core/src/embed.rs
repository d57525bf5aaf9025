//! Embedding backends and the vector math used for scoring and retrieval.
//!
//! The reference embedder is a signed feature-hashing bag of words: texts are
//! lowercased, split on non-alphanumeric characters, each token hashed with
//! 64-bit FNV-1a, bucketed by `hash % dim`, signed by bit 63, accumulated and
//! L2-normalized. Tokenless text embeds to the zero vector.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 256;
pub const REMOTE_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    values: Vec<f64>,
}

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidVector("dimension must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!("non-finite value at index {i}")));
        }
        Ok(Vector { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Vector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }
}

fn check_dims(a: &Vector, b: &Vector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64> {
    let dot = a.dot(b)?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn l2_distance(a: &Vector, b: &Vector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Reference,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSpec {
    pub kind: BackendKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec {
            kind: BackendKind::Reference,
            dim: DEFAULT_DIM,
            endpoint: None,
        }
    }
}

impl EmbedderSpec {
    pub fn reference(dim: usize) -> Self {
        EmbedderSpec {
            kind: BackendKind::Reference,
            dim,
            endpoint: None,
        }
    }

    pub fn remote(endpoint: impl Into<String>, dim: usize) -> Self {
        EmbedderSpec {
            kind: BackendKind::Remote,
            dim,
            endpoint: Some(endpoint.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedder dim must be positive".into()));
        }
        if self.kind == BackendKind::Remote && self.endpoint.is_none() {
            return Err(Error::Config("remote embedder requires an endpoint".into()));
        }
        Ok(())
    }
}

/// Anything that turns texts into fixed-dimension vectors, order preserved.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>>;

    fn embed_one(&self, text: &str) -> Result<Vector> {
        Ok(self.embed(&[text])?.remove(0))
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    dim: usize,
}

impl ReferenceEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        ReferenceEmbedder { dim }
    }

    pub fn embed_text(&self, text: &str) -> Vector {
        let mut acc = vec![0.0f64; self.dim];
        for tok in tokenize(text) {
            let h = fnv1a64(tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            if h >> 63 == 0 {
                acc[bucket] += 1.0;
            } else {
                acc[bucket] -= 1.0;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut acc {
                *v /= norm;
            }
        }
        Vector { values: acc }
    }
}

impl TextEmbedder for ReferenceEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("embed requires at least one text".into()));
        }
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// HTTP client for `POST {endpoint}/embed`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Result<Self> {
        let endpoint = endpoint.into();
        let client = http_client(&endpoint)?;
        Ok(RemoteEmbedder {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            dim,
            client,
        })
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        let url = format!("{}/embed", self.endpoint);
        let resp: EmbedResponse = post_json(&self.client, &url, &self.endpoint, &EmbedRequest { texts })?;
        let contract = |message: String| Error::Contract {
            endpoint: self.endpoint.clone(),
            message,
        };
        if resp.dim != self.dim {
            return Err(contract(format!("advertised dim {} but {} was configured", resp.dim, self.dim)));
        }
        if resp.vectors.len() != texts.len() {
            return Err(contract(format!("{} vectors for {} texts", resp.vectors.len(), texts.len())));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(contract(format!("vector of length {} in a dim-{} response", v.len(), self.dim)));
                }
                Vector::new(v).map_err(|e| contract(e.to_string()))
            })
            .collect()
    }
}

impl TextEmbedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("embed requires at least one text".into()));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(REMOTE_BATCH) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

pub(crate) fn http_client(endpoint: &str) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| Error::Transport {
            endpoint: endpoint.to_string(),
            message: e.to_string(),
        })
}

/// POSTs a JSON body and decodes a JSON response; non-200 is a contract error.
pub(crate) fn post_json<B: Serialize + ?Sized, R: serde::de::DeserializeOwned>(
    client: &reqwest::blocking::Client,
    url: &str,
    endpoint: &str,
    body: &B,
) -> Result<R> {
    let resp = client.post(url).json(body).send().map_err(|e| Error::Transport {
        endpoint: endpoint.to_string(),
        message: e.to_string(),
    })?;
    let status = resp.status();
    if status != reqwest::StatusCode::OK {
        let text = resp.text().unwrap_or_default();
        return Err(Error::Contract {
            endpoint: endpoint.to_string(),
            message: format!("HTTP {status}: {text}"),
        });
    }
    resp.json::<R>().map_err(|e| Error::Contract {
        endpoint: endpoint.to_string(),
        message: format!("undecodable response: {e}"),
    })
}

/// Backend selected by an [`EmbedderSpec`].
#[derive(Debug, Clone)]
pub enum Embedder {
    Reference(ReferenceEmbedder),
    Remote(RemoteEmbedder),
}

impl Embedder {
    pub fn from_spec(spec: &EmbedderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.kind {
            BackendKind::Reference => Embedder::Reference(ReferenceEmbedder::new(spec.dim)),
            BackendKind::Remote => {
                let endpoint = spec.endpoint.as_deref().unwrap_or_default();
                Embedder::Remote(RemoteEmbedder::new(endpoint, spec.dim)?)
            }
        })
    }
}

impl TextEmbedder for Embedder {
    fn dim(&self) -> usize {
        match self {
            Embedder::Reference(e) => e.dim(),
            Embedder::Remote(e) => e.dim(),
        }
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        match self {
            Embedder::Reference(e) => e.embed(texts),
            Embedder::Remote(e) => e.embed(texts),
        }
    }
}

/// One-shot convenience over [`Embedder::from_spec`].
pub fn embed(spec: &EmbedderSpec, texts: &[&str]) -> Result<Vec<Vector>> {
    Embedder::from_spec(spec)?.embed(texts)
}
