//! Context-aware anonymization for retrieval knowledge bases.
//!
//! Each extracted entity is scored on marginal privacy risk, knowledge
//! divergence and topical relevance; entities whose combined priority exceeds
//! a calibrated threshold are replaced by coarse descriptors. The crate also
//! carries the evaluation harness (retrieval overlap, BLEU, ROUGE-L, leakage,
//! rank correlation) and a seeded synthetic corpus generator.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod extract;
pub mod generalize;
pub mod index;
mod jsonmap;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod select;
pub mod synth;

pub use corpus::{AnonymizedDocument, Corpus, Document, Entity, GeneralizedEntity};
pub use embed::{BackendKind, Embedder, EmbedderSpec, TextEmbedder, Vector};
pub use error::{Error, Result};
pub use extract::{EntityExtractor, Extractor, ExtractorSpec};
pub use generalize::GeneralizationMap;
pub use index::{Metric, VectorIndex};
pub use pipeline::{Pipeline, PipelineConfig};
pub use scoring::{PrivacyScorer, PrivacyScorerSpec, ScoreVector, Weights};
pub use select::{KnapsackInstance, Selection};
