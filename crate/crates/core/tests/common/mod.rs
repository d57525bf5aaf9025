#![allow(dead_code)]

use ragveil_core::pipeline::{Pipeline, PipelineConfig};
use ragveil_core::synth::{generate_corpus, SynthOutput, SynthSpec};

/// Threshold at which weighted privacy equals weighted utility.
pub const BREAK_EVEN_TAU: f64 = 0.0;

pub struct Fixture {
    pub synth: SynthOutput,
    pub pipeline: Pipeline,
    pub dir: tempfile::TempDir,
}

/// Synthetic corpus written to a temp dir plus a reference-backend pipeline
/// with default weights.
pub fn fixture(n_docs: usize, seed: u64) -> Fixture {
    let synth = generate_corpus(&SynthSpec {
        n_docs,
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    synth.write_to(dir.path()).unwrap();
    let mut cfg = PipelineConfig::with_defaults(dir.path().join("lexicon.json"));
    cfg.tau = BREAK_EVEN_TAU;
    cfg.seed = seed;
    let pipeline = Pipeline::from_config(cfg).unwrap();
    Fixture { synth, pipeline, dir }
}
