#![allow(dead_code)]

use std::path::Path;

use spiketext::config::PipelineConfig;
use spiketext::synth::{synthetic_corpus, SynthSpec};

/// Writes a synthetic corpus into `dir` and returns a config pointing at it.
pub fn synth_config(dir: &Path, examples: usize, dim: usize) -> PipelineConfig {
    std::fs::create_dir_all(dir).unwrap();
    let corpus = synthetic_corpus(&SynthSpec {
        examples,
        dim,
        ..Default::default()
    });
    let data = dir.join("corpus.tsv");
    let vectors = dir.join("vectors.txt");
    std::fs::write(&data, corpus.tsv).unwrap();
    std::fs::write(&vectors, corpus.vectors).unwrap();
    PipelineConfig {
        data: Some(data),
        embeddings: Some(vectors),
        dim,
        out_dir: dir.join("out"),
        ..Default::default()
    }
}

/// Desk-scale settings: 2,000 synthetic examples, 16-d vectors, 8 feature
/// maps per width. Learning rates are raised to make up for the short runs.
pub fn desk_config(dir: &Path, seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        feature_maps: 8,
        ann_lr: 2e-3,
        ann_epochs: 30,
        lr: 1e-3,
        epochs: 10,
        ..synth_config(dir, 2000, 16)
    }
}

/// A pipeline small enough to run in a couple of seconds.
pub fn toy_config(dir: &Path, seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        feature_maps: 4,
        neurons_per_class: 2,
        ann_lr: 2e-3,
        ann_epochs: 3,
        lr: 5e-4,
        epochs: 1,
        time_steps: 10,
        trials: 2,
        test_frac: 0.2,
        val_frac: 0.2,
        ..synth_config(dir, 200, 8)
    }
}
