//! Deterministic synthetic sentiment corpus with matching word vectors, for
//! tests and quick experiments without downloading real data.
//!
//! Sentences mix neutral filler with a few polar words. A polar word preceded
//! by `not` flips polarity, so word order matters. Some filler words have no
//! vector, and a fraction of labels is flipped.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub examples: usize,
    pub dim: usize,
    pub seed: u64,
    pub polar_words: usize,
    pub neutral_words: usize,
    /// Neutral words left out of the vector file.
    pub unknown_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub negation_prob: f64,
    /// Chance of one extra word of the opposite polarity.
    pub distractor_prob: f64,
    pub label_noise: f64,
    /// Strength of the sentiment direction relative to unit noise.
    pub signal: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            examples: 2000,
            dim: 16,
            seed: 7,
            polar_words: 40,
            neutral_words: 200,
            unknown_words: 20,
            min_len: 6,
            max_len: 18,
            negation_prob: 0.25,
            distractor_prob: 0.4,
            label_noise: 0.05,
            signal: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// `<label>\t<text>` lines; label 1 is positive.
    pub tsv: String,
    /// `token v1 ... vD` lines with a `count dim` header.
    pub vectors: String,
}

fn polar(positive: bool, i: usize) -> String {
    if positive {
        format!("good{i}")
    } else {
        format!("bad{i}")
    }
}

pub fn synthetic_corpus(spec: &SynthSpec) -> SynthCorpus {
    let mut rng = rng::stream(spec.seed, Purpose::Synthetic, &[0]);
    let mut tsv = String::new();
    for _ in 0..spec.examples {
        let positive = rng.random_bool(0.5);
        let len = rng.random_range(spec.min_len..=spec.max_len.max(spec.min_len));
        let mut words: Vec<String> = (0..len)
            .map(|_| {
                let j = rng.random_range(0..spec.neutral_words + spec.unknown_words);
                if j < spec.neutral_words {
                    format!("w{j}")
                } else {
                    format!("rare{}", j - spec.neutral_words)
                }
            })
            .collect();
        // Cues: (polarity as written, preceded by `not`).
        let mut cues = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let negated = rng.random_bool(spec.negation_prob);
            cues.push((positive != negated, negated));
        }
        if rng.random_bool(spec.distractor_prob) {
            // A weaker opposite cue, outnumbered by the real ones.
            if cues.len() == 1 {
                let negated = rng.random_bool(spec.negation_prob);
                cues.push((positive != negated, negated));
            }
            cues.push((!positive, false));
        }
        for (written, negated) in cues {
            let word = polar(written, rng.random_range(0..spec.polar_words));
            let at = rng.random_range(0..=words.len().saturating_sub(1));
            words[at] = word;
            if negated {
                words.insert(at, "not".into());
            }
        }
        let label = if rng.random_bool(spec.label_noise) {
            !positive
        } else {
            positive
        };
        let _ = writeln!(tsv, "{}\t{}", label as u8, words.join(" "));
    }

    let mut rng = rng::stream(spec.seed, Purpose::Synthetic, &[1]);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let direction: Vec<f64> = {
        let v: Vec<f64> = (0..spec.dim).map(|_| noise.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    let mut rows: Vec<(String, f64)> = Vec::new();
    for i in 0..spec.polar_words {
        rows.push((polar(true, i), spec.signal));
        rows.push((polar(false, i), -spec.signal));
    }
    for j in 0..spec.neutral_words {
        rows.push((format!("w{j}"), 0.0));
    }
    rows.push(("not".into(), 0.0));
    let mut vectors = format!("{} {}\n", rows.len(), spec.dim);
    for (word, sign) in rows {
        let _ = write!(vectors, "{word}");
        for d in &direction {
            let v = 0.3 * (sign * d * (spec.dim as f64).sqrt() + noise.sample(&mut rng));
            let _ = write!(vectors, " {v:.5}");
        }
        vectors.push('\n');
    }
    SynthCorpus { tsv, vectors }
}
