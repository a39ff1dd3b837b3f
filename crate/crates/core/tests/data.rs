use std::io::Write;

use proptest::prelude::*;

use spiketext::corpus::{load_dataset, split, tokenize, TokenizeMode, Vocabulary, PAD_ID};
use spiketext::embedding::{load_embeddings, normalize_shift};
use spiketext::encoder::{encode_keyed, EncodeKey, SpikeTrain};
use spiketext::rng::Purpose;

fn write(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::File::create(&path).unwrap().write_all(contents.as_bytes()).unwrap();
    path
}

#[test]
fn file_to_table() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(&dir, "c.tsv", "1\tgood film\n0\tbad film\n1\tgood good\n");
    let data = load_dataset(&corpus, TokenizeMode::Whitespace).unwrap();
    assert_eq!(data.len(), 3);
    let vocab = Vocabulary::build(&data, 1).unwrap();
    let vectors = write(&dir, "v.txt", "3 2\ngood 1.0 2.0\nbad -1.0 0.5\nfilm 0.0 -2.0\nunused 9 9\n");
    let raw = load_embeddings(&vectors, &vocab, 2, 0).unwrap();
    let table = normalize_shift(&raw).unwrap();

    // Independent oracle over the three known rows plus the seeded <unk> row.
    let body: Vec<f64> = raw.data[2..].to_vec();
    let n = body.len() as f64;
    let mean = body.iter().sum::<f64>() / n;
    let std = (body.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((table.stats.mean - mean).abs() < 1e-12);
    assert!((table.stats.std - std).abs() < 1e-12);
    for (i, &v) in raw.data.iter().enumerate().skip(2) {
        let z = ((v - mean) / (6.0 * std) + 0.5).clamp(0.0, 1.0);
        assert!((table.data[i] as f64 - z).abs() < 1e-6);
    }
    assert_eq!(table.row(PAD_ID), &[0.0, 0.0]);
    let unk = raw.row(1);
    assert!(unk.iter().all(|v| (-2.0..=2.0).contains(v)));
    assert_eq!(&raw.data[vocab.id("good") as usize * 2..][..2], &[1.0, 2.0]);
}

#[test]
fn chinese_mode_tokenizes_characters() {
    let toks = tokenize("电影 很好", TokenizeMode::Character);
    assert_eq!(toks, vec!["电", "影", "很", "好"]);
}

#[test]
fn split_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let lines: String = (0..50).map(|i| format!("{}\tw{i}\n", i % 2)).collect();
    let data = load_dataset(&write(&dir, "c.tsv", &lines), TokenizeMode::Whitespace).unwrap();
    let (a, b) = split(&data, 0.2, 3).unwrap();
    let (c, d) = split(&data, 0.2, 3).unwrap();
    assert_eq!(a.to_tsv(), c.to_tsv());
    assert_eq!(b.to_tsv(), d.to_tsv());
    assert_eq!(b.len(), 10);
}

/// Per-cell spike counts at p = 0.5 over T = 50 are Binomial(50, 0.5):
/// mean 25, variance 12.5. With 10⁴ cells the standard error of the mean is
/// 0.035, so ±0.11 is a three-sigma bound.
#[test]
fn half_rate_counts_average_twenty_five() {
    let (len, dim, steps) = (100, 100, 50);
    let x = vec![0.5f32; len * dim];
    let train = encode_keyed(&x, len, dim, steps, EncodeKey::evaluation(5, Purpose::Evaluate, 0, 0)).unwrap();
    let cells = len * dim;
    let counts: Vec<f64> = (0..cells)
        .map(|c| (0..steps).map(|t| train.bits[t * cells + c] as f64).sum())
        .collect();
    let mean = counts.iter().sum::<f64>() / cells as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (cells - 1) as f64;
    assert!((mean - 25.0).abs() <= 0.11, "mean {mean}");
    assert!((var - 12.5).abs() <= 0.6, "variance {var}");
}

#[test]
fn keys_separate_trials_and_examples() {
    let x = vec![0.5f32; 40];
    let enc = |k| encode_keyed(&x, 8, 5, 20, k).unwrap();
    let base = enc(EncodeKey::evaluation(1, Purpose::Evaluate, 0, 0));
    assert_eq!(base, enc(EncodeKey::evaluation(1, Purpose::Evaluate, 0, 0)));
    assert_ne!(base, enc(EncodeKey::evaluation(1, Purpose::Evaluate, 1, 0)));
    assert_ne!(base, enc(EncodeKey::evaluation(1, Purpose::Evaluate, 0, 1)));
    assert_ne!(base, enc(EncodeKey::evaluation(1, Purpose::Validate, 0, 0)));
    assert_ne!(base, enc(EncodeKey::training(1, 0, 0, 0)));
}

proptest! {
    #[test]
    fn extreme_rates_are_deterministic(mask in proptest::collection::vec(any::<bool>(), 1..30), seed in any::<u64>()) {
        let x: Vec<f32> = mask.iter().map(|&b| b as u8 as f32).collect();
        let t = encode_keyed(&x, x.len(), 1, 7, EncodeKey::training(seed, 0, 0, 0)).unwrap();
        for s in 0..7 {
            let bits: Vec<bool> = t.step(s).iter().map(|&b| b == 1).collect();
            prop_assert_eq!(&bits, &mask);
        }
    }

    #[test]
    fn spike_file_round_trip(steps in 1usize..6, len in 1usize..6, dim in 1usize..6, seed in any::<u64>()) {
        let x: Vec<f32> = (0..len * dim).map(|i| ((i * 37 + 11) % 100) as f32 / 100.0).collect();
        let t = encode_keyed(&x, len, dim, steps, EncodeKey::training(seed, 1, 2, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        t.write(&path).unwrap();
        prop_assert_eq!(SpikeTrain::read(&path).unwrap(), t);
    }
}
