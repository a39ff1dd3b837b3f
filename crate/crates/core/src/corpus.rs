//! Labeled text datasets: loading, tokenization, splitting and integer encoding.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const MAX_LEN_CAP: usize = 64;

/// How raw text is split into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenizeMode {
    /// Lowercased, split on runs of whitespace (English).
    #[default]
    Whitespace,
    /// One token per non-whitespace character (Chinese).
    Character,
}

impl TokenizeMode {
    /// Maps a language code (`en`, `zh`) to its tokenization mode.
    pub fn from_lang(lang: &str) -> Result<Self> {
        match lang {
            "en" => Ok(TokenizeMode::Whitespace),
            "zh" => Ok(TokenizeMode::Character),
            other => Err(Error::invalid(format!("unknown language `{other}`"))),
        }
    }

    pub fn lang(self) -> &'static str {
        match self {
            TokenizeMode::Whitespace => "en",
            TokenizeMode::Character => "zh",
        }
    }
}

impl FromStr for TokenizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizeMode::Whitespace),
            "character" => Ok(TokenizeMode::Character),
            other => TokenizeMode::from_lang(other),
        }
    }
}

pub fn tokenize(text: &str, mode: TokenizeMode) -> Vec<String> {
    match mode {
        TokenizeMode::Whitespace => text.split_whitespace().map(str::to_lowercase).collect(),
        TokenizeMode::Character => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub label: usize,
    pub text: String,
    /// Encoded ids, exactly `max_len` long once [`Dataset::encode`] has run.
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub num_classes: usize,
    pub mode: TokenizeMode,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Parses `<label>\t<text>` lines. Blank lines are skipped.
    pub fn parse(contents: &str, mode: TokenizeMode) -> Result<Self> {
        let mut examples = Vec::new();
        for (i, line) in contents.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (label, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(line_no, "expected `<label>\\t<text>`"))?;
            let label: usize = label
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("non-integer label `{label}`")))?;
            examples.push(Example {
                label,
                text: text.to_string(),
                tokens: Vec::new(),
            });
        }
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let num_classes = examples.iter().map(|e| e.label).max().unwrap_or(0) + 1;
        Ok(Dataset {
            examples,
            num_classes,
            mode,
        })
    }

    /// Integer-encodes every example to exactly `max_len` ids.
    pub fn encode(&mut self, vocab: &Vocabulary, max_len: usize) {
        for ex in &mut self.examples {
            ex.tokens = vocab.encode(&tokenize(&ex.text, self.mode), max_len);
        }
    }

    pub fn token_lengths(&self) -> Vec<usize> {
        self.examples
            .iter()
            .map(|e| tokenize(&e.text, self.mode).len())
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            out.push_str(&format!("{}\t{}\n", ex.label, ex.text));
        }
        out
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            num_classes: self.num_classes,
            mode: self.mode,
        }
    }
}

pub fn load_dataset(path: &Path, mode: TokenizeMode) -> Result<Dataset> {
    let contents = std::fs::read_to_string(path)?;
    Dataset::parse(&contents, mode)
}

/// Random disjoint partition into `(train, test)` with
/// `|test| = round(test_fraction * N)`. Both halves keep the source order.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Split, &[n as u64]));
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((dataset.subset(&train_idx), dataset.subset(&test_idx)))
}

/// 95th percentile (nearest rank) of token lengths, capped at [`MAX_LEN_CAP`].
pub fn default_max_len(train: &Dataset) -> usize {
    let mut lengths = train.token_lengths();
    if lengths.is_empty() {
        return 1;
    }
    lengths.sort_unstable();
    let rank = ((0.95 * lengths.len() as f64).ceil() as usize).max(1);
    lengths[rank - 1].clamp(1, MAX_LEN_CAP)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    pub min_freq: usize,
}

impl Vocabulary {
    /// Tokens with frequency `>= min_freq` get ids from 2 upward, ordered by
    /// descending frequency then lexicographically.
    pub fn build(train: &Dataset, min_freq: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for ex in &train.examples {
            for tok in tokenize(&ex.text, train.mode) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = kept.into_iter().map(|(t, _)| t);
        Ok(Self::from_tokens(tokens, min_freq))
    }

    /// Rebuilds a vocabulary from its non-special tokens in id order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>, min_freq: usize) -> Self {
        let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut token_to_id = HashMap::new();
        for tok in tokens {
            if token_to_id.contains_key(&tok) || tok == PAD_TOKEN || tok == UNK_TOKEN {
                continue;
            }
            token_to_id.insert(tok.clone(), id_to_token.len() as u32);
            id_to_token.push(tok);
        }
        Vocabulary {
            token_to_id,
            id_to_token,
            min_freq,
        }
    }

    /// Number of ids, specials included.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() <= 2
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Non-special tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token[2..]
    }

    /// Maps tokens to ids, truncating to the prefix or padding with [`PAD_ID`].
    pub fn encode(&self, tokens: &[String], max_len: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = tokens.iter().take(max_len).map(|t| self.id(t)).collect();
        ids.resize(max_len, PAD_ID);
        ids
    }

    /// Inverse of [`encode`](Self::encode); padding is dropped.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != PAD_ID)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }
}

impl fmt::Display for TokenizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.lang())
    }
}
