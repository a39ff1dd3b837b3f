//! Pre-trained word vectors and their positive-valued `[0, 1]` form.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Raw (unnormalized) embedding matrix, `rows × dim`, row-major. Row 0 is padding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEmbeddings {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl RawEmbeddings {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * dim, data.len());
        Self { rows, dim, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}

/// Global statistics of the raw values, computed once at load time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingStats {
    pub mean: f64,
    pub std: f64,
}

impl EmbeddingStats {
    /// Population mean and standard deviation over every entry of every
    /// non-padding row.
    pub fn of(raw: &RawEmbeddings) -> Self {
        let values = &raw.data[raw.dim.min(raw.data.len())..];
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        EmbeddingStats {
            mean,
            std: var.sqrt(),
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - 3.0 * self.std
    }

    pub fn upper(&self) -> f64 {
        self.mean + 3.0 * self.std
    }

    /// Clip to `[μ−3σ, μ+3σ]`, subtract `μ`, divide by `6σ`, shift by one half.
    pub fn shift(&self, value: f64) -> f64 {
        if value >= self.upper() {
            1.0
        } else if value <= self.lower() {
            0.0
        } else {
            ((value - self.mean) / (6.0 * self.std) + 0.5).clamp(0.0, 1.0)
        }
    }
}

/// Vocabulary-indexed table of positive-shifted vectors in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub stats: EmbeddingStats,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn row(&self, id: u32) -> &[f32] {
        let r = id as usize;
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: u32) -> &mut [f32] {
        let r = id as usize;
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Looks up a token-id sequence, producing an `L × D` row-major matrix.
    pub fn embed(&self, ids: &[u32]) -> Vec<f32> {
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            out.extend_from_slice(self.row(id));
        }
        out
    }

    /// Clamp every entry into `[0, 1]`.
    pub fn clip01(&mut self) {
        clip01(&mut self.data);
    }

    /// FNV-1a over the bit patterns; used to check the table is left untouched.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in &self.data {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

pub fn clip01(values: &mut [f32]) {
    for v in values {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Reads `token v1 ... vD` lines. Rows for vocabulary tokens are copied; every
/// other non-padding row (including `<unk>`) is drawn uniformly from the
/// observed `[min, max]` range with a seeded stream. A leading word2vec-style
/// `count dim` header line is skipped.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<RawEmbeddings> {
    let contents = std::fs::read_to_string(path)?;
    parse_embeddings(&contents, vocab, dim, seed)
}

pub fn parse_embeddings(
    contents: &str,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<RawEmbeddings> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let rows = vocab.len();
    let mut data = vec![0.0f64; rows * dim];
    let mut found = vec![false; rows];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;

    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if i == 0 && dim != 1 && values.len() == 1 && is_count_header(token, values[0]) {
            continue;
        }
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        let mut parsed = Vec::with_capacity(dim);
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::parse(line_no, format!("unreadable float `{v}`")))?;
            if !x.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value `{v}`")));
            }
            parsed.push(x);
        }
        let id = vocab.id(token);
        if id < 2 || vocab.token(id) != Some(token) || found[id as usize] {
            continue;
        }
        for &x in &parsed {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        data[id as usize * dim..(id as usize + 1) * dim].copy_from_slice(&parsed);
        found[id as usize] = true;
    }

    if !lo.is_finite() {
        return Err(Error::invalid(
            "no embedding vectors matched the vocabulary",
        ));
    }
    let mut rng = rng::stream(seed, Purpose::Embeddings, &[rows as u64, dim as u64]);
    for r in 1..rows {
        if !found[r] {
            for x in &mut data[r * dim..(r + 1) * dim] {
                *x = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            }
        }
    }
    Ok(RawEmbeddings::new(rows, dim, data))
}

fn is_count_header(a: &str, b: &str) -> bool {
    a.parse::<u64>().is_ok() && b.parse::<u64>().is_ok()
}

/// Seeded standard-normal vectors: the random-word-embedding ablation.
pub fn random_embeddings(rows: usize, dim: usize, seed: u64) -> RawEmbeddings {
    let mut rng = rng::stream(seed, Purpose::Embeddings, &[u64::MAX, rows as u64, dim as u64]);
    let mut data: Vec<f64> = (0..rows * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    data[..dim].iter_mut().for_each(|x| *x = 0.0);
    RawEmbeddings::new(rows, dim, data)
}

/// Positive shift of a raw matrix into `[0, 1]`. Row 0 is padding: it is
/// excluded from the statistics and forced to zero.
pub fn normalize_shift(raw: &RawEmbeddings) -> Result<EmbeddingTable> {
    if raw.rows < 2 || raw.dim == 0 {
        return Err(Error::invalid("embedding matrix has no non-padding rows"));
    }
    let stats = EmbeddingStats::of(raw);
    if !(stats.std > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut data: Vec<f32> = raw.data.iter().map(|&v| stats.shift(v) as f32).collect();
    data[..raw.dim].iter_mut().for_each(|x| *x = 0.0);
    debug_assert_eq!(PAD_ID, 0);
    Ok(EmbeddingTable {
        rows: raw.rows,
        dim: raw.dim,
        data,
        stats,
        trainable: true,
    })
}
