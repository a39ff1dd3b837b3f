//! Versioned checkpoint container.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "SPKT" | version | header_len | header (UTF-8 `key=value` lines)
//! tensor_count | { name_len | name | ndim | dims... | f32 data (row-major) }*
//! ```

use std::path::Path;

use crate::ann::{Activation, CnnConfig, CnnParams, Pooling};
use crate::corpus::{TokenizeMode, Vocabulary};
use crate::embedding::{EmbeddingStats, EmbeddingTable};
use crate::error::{Error, Result};
use crate::real::Tensor;
use crate::snn::{LifConfig, SnnModel};

pub const MAGIC: &[u8; 4] = b"SPKT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn fail(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

impl Container {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(!key.contains(['=', '\n']) && !value.contains('\n'));
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header: String = self
            .header
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let truncated = || fail(path, "truncated file");
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4) != Some(MAGIC.as_slice()) {
            return Err(fail(path, "not a checkpoint (bad magic)"));
        }
        let version = r.u32().ok_or_else(truncated)?;
        if version != VERSION {
            return Err(fail(path, format!("unsupported version {version}")));
        }
        let header_len = r.u32().ok_or_else(truncated)? as usize;
        let header = std::str::from_utf8(r.take(header_len).ok_or_else(truncated)?)
            .map_err(|_| fail(path, "header is not UTF-8"))?;
        let mut c = Container::default();
        for line in header.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail(path, format!("bad header line `{line}`")))?;
            c.header.push((k.to_string(), v.to_string()));
        }
        let count = r.u32().ok_or_else(truncated)?;
        for _ in 0..count {
            let name_len = r.u32().ok_or_else(truncated)? as usize;
            let name = std::str::from_utf8(r.take(name_len).ok_or_else(truncated)?)
                .map_err(|_| fail(path, "tensor name is not UTF-8"))?
                .to_string();
            let ndim = r.u32().ok_or_else(truncated)? as usize;
            let shape: Vec<usize> = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize).ok_or_else(truncated))
                .collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4).ok_or_else(truncated)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            c.tensors.push((name, Tensor { shape, data }));
        }
        if r.pos != bytes.len() {
            return Err(fail(path, "trailing bytes after last tensor"));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}

/// What a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Vocabulary and embedding table only.
    Prepared,
    Ann,
    Snn,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Prepared => "prepared",
            Kind::Ann => "ann",
            Kind::Snn => "snn",
        }
    }
}

/// Everything needed to encode text and run a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub kind: Kind,
    pub vocab: Vocabulary,
    pub mode: TokenizeMode,
    pub max_len: usize,
    pub table: EmbeddingTable,
    pub model: Option<(CnnConfig, CnnParams<f32>)>,
    pub lif: Option<LifConfig>,
    /// Free-form provenance records (normalization factors and the like).
    pub notes: Vec<(String, String)>,
}

impl Bundle {
    pub fn snn(&self) -> Result<SnnModel> {
        match (&self.model, self.lif) {
            (Some((config, params)), Some(lif)) => Ok(SnnModel {
                config: config.clone(),
                params: params.clone(),
                lif,
            }),
            _ => Err(Error::invalid("checkpoint does not hold a spiking model")),
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.set("format", "spiketext");
        c.set("kind", self.kind.as_str());
        c.set("lang", self.mode.lang());
        c.set("max_len", self.max_len);
        c.set("min_freq", self.vocab.min_freq);
        c.set("emb_mean", self.table.stats.mean);
        c.set("emb_std", self.table.stats.std);
        c.set("emb_trainable", self.table.trainable);
        if let Some((config, _)) = &self.model {
            c.set("embed_dim", config.embed_dim);
            let widths: Vec<String> = config.filter_widths.iter().map(|w| w.to_string()).collect();
            c.set("filter_widths", widths.join(","));
            c.set("feature_maps", config.feature_maps);
            c.set("num_classes", config.num_classes);
            c.set("neurons_per_class", config.neurons_per_class);
            c.set("pooling", config.pooling);
            c.set("activation", config.activation);
            c.set("use_bias", config.use_bias);
        }
        if let Some(lif) = &self.lif {
            c.set("beta", lif.beta);
            c.set("u_thr", lif.threshold);
            c.set("time_steps", lif.time_steps);
            c.set("surrogate_k", lif.slope);
        }
        for (k, v) in &self.notes {
            c.set(&format!("note.{k}"), v);
        }
        c.set("vocab", self.vocab.tokens().join(" "));
        c.push_tensor(
            "embedding",
            Tensor::from_vec(&[self.table.rows, self.table.dim], self.table.data.clone()),
        );
        if let Some((_, params)) = &self.model {
            for (name, t) in params.named() {
                c.push_tensor(name, t.clone());
            }
        }
        c
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let get = |k: &str| c.get(k).ok_or_else(|| fail(path, format!("missing header key `{k}`")));
        fn num<T: std::str::FromStr>(path: &Path, k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| fail(path, format!("bad value `{v}` for `{k}`")))
        }
        let kind = match get("kind")? {
            "prepared" => Kind::Prepared,
            "ann" => Kind::Ann,
            "snn" => Kind::Snn,
            other => return Err(fail(path, format!("unknown kind `{other}`"))),
        };
        let mode = TokenizeMode::from_lang(get("lang")?)?;
        let vocab_line = get("vocab")?;
        let vocab = Vocabulary::from_tokens(
            vocab_line.split(' ').filter(|t| !t.is_empty()).map(String::from),
            num(path, "min_freq", get("min_freq")?)?,
        );
        let emb = c
            .tensor("embedding")
            .ok_or_else(|| fail(path, "missing embedding tensor"))?;
        if emb.shape.len() != 2 || emb.shape[0] != vocab.len() {
            return Err(fail(path, "embedding shape does not match vocabulary"));
        }
        let table = EmbeddingTable {
            rows: emb.shape[0],
            dim: emb.shape[1],
            data: emb.data.clone(),
            stats: EmbeddingStats {
                mean: num(path, "emb_mean", get("emb_mean")?)?,
                std: num(path, "emb_std", get("emb_std")?)?,
            },
            trainable: num(path, "emb_trainable", get("emb_trainable")?)?,
        };

        let model = if kind == Kind::Prepared {
            None
        } else {
            let filter_widths = get("filter_widths")?
                .split(',')
                .map(|w| num(path, "filter_widths", w))
                .collect::<Result<Vec<usize>>>()?;
            let config = CnnConfig {
                embed_dim: num(path, "embed_dim", get("embed_dim")?)?,
                filter_widths,
                feature_maps: num(path, "feature_maps", get("feature_maps")?)?,
                num_classes: num(path, "num_classes", get("num_classes")?)?,
                neurons_per_class: num(path, "neurons_per_class", get("neurons_per_class")?)?,
                pooling: get("pooling")?.parse::<Pooling>()?,
                activation: get("activation")?.parse::<Activation>()?,
                use_bias: num(path, "use_bias", get("use_bias")?)?,
            };
            let mut params = CnnParams::<f32>::zeros(&config);
            let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
            for (name, slot) in names.iter().zip(params.tensors_mut()) {
                let t = c
                    .tensor(name)
                    .ok_or_else(|| fail(path, format!("missing tensor `{name}`")))?;
                if t.shape != slot.shape {
                    return Err(fail(path, format!("tensor `{name}` has shape {:?}", t.shape)));
                }
                *slot = t.clone();
            }
            Some((config, params))
        };
        let lif = if kind == Kind::Snn {
            Some(LifConfig {
                beta: num(path, "beta", get("beta")?)?,
                threshold: num(path, "u_thr", get("u_thr")?)?,
                time_steps: num(path, "time_steps", get("time_steps")?)?,
                slope: num(path, "surrogate_k", get("surrogate_k")?)?,
            })
        } else {
            None
        };
        let notes = c
            .header
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("note.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(Bundle {
            kind,
            vocab,
            mode,
            max_len: num(path, "max_len", get("max_len")?)?,
            table,
            model,
            lif,
            notes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?, path)
    }
}
