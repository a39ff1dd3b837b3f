//! Run configuration: defaults, a flat `key = value` file format, and
//! per-key overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::ann::{Activation, CnnConfig, Pooling};
use crate::corpus::TokenizeMode;
use crate::error::{Error, Result};
use crate::snn::LifConfig;
use crate::training::{Centering, SurrogateConfig, TrainConfig};

pub const SEED_ENV: &str = "SPIKETEXT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    Model,
    Data,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "model" => Ok(Normalization::Model),
            "data" => Ok(Normalization::Data),
            _ => Err(Error::invalid(format!(
                "unknown normalization `{s}` (expected none, model or data)"
            ))),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::Model => "model",
            Normalization::Data => "data",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Use seeded uniform vectors instead of an embedding file.
    pub random_embeddings: bool,
    pub dim: usize,
    pub lang: TokenizeMode,
    pub test_frac: f64,
    /// Share of the training split held out for best-epoch selection.
    pub val_frac: f64,
    pub min_freq: usize,
    pub max_len: Option<usize>,
    pub seed: u64,

    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub neurons_per_class: usize,
    pub pooling: Pooling,
    pub activation: Activation,
    pub use_bias: bool,
    pub dropout: f64,

    pub ann_lr: f64,
    pub ann_batch: usize,
    pub ann_epochs: usize,

    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,

    pub beta: f64,
    pub u_thr: f64,
    pub time_steps: usize,
    pub surrogate_k: f64,
    pub centering: Centering,
    pub normalize: Normalization,

    pub trials: usize,
    pub out_dir: PathBuf,
    pub skip_finetune: bool,
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: None,
            embeddings: None,
            random_embeddings: false,
            dim: 300,
            lang: TokenizeMode::Whitespace,
            test_frac: 0.1,
            val_frac: 0.1,
            min_freq: 1,
            max_len: None,
            seed: 0,
            filter_widths: vec![3, 4, 5],
            feature_maps: 100,
            neurons_per_class: 10,
            pooling: Pooling::Avg,
            activation: Activation::Relu,
            use_bias: false,
            dropout: 0.5,
            ann_lr: 1e-4,
            ann_batch: 32,
            ann_epochs: 10,
            lr: 5e-5,
            batch: 50,
            epochs: 5,
            beta: 1.0,
            u_thr: 1.0,
            time_steps: 50,
            surrogate_k: 25.0,
            centering: Centering::Threshold,
            normalize: Normalization::None,
            trials: 5,
            out_dir: PathBuf::from("out"),
            skip_finetune: false,
            resume: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("bad value `{value}` for `{key}`"))),
    }
}

/// Comma-separated list of `T`.
pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect()
}

impl PipelineConfig {
    /// Defaults with the seed taken from the environment when set.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.set("seed", &seed)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "data" => self.data = opt_path(v),
            "embeddings" => self.embeddings = opt_path(v),
            "random_embeddings" => self.random_embeddings = parse_bool(key, v)?,
            "dim" => self.dim = parse_value(key, v)?,
            "lang" => self.lang = v.parse()?,
            "test_frac" => self.test_frac = parse_value(key, v)?,
            "val_frac" => self.val_frac = parse_value(key, v)?,
            "min_freq" => self.min_freq = parse_value(key, v)?,
            "max_len" => {
                self.max_len = match v {
                    "" | "auto" => None,
                    _ => Some(parse_value(key, v)?),
                }
            }
            "seed" => self.seed = parse_value(key, v)?,
            "filter_widths" => self.filter_widths = parse_list(key, v)?,
            "feature_maps" => self.feature_maps = parse_value(key, v)?,
            "neurons_per_class" | "h" => self.neurons_per_class = parse_value(key, v)?,
            "pooling" => self.pooling = v.parse()?,
            "activation" => self.activation = v.parse()?,
            "use_bias" => self.use_bias = parse_bool(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "ann_lr" => self.ann_lr = parse_value(key, v)?,
            "ann_batch" => self.ann_batch = parse_value(key, v)?,
            "ann_epochs" => self.ann_epochs = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "batch" => self.batch = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "beta" => self.beta = parse_value(key, v)?,
            "u_thr" => self.u_thr = parse_value(key, v)?,
            "time_steps" | "T" => self.time_steps = parse_value(key, v)?,
            "surrogate_k" => self.surrogate_k = parse_value(key, v)?,
            "centering" => {
                self.centering = match v {
                    "threshold" => Centering::Threshold,
                    "raw" => Centering::Raw,
                    _ => return Err(Error::invalid(format!("bad value `{v}` for `centering`"))),
                }
            }
            "normalize" => self.normalize = v.parse()?,
            "trials" => self.trials = parse_value(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "skip_finetune" => self.skip_finetune = parse_bool(key, v)?,
            "resume" => self.resume = parse_bool(key, v)?,
            _ => return Err(Error::invalid(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n + 1, format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| Error::parse(n + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Every key in the same format `apply_text` reads.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let widths: Vec<String> = self.filter_widths.iter().map(|w| w.to_string()).collect();
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("data", path(&self.data));
        put("embeddings", path(&self.embeddings));
        put("random_embeddings", self.random_embeddings.to_string());
        put("dim", self.dim.to_string());
        put("lang", self.lang.to_string());
        put("test_frac", self.test_frac.to_string());
        put("val_frac", self.val_frac.to_string());
        put("min_freq", self.min_freq.to_string());
        put("max_len", self.max_len.map(|m| m.to_string()).unwrap_or_else(|| "auto".into()));
        put("seed", self.seed.to_string());
        put("filter_widths", widths.join(","));
        put("feature_maps", self.feature_maps.to_string());
        put("neurons_per_class", self.neurons_per_class.to_string());
        put("pooling", self.pooling.to_string());
        put("activation", self.activation.to_string());
        put("use_bias", self.use_bias.to_string());
        put("dropout", self.dropout.to_string());
        put("ann_lr", self.ann_lr.to_string());
        put("ann_batch", self.ann_batch.to_string());
        put("ann_epochs", self.ann_epochs.to_string());
        put("lr", self.lr.to_string());
        put("batch", self.batch.to_string());
        put("epochs", self.epochs.to_string());
        put("beta", self.beta.to_string());
        put("u_thr", self.u_thr.to_string());
        put("time_steps", self.time_steps.to_string());
        put("surrogate_k", self.surrogate_k.to_string());
        put(
            "centering",
            match self.centering {
                Centering::Threshold => "threshold",
                Centering::Raw => "raw",
            }
            .into(),
        );
        put("normalize", self.normalize.to_string());
        put("trials", self.trials.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("skip_finetune", self.skip_finetune.to_string());
        put("resume", self.resume.to_string());
        s
    }

    pub fn cnn(&self, num_classes: usize) -> CnnConfig {
        CnnConfig {
            embed_dim: self.dim,
            filter_widths: self.filter_widths.clone(),
            feature_maps: self.feature_maps,
            num_classes,
            neurons_per_class: self.neurons_per_class,
            pooling: self.pooling,
            activation: self.activation,
            use_bias: self.use_bias,
        }
    }

    pub fn lif(&self) -> LifConfig {
        LifConfig {
            beta: self.beta,
            threshold: self.u_thr,
            time_steps: self.time_steps,
            slope: self.surrogate_k,
        }
    }

    pub fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig {
            slope: self.surrogate_k,
            centering: self.centering,
        }
    }

    pub fn ann_train(&self) -> TrainConfig {
        TrainConfig {
            lr: self.ann_lr,
            batch_size: self.ann_batch,
            epochs: self.ann_epochs,
            seed: self.seed,
            dropout_rate: self.dropout,
        }
    }

    pub fn snn_train(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            dropout_rate: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_frac) || !(0.0..1.0).contains(&self.val_frac) {
            return Err(Error::invalid("split fractions must lie in [0, 1)"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("need at least one evaluation trial"));
        }
        self.ann_train().validate()?;
        self.snn_train().validate()?;
        self.lif().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("normalize", "data").unwrap();
        cfg.set("filter_widths", "2,3").unwrap();
        cfg.set("max_len", "17").unwrap();
        cfg.set("data", "a/b.tsv").unwrap();
        let mut back = PipelineConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_errors() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# header\n\nepochs = 3  # short run\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert!(cfg.apply_text("epochs 3").is_err());
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("beta = fast").is_err());
    }
}
