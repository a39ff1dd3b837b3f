//! End-to-end orchestration: prepare → ann-train → convert → finetune →
//! eval → energy-report, with every stage persisted to the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::ann::{train_ann, CnnParams, EpochLoss};
use crate::checkpoint::{Bundle, Kind};
use crate::config::{Normalization, PipelineConfig};
use crate::corpus::{default_max_len, load_dataset, split, Dataset, TokenizeMode, Vocabulary};
use crate::embedding::{load_embeddings, normalize_shift, random_embeddings, EmbeddingTable};
use crate::energy::{count_flops, estimate_energy, measure_firing_rates, EnergyModel, EnergyReport};
use crate::error::{Error, Result};
use crate::eval::{evaluate_ann, evaluate_snn, EvalReport};
use crate::rng::Purpose;
use crate::snn::{convert, normalize_data_based, normalize_model_based, SnnModel};
use crate::training::{finetune, train_direct, EpochMetrics};

pub const PREPARED: &str = "prepared.ckpt";
pub const TRAIN_TSV: &str = "train.tsv";
pub const VAL_TSV: &str = "val.tsv";
pub const TEST_TSV: &str = "test.tsv";
pub const ANN_CKPT: &str = "ann.ckpt";
pub const SNN_CKPT: &str = "snn.ckpt";
pub const FINETUNED_CKPT: &str = "finetuned.ckpt";
pub const EVAL_TXT: &str = "eval.txt";
pub const ENERGY_TXT: &str = "energy.txt";
pub const METRICS_TXT: &str = "metrics.txt";

/// Split, encoded datasets together with the vocabulary and the shifted
/// embedding table.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub vocab: Vocabulary,
    pub table: EmbeddingTable,
    pub max_len: usize,
    pub mode: TokenizeMode,
}

fn empty_like(ds: &Dataset) -> Dataset {
    Dataset {
        examples: Vec::new(),
        num_classes: ds.num_classes,
        mode: ds.mode,
    }
}

impl Prepared {
    pub fn num_classes(&self) -> usize {
        self.train
            .num_classes
            .max(self.val.num_classes)
            .max(self.test.num_classes)
    }

    pub fn bundle(&self) -> Bundle {
        Bundle {
            kind: Kind::Prepared,
            vocab: self.vocab.clone(),
            mode: self.mode,
            max_len: self.max_len,
            table: self.table.clone(),
            model: None,
            lif: None,
            notes: vec![("num_classes".into(), self.num_classes().to_string())],
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.bundle().save(&dir.join(PREPARED))?;
        std::fs::write(dir.join(TRAIN_TSV), self.train.to_tsv())?;
        std::fs::write(dir.join(VAL_TSV), self.val.to_tsv())?;
        std::fs::write(dir.join(TEST_TSV), self.test.to_tsv())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let bundle = Bundle::load(&dir.join(PREPARED))?;
        let num_classes = bundle
            .notes
            .iter()
            .find(|(k, _)| k == "num_classes")
            .and_then(|(_, v)| v.parse().ok());
        let read = |name: &str| -> Result<Dataset> {
            let mut ds = read_split(&dir.join(name), &bundle)?;
            if let Some(k) = num_classes {
                ds.num_classes = ds.num_classes.max(k);
            }
            Ok(ds)
        };
        Ok(Prepared {
            train: read(TRAIN_TSV)?,
            val: read(VAL_TSV)?,
            test: read(TEST_TSV)?,
            vocab: bundle.vocab,
            table: bundle.table,
            max_len: bundle.max_len,
            mode: bundle.mode,
        })
    }
}

/// Reads a `<label>\t<text>` file and encodes it with a checkpoint's
/// vocabulary. An empty file gives an empty dataset.
pub fn read_split(path: &Path, bundle: &Bundle) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(Dataset {
            examples: Vec::new(),
            num_classes: 0,
            mode: bundle.mode,
        });
    }
    let mut ds = Dataset::parse(&text, bundle.mode)?;
    ds.encode(&bundle.vocab, bundle.max_len);
    Ok(ds)
}

/// Loads, splits and encodes the corpus and builds the embedding table.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate()?;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::invalid("no dataset given (set `data`)"))?;
    let all = load_dataset(data, cfg.lang)?;
    let (rest, mut test) = split(&all, cfg.test_frac, cfg.seed)?;
    let (mut train, mut val) = if cfg.val_frac > 0.0 {
        split(&rest, cfg.val_frac, cfg.seed)?
    } else {
        let empty = empty_like(&rest);
        (rest, empty)
    };
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let vocab = Vocabulary::build(&train, cfg.min_freq)?;
    let max_width = cfg.filter_widths.iter().copied().max().unwrap_or(1);
    let max_len = cfg.max_len.unwrap_or_else(|| default_max_len(&train)).max(max_width);
    let raw = if cfg.random_embeddings {
        random_embeddings(vocab.len(), cfg.dim, cfg.seed)
    } else {
        let path = cfg
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::invalid("no embedding file given (set `embeddings` or `random_embeddings`)"))?;
        load_embeddings(path, &vocab, cfg.dim, cfg.seed)?
    };
    let table = normalize_shift(&raw)?;
    for ds in [&mut train, &mut val, &mut test] {
        ds.encode(&vocab, max_len);
    }
    Ok(Prepared {
        train,
        val,
        test,
        vocab,
        table,
        max_len,
        mode: cfg.lang,
    })
}

fn model_bundle(p: &Prepared, table: EmbeddingTable, model: &SnnModel, kind: Kind) -> Bundle {
    Bundle {
        kind,
        vocab: p.vocab.clone(),
        mode: p.mode,
        max_len: p.max_len,
        table,
        model: Some((model.config.clone(), model.params.clone())),
        lif: (kind == Kind::Snn).then_some(model.lif),
        notes: Vec::new(),
    }
}

/// Trains the tailored (or, with overridden architecture flags, original) ANN.
pub fn ann_stage(cfg: &PipelineConfig, p: &Prepared) -> Result<(Bundle, Vec<EpochLoss>)> {
    let arch = cfg.cnn(p.num_classes());
    arch.validate()?;
    if arch.embed_dim != p.table.dim {
        return Err(Error::invalid(format!(
            "architecture expects {}-dimensional embeddings, table has {}",
            arch.embed_dim, p.table.dim
        )));
    }
    let init = CnnParams::init(&arch, cfg.seed);
    let out = train_ann(&arch, init, &p.train, &p.table, &cfg.ann_train())?;
    let bundle = Bundle {
        kind: Kind::Ann,
        vocab: p.vocab.clone(),
        mode: p.mode,
        max_len: p.max_len,
        table: out.table,
        model: Some((arch, out.params)),
        lif: None,
        notes: Vec::new(),
    };
    Ok((bundle, out.history))
}

/// Copies ANN weights into a spiking model and optionally rescales them.
pub fn convert_stage(cfg: &PipelineConfig, ann: &Bundle, train: Option<&Dataset>) -> Result<Bundle> {
    let (arch, params) = ann
        .model
        .as_ref()
        .ok_or_else(|| Error::invalid("checkpoint holds no network"))?;
    let mut model = convert(arch, params, cfg.lif())?;
    let lambdas = match cfg.normalize {
        Normalization::None => Vec::new(),
        Normalization::Model => {
            let (m, l) = normalize_model_based(&model);
            model = m;
            l
        }
        Normalization::Data => {
            let train = train.ok_or_else(|| Error::invalid("data-based normalization needs training data"))?;
            let (m, l) = normalize_data_based(&model, params, train, &ann.table)?;
            model = m;
            l
        }
    };
    let mut bundle = Bundle {
        kind: Kind::Snn,
        lif: Some(model.lif),
        model: Some((model.config, model.params)),
        notes: Vec::new(),
        ..ann.clone()
    };
    bundle.notes.push(("normalize".into(), cfg.normalize.to_string()));
    if !lambdas.is_empty() {
        let l: Vec<String> = lambdas.iter().map(|v| format!("{v:e}")).collect();
        bundle.notes.push(("lambdas".into(), l.join(",")));
    }
    Ok(bundle)
}

/// Surrogate-gradient fine-tuning of a spiking checkpoint.
pub fn finetune_stage(
    cfg: &PipelineConfig,
    snn: &Bundle,
    train: &Dataset,
    val: Option<&Dataset>,
) -> Result<(Bundle, Vec<EpochMetrics>)> {
    let model = snn.snn()?;
    let out = finetune(&model, train, &snn.table, val, &cfg.snn_train(), &cfg.surrogate())?;
    let mut bundle = Bundle {
        model: Some((out.model.config.clone(), out.model.params.clone())),
        ..snn.clone()
    };
    bundle.notes.push(("best_epoch".into(), out.best_epoch.to_string()));
    Ok((bundle, out.history))
}

/// Trains a spiking network from random weights, skipping the ANN.
pub fn direct_stage(cfg: &PipelineConfig, p: &Prepared) -> Result<(Bundle, Vec<EpochMetrics>)> {
    let arch = cfg.cnn(p.num_classes());
    let val = (!p.val.is_empty()).then_some(&p.val);
    let out = train_direct(&arch, cfg.lif(), &p.train, &p.table, val, &cfg.snn_train(), &cfg.surrogate())?;
    let mut bundle = model_bundle(p, p.table.clone(), &out.model, Kind::Snn);
    bundle.notes.push(("best_epoch".into(), out.best_epoch.to_string()));
    Ok((bundle, out.history))
}

/// Accuracy of any model checkpoint on `data`.
pub fn evaluate_bundle(bundle: &Bundle, data: &Dataset, trials: usize, seed: u64) -> Result<EvalReport> {
    match bundle.kind {
        Kind::Snn => evaluate_snn(&bundle.snn()?, data, &bundle.table, trials, seed, Purpose::Evaluate),
        Kind::Ann => {
            let (arch, params) = bundle.model.as_ref().expect("ann checkpoint holds a model");
            evaluate_ann(params, arch, data, &bundle.table)
        }
        Kind::Prepared => Err(Error::invalid("checkpoint holds no network")),
    }
}

/// Energy of one padded sentence through the ANN versus its spiking twin.
pub fn energy_stage(snn: &Bundle, data: &Dataset, trials: usize, seed: u64) -> Result<EnergyReport> {
    let model = snn.snn()?;
    let flops = count_flops(&model.config, snn.max_len)?;
    let rates = measure_firing_rates(&model, data, &snn.table, trials, seed)?;
    estimate_energy(&flops, &rates, model.lif.time_steps, &EnergyModel::default())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub ann: EvalReport,
    pub converted: EvalReport,
    pub finetuned: Option<EvalReport>,
    pub energy: EnergyReport,
    pub out_dir: PathBuf,
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(name))
}

/// Loads `path` when resuming and it exists; otherwise computes and saves it.
fn cached_bundle(
    resume: bool,
    path: &Path,
    compute: impl FnOnce() -> Result<(Bundle, String)>,
    log: &mut String,
) -> Result<Bundle> {
    if resume && path.exists() {
        return Bundle::load(path);
    }
    let (bundle, lines) = compute()?;
    bundle.save(path)?;
    log.push_str(&lines);
    Ok(bundle)
}

pub fn ann_history_lines(history: &[EpochLoss]) -> String {
    let mut s = String::new();
    for e in history {
        let _ = writeln!(
            s,
            "stage=ann-train epoch={} loss={:.6} train_acc={:.6}",
            e.epoch, e.loss, e.train_acc
        );
    }
    s
}

pub fn snn_history_lines(stage: &str, history: &[EpochMetrics]) -> String {
    let mut s = String::new();
    for e in history {
        let val = e.val_acc.map(|v| format!("{v:.6}")).unwrap_or_else(|| "na".into());
        let _ = writeln!(
            s,
            "stage={stage} epoch={} loss={:.6} train_acc={:.6} val_acc={val}",
            e.epoch, e.loss, e.train_acc
        );
    }
    s
}

pub fn result_line(model: &str, r: &EvalReport) -> String {
    format!(
        "result model={model} accuracy_mean={:.6} accuracy_std={:.6} trials={} active={:.6}\n",
        r.mean,
        r.std,
        r.trial_accuracies.len(),
        r.activity.active
    )
}

/// Runs every stage and writes checkpoints, `eval.txt`, `energy.txt` and
/// `metrics.txt` into `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    stage("config", || cfg.validate())?;
    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let mut log = String::new();

    let prepared = stage("prepare", || {
        if cfg.resume && dir.join(PREPARED).exists() {
            return Prepared::load(&dir);
        }
        let p = prepare(cfg)?;
        p.save(&dir)?;
        Ok(p)
    })?;

    let ann = stage("ann-train", || {
        cached_bundle(
            cfg.resume,
            &dir.join(ANN_CKPT),
            || {
                let (b, h) = ann_stage(cfg, &prepared)?;
                Ok((b, ann_history_lines(&h)))
            },
            &mut log,
        )
    })?;

    let snn = stage("convert", || {
        cached_bundle(
            cfg.resume,
            &dir.join(SNN_CKPT),
            || Ok((convert_stage(cfg, &ann, Some(&prepared.train))?, String::new())),
            &mut log,
        )
    })?;

    let finetuned = if cfg.skip_finetune {
        None
    } else {
        Some(stage("finetune", || {
            let val = (!prepared.val.is_empty()).then_some(&prepared.val);
            cached_bundle(
                cfg.resume,
                &dir.join(FINETUNED_CKPT),
                || {
                    let (b, h) = finetune_stage(cfg, &snn, &prepared.train, val)?;
                    Ok((b, snn_history_lines("finetune", &h)))
                },
                &mut log,
            )
        })?)
    };

    let (ann_report, converted, tuned) = stage("eval", || {
        let a = evaluate_bundle(&ann, &prepared.test, 1, cfg.seed)?;
        let c = evaluate_bundle(&snn, &prepared.test, cfg.trials, cfg.seed)?;
        let f = finetuned
            .as_ref()
            .map(|b| evaluate_bundle(b, &prepared.test, cfg.trials, cfg.seed))
            .transpose()?;
        Ok((a, c, f))
    })?;
    let mut results = String::new();
    results.push_str(&result_line("ann", &ann_report));
    results.push_str(&result_line("converted_snn", &converted));
    if let Some(f) = &tuned {
        results.push_str(&result_line("finetuned_snn", f));
    }
    let mut table = String::from("model\taccuracy\n");
    let _ = writeln!(table, "ann\t{:.2}", 100.0 * ann_report.mean);
    let _ = writeln!(table, "converted_snn\t{:.2} ± {:.2}", 100.0 * converted.mean, 100.0 * converted.std);
    if let Some(f) = &tuned {
        let _ = writeln!(table, "finetuned_snn\t{:.2} ± {:.2}", 100.0 * f.mean, 100.0 * f.std);
    }
    std::fs::write(dir.join(EVAL_TXT), format!("{results}\n{table}"))?;

    let final_snn = finetuned.as_ref().unwrap_or(&snn);
    let energy = stage("energy-report", || energy_stage(final_snn, &prepared.test, 1, cfg.seed))?;
    std::fs::write(dir.join(ENERGY_TXT), energy.to_table())?;

    let mut metrics = String::new();
    let _ = writeln!(metrics, "seed={} normalize={} trials={}", cfg.seed, cfg.normalize, cfg.trials);
    metrics.push_str(&log);
    metrics.push_str(&results);
    let _ = writeln!(
        metrics,
        "energy ann_mj={:.6e} snn_mj={:.6e} reduction={:.4}",
        energy.ann_mj, energy.snn_mj, energy.reduction
    );
    std::fs::write(dir.join(METRICS_TXT), metrics)?;

    Ok(RunSummary {
        ann: ann_report,
        converted,
        finetuned: tuned,
        energy,
        out_dir: dir,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Output neurons per class; retrains the whole pipeline per value.
    H,
    Beta,
    UThr,
    T,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(SweepParam::H),
            "beta" => Ok(SweepParam::Beta),
            "u_thr" => Ok(SweepParam::UThr),
            "T" | "t" | "time_steps" => Ok(SweepParam::T),
            _ => Err(Error::invalid(format!(
                "unknown sweep parameter `{s}` (expected h, beta, u_thr or T)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub report: EvalReport,
}

fn with_lif_value(model: &SnnModel, param: SweepParam, value: f64) -> Result<SnnModel> {
    let mut m = model.clone();
    match param {
        SweepParam::Beta => m.lif.beta = value,
        SweepParam::UThr => m.lif.threshold = value,
        SweepParam::T => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::invalid(format!("time steps must be a positive integer, got {value}")));
            }
            m.lif.time_steps = value as usize;
        }
        SweepParam::H => return Err(Error::invalid("h changes the architecture; use `sweep`")),
    }
    m.lif.validate()?;
    Ok(m)
}

/// Evaluates a fixed spiking model at each value of a neuron parameter.
pub fn sweep_lif(
    model: &SnnModel,
    param: SweepParam,
    values: &[f64],
    data: &Dataset,
    table: &EmbeddingTable,
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|&v| {
            let m = with_lif_value(model, param, v)?;
            let report = evaluate_snn(&m, data, table, trials, seed, Purpose::Evaluate)?;
            Ok(SweepRow { value: v, report })
        })
        .collect()
}

/// Sweeps `param` over `values`. Neuron parameters are varied on the
/// fine-tuned model in `cfg.out_dir`; `h` retrains ANN, conversion and
/// fine-tuning for each value.
pub fn sweep(cfg: &PipelineConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let prepared = match Prepared::load(&cfg.out_dir) {
        Ok(p) => p,
        Err(_) => prepare(cfg)?,
    };
    if param != SweepParam::H {
        let path = [FINETUNED_CKPT, SNN_CKPT]
            .iter()
            .map(|n| cfg.out_dir.join(n))
            .find(|p| p.exists())
            .ok_or_else(|| Error::invalid("no spiking checkpoint in the output directory; run the pipeline first"))?;
        let bundle = Bundle::load(&path)?;
        return sweep_lif(&bundle.snn()?, param, values, &prepared.test, &bundle.table, cfg.trials, cfg.seed);
    }
    let val = (!prepared.val.is_empty()).then_some(&prepared.val);
    values
        .iter()
        .map(|&v| {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::invalid(format!("h must be a positive integer, got {v}")));
            }
            let mut c = cfg.clone();
            c.neurons_per_class = v as usize;
            let (ann, _) = ann_stage(&c, &prepared)?;
            let snn = convert_stage(&c, &ann, Some(&prepared.train))?;
            let tuned = if c.skip_finetune {
                snn
            } else {
                finetune_stage(&c, &snn, &prepared.train, val)?.0
            };
            let report = evaluate_bundle(&tuned, &prepared.test, c.trials, c.seed)?;
            Ok(SweepRow { value: v, report })
        })
        .collect()
}

/// Tab-separated, plot-ready sweep table.
pub fn sweep_table(param: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{param}\taccuracy_mean\taccuracy_std\tactive\tconv_active\tout_active\tconv_rate\tout_rate\n");
    for r in rows {
        let a = &r.report.activity;
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.value, r.report.mean, r.report.std, a.active, a.conv_active, a.out_active, a.conv_rate, a.out_rate
        );
    }
    s
}
