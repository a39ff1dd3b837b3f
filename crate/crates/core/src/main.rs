use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spiketext::checkpoint::{Bundle, Kind};
use spiketext::config::{parse_list, PipelineConfig};
use spiketext::encoder::{encode_keyed, EncodeKey};
use spiketext::pipeline::{self, Prepared, SweepParam};
use spiketext::rng::Purpose;
use spiketext::synth::{synthetic_corpus, SynthSpec};
use spiketext::training::{grad_check_relaxed, random_tiny_case, tiny_case, SurrogateConfig, TinyDims};
use spiketext::{Error, Result};

macro_rules! config_flags {
    ($($field:ident => $key:literal),* $(,)?) => {
        /// Every configuration key is also a flag; flags override the file.
        #[derive(Args, Debug, Default)]
        struct ConfigFlags {
            /// Flat `key = value` configuration file.
            #[arg(long, global = true)]
            config: Option<PathBuf>,
            /// Initialize embeddings randomly instead of from a file.
            #[arg(long, global = true)]
            random_embeddings: bool,
            /// Stop after conversion (evaluate the converted network only).
            #[arg(long, global = true)]
            skip_finetune: bool,
            /// Reuse checkpoints already present in the output directory.
            #[arg(long, global = true)]
            resume: bool,
            $(
                #[arg(long, global = true, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn resolve(&self) -> Result<PipelineConfig> {
                let mut cfg = PipelineConfig::from_env()?;
                if let Some(path) = &self.config {
                    cfg.apply_file(path)?;
                }
                $(
                    if let Some(v) = &self.$field {
                        cfg.set($key, v)?;
                    }
                )*
                cfg.random_embeddings |= self.random_embeddings;
                cfg.skip_finetune |= self.skip_finetune;
                cfg.resume |= self.resume;
                cfg.validate()?;
                Ok(cfg)
            }
        }
    };
}

config_flags! {
    data => "data",
    embeddings => "embeddings",
    dim => "dim",
    lang => "lang",
    test_frac => "test_frac",
    val_frac => "val_frac",
    min_freq => "min_freq",
    max_len => "max_len",
    seed => "seed",
    filter_widths => "filter_widths",
    feature_maps => "feature_maps",
    neurons_per_class => "neurons_per_class",
    pooling => "pooling",
    activation => "activation",
    use_bias => "use_bias",
    dropout => "dropout",
    ann_lr => "ann_lr",
    ann_batch => "ann_batch",
    ann_epochs => "ann_epochs",
    lr => "lr",
    batch => "batch",
    epochs => "epochs",
    beta => "beta",
    u_thr => "u_thr",
    time_steps => "time_steps",
    surrogate_k => "surrogate_k",
    surrogate_centering => "centering",
    normalize => "normalize",
    trials => "trials",
    out_dir => "out_dir",
}

#[derive(Parser, Debug)]
#[command(name = "spiketext", version, about = "Spiking text classifiers via conversion and fine-tuning")]
struct Cli {
    #[command(flatten)]
    flags: ConfigFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct InOut {
    /// Input checkpoint.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output checkpoint (defaults to a fixed name in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic sentiment corpus and matching word vectors.
    Synth {
        #[arg(long, default_value_t = 2000)]
        examples: usize,
        #[arg(long, default_value_t = 7)]
        corpus_seed: u64,
    },
    /// Split and encode the corpus, build the embedding table.
    Prepare,
    /// Train the ANN on the prepared data.
    AnnTrain {
        #[command(flatten)]
        io: InOut,
    },
    /// Turn an ANN checkpoint into a spiking one.
    Convert {
        #[command(flatten)]
        io: InOut,
    },
    /// Fine-tune a spiking checkpoint with surrogate gradients.
    Finetune {
        #[command(flatten)]
        io: InOut,
        /// Validation file used for best-epoch selection.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Train a spiking network from random weights.
    TrainDirect {
        #[command(flatten)]
        io: InOut,
    },
    /// Accuracy of a checkpoint on a labelled file.
    Eval {
        #[command(flatten)]
        io: InOut,
        /// Dump the first example's spike train as a bit-packed file.
        #[arg(long)]
        record_spikes: Option<PathBuf>,
    },
    /// Per-layer operation counts and energy estimates.
    EnergyReport {
        #[command(flatten)]
        io: InOut,
    },
    /// Check BPTT gradients against finite differences.
    Gradcheck {
        /// Number of random tiny cases.
        #[arg(long, default_value_t = 20)]
        cases: u64,
        /// Fixed sizes `D,L,F,T` instead of random ones.
        #[arg(long)]
        dims: Option<String>,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Vary one parameter and tabulate accuracy and activity.
    Sweep {
        /// One of h, beta, u_thr, T.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Every stage end to end.
    Run,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn default_in(io: &InOut, cfg: &PipelineConfig, name: &str) -> PathBuf {
    io.input.clone().unwrap_or_else(|| cfg.out_dir.join(name))
}

fn default_out(io: &InOut, cfg: &PipelineConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(io.out.clone().unwrap_or_else(|| cfg.out_dir.join(name)))
}

/// The labelled file given by `data`, or `fallback` in the output directory.
fn split_path(cfg: &PipelineConfig, fallback: &str) -> PathBuf {
    cfg.data.clone().unwrap_or_else(|| cfg.out_dir.join(fallback))
}

fn load_split(path: &Path, bundle: &Bundle) -> Result<spiketext::corpus::Dataset> {
    pipeline::read_split(path, bundle)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.flags.resolve()?;
    match cli.command {
        Command::Synth {
            examples,
            corpus_seed,
        } => {
            let corpus = synthetic_corpus(&SynthSpec {
                examples,
                dim: cfg.dim,
                seed: corpus_seed,
                ..Default::default()
            });
            std::fs::create_dir_all(&cfg.out_dir)?;
            let tsv = cfg.out_dir.join("corpus.tsv");
            let vec = cfg.out_dir.join("vectors.txt");
            std::fs::write(&tsv, corpus.tsv)?;
            std::fs::write(&vec, corpus.vectors)?;
            println!("corpus={} vectors={}", tsv.display(), vec.display());
        }
        Command::Prepare => {
            let p = pipeline::prepare(&cfg)?;
            p.save(&cfg.out_dir)?;
            println!(
                "train={} val={} test={} vocab={} max_len={}",
                p.train.len(),
                p.val.len(),
                p.test.len(),
                p.vocab.len(),
                p.max_len
            );
        }
        Command::AnnTrain { io } => {
            let p = Prepared::load(&cfg.out_dir)?;
            let (bundle, history) = pipeline::ann_stage(&cfg, &p)?;
            bundle.save(&default_out(&io, &cfg, pipeline::ANN_CKPT)?)?;
            print!("{}", pipeline::ann_history_lines(&history));
        }
        Command::Convert { io } => {
            let ann = Bundle::load(&default_in(&io, &cfg, pipeline::ANN_CKPT))?;
            let train = load_split(&split_path(&cfg, pipeline::TRAIN_TSV), &ann).ok();
            let snn = pipeline::convert_stage(&cfg, &ann, train.as_ref())?;
            snn.save(&default_out(&io, &cfg, pipeline::SNN_CKPT)?)?;
            for (k, v) in &snn.notes {
                println!("{k}={v}");
            }
        }
        Command::Finetune { io, val } => {
            let snn = Bundle::load(&default_in(&io, &cfg, pipeline::SNN_CKPT))?;
            let train = load_split(&split_path(&cfg, pipeline::TRAIN_TSV), &snn)?;
            let val_path = val.unwrap_or_else(|| cfg.out_dir.join(pipeline::VAL_TSV));
            let val = if val_path.exists() {
                Some(load_split(&val_path, &snn)?)
            } else {
                None
            };
            let val = val.as_ref().filter(|v| !v.is_empty());
            let (bundle, history) = pipeline::finetune_stage(&cfg, &snn, &train, val)?;
            bundle.save(&default_out(&io, &cfg, pipeline::FINETUNED_CKPT)?)?;
            print!("{}", pipeline::snn_history_lines("finetune", &history));
        }
        Command::TrainDirect { io } => {
            let p = Prepared::load(&cfg.out_dir)?;
            let (bundle, history) = pipeline::direct_stage(&cfg, &p)?;
            bundle.save(&default_out(&io, &cfg, "direct.ckpt")?)?;
            print!("{}", pipeline::snn_history_lines("train-direct", &history));
        }
        Command::Eval { io, record_spikes } => {
            let bundle = Bundle::load(&default_in(&io, &cfg, pipeline::FINETUNED_CKPT))?;
            let data = load_split(&split_path(&cfg, pipeline::TEST_TSV), &bundle)?;
            if let Some(path) = record_spikes {
                let lif = bundle
                    .lif
                    .ok_or_else(|| Error::InvalidArgument("spike recording needs a spiking checkpoint".into()))?;
                let ex = data.examples.first().ok_or(Error::EmptyDataset)?;
                let x = bundle.table.embed(&ex.tokens);
                let key = EncodeKey::evaluation(cfg.seed, Purpose::Evaluate, 0, 0);
                encode_keyed(&x, ex.tokens.len(), bundle.table.dim, lif.time_steps, key)?.write(&path)?;
            }
            let trials = if bundle.kind == Kind::Snn { cfg.trials } else { 1 };
            let report = pipeline::evaluate_bundle(&bundle, &data, trials, cfg.seed)?;
            print!("{}", pipeline::result_line("checkpoint", &report));
        }
        Command::EnergyReport { io } => {
            let bundle = Bundle::load(&default_in(&io, &cfg, pipeline::FINETUNED_CKPT))?;
            let data = load_split(&split_path(&cfg, pipeline::TEST_TSV), &bundle)?;
            print!("{}", pipeline::energy_stage(&bundle, &data, 1, cfg.seed)?.to_table());
        }
        Command::Gradcheck { cases, dims, step } => {
            let surrogate = SurrogateConfig {
                slope: cfg.surrogate_k,
                centering: cfg.centering,
            };
            let tiny: Vec<_> = match dims {
                Some(d) => {
                    let d: Vec<usize> = parse_list("dims", &d)?;
                    let [embed_dim, len, feature_maps, time_steps] = d[..] else {
                        return Err(Error::InvalidArgument("--dims expects D,L,F,T".into()));
                    };
                    let dims = TinyDims {
                        embed_dim,
                        len,
                        filter_widths: vec![1, 2],
                        feature_maps,
                        num_classes: 2,
                        neurons_per_class: 1,
                        time_steps,
                    };
                    vec![tiny_case(&dims, cfg.seed)?]
                }
                None => (0..cases).map(|i| random_tiny_case(cfg.seed + i)).collect(),
            };
            let mut worst = 0.0f64;
            for (i, case) in tiny.iter().enumerate() {
                let r = grad_check_relaxed(&case.model, &case.spikes, case.target, &surrogate, step)?;
                println!(
                    "case={i} checked={} max_rel_error={:.3e} max_abs_grad={:.3e}",
                    r.checked, r.max_rel_error, r.max_abs_grad
                );
                worst = worst.max(r.max_rel_error);
            }
            println!("max_rel_error={worst:.3e}");
        }
        Command::Sweep { param, values } => {
            let p: SweepParam = param.parse()?;
            let values: Vec<f64> = parse_list("values", &values)?;
            let rows = pipeline::sweep(&cfg, p, &values)?;
            print!("{}", pipeline::sweep_table(&param, &rows));
        }
        Command::Run => {
            let summary = pipeline::run_pipeline(&cfg)?;
            print!("{}", std::fs::read_to_string(summary.out_dir.join(pipeline::EVAL_TXT))?);
        }
    }
    Ok(())
}
