//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use spiketext::ann::{CnnConfig, CnnParams};
use spiketext::checkpoint::Bundle;
use spiketext::embedding::{normalize_shift, RawEmbeddings};
use spiketext::encoder::{encode_keyed, encode_poisson, EncodeKey};
use spiketext::energy::{estimate_energy, EnergyModel, FiringRates, LayerFlops, LayerKind};
use spiketext::eval::ActivitySummary;
use spiketext::pipeline::{self, sweep_lif, Prepared, SweepParam};
use spiketext::rng::Purpose;
use spiketext::snn::{lif_step, LifConfig, LifState};
use spiketext::training::{grad_check_ann, grad_check_relaxed, random_tiny_case, SurrogateConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Printed rows: (dataset, ANN GFLOPs, ANN mJ, SNN GSOPs, SNN mJ, reduction).
const ENERGY_TABLE: [(&str, f64, f64, f64, f64, f64); 6] = [
    ("MR", 0.36, 4.498, 5.49, 0.422, 10.66),
    ("SST-2", 0.25, 3.140, 4.51, 0.347, 9.05),
    ("Subj", 0.36, 4.478, 6.06, 0.467, 9.59),
    ("SST-5", 0.25, 3.108, 4.41, 0.340, 9.14),
    ("ChnSenti", 0.33, 4.144, 7.37, 0.567, 7.31),
    ("Waimai", 0.33, 4.132, 3.72, 0.287, 14.40),
];

fn energy_model() -> Outcome {
    let model = EnergyModel::default();
    let t = 50;
    let mut worst: f64 = 0.0;
    let mut mr_reduction = 0.0;
    for (name, gflops, ann_mj, gsops, snn_mj, reduction) in ENERGY_TABLE {
        let flops = gflops * 1e9;
        // One layer whose firing rate turns the printed FLOPs into the printed SOPs.
        let layers = [LayerFlops {
            name: name.into(),
            kind: LayerKind::Fc,
            flops,
        }];
        let gamma = gsops * 1e9 / (t as f64 * flops);
        let rates = FiringRates {
            conv: gamma,
            pool: gamma,
            fc: gamma,
            activity: ActivitySummary::default(),
        };
        let r = estimate_energy(&layers, &rates, t, &model).map_err(|e| e.to_string())?;
        worst = worst.max(rel(r.ann_mj, ann_mj)).max(rel(r.snn_mj, snn_mj)).max(rel(r.reduction, reduction));
        if name == "MR" {
            mr_reduction = r.reduction;
        }
    }
    check(
        worst < 0.01,
        format!("max relative error {:.3}% over 6 rows, MR reduction {mr_reduction:.3}x", 100.0 * worst),
    )
}

fn lif_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let lif = LifConfig {
            beta: 1.0 - rng.random_range(0.0..1.0),
            threshold: rng.random_range(0.05..3.0),
            ..LifConfig::default()
        };
        let neurons = rng.random_range(1..8);
        let steps = rng.random_range(1..120);
        let currents: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..neurons).map(|_| rng.random_range(-1.0..2.5)).collect())
            .collect();

        let mut state = LifState::<f64>::zeros(neurons);
        let mut u = vec![0.0f64; neurons];
        let mut s = vec![0.0f64; neurons];
        for current in &currents {
            let (spikes, next) = lif_step(&state, current, &lif).map_err(|e| e.to_string())?;
            state = next;
            for n in 0..neurons {
                u[n] = current[n] + lif.beta * u[n] - s[n] * lif.threshold;
                s[n] = if u[n] >= lif.threshold { 1.0 } else { 0.0 };
                if state.potential[n].to_bits() != u[n].to_bits() || spikes[n].to_bits() != s[n].to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    check(mismatches == 0, format!("1000 random cases, {mismatches} bit mismatches"))
}

fn rate_coding() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bound_ok = true;
    for t in [50usize, 200] {
        let lif = LifConfig {
            time_steps: t,
            ..LifConfig::default()
        };
        for k in 0..=150 {
            let i = k as f64 / 100.0;
            let mut state = LifState::<f64>::zeros(1);
            let mut count = 0.0;
            for _ in 0..t {
                let (s, next) = lif_step(&state, &[i], &lif).map_err(|e| e.to_string())?;
                count += s[0];
                state = next;
            }
            let err = (count / t as f64 - (i / lif.threshold).clamp(0.0, 1.0)).abs();
            worst = worst.max(err * t as f64);
            // Where T·I is an integer the exact error equals 1/T, and charge
            // summed in floating point can land one ulp past it.
            bound_ok &= err <= 1.0 / t as f64 + 1e-12;
        }
    }
    check(bound_ok, format!("151 currents x T in {{50, 200}}, worst error {worst:.3}/T"))
}

fn gradients() -> Outcome {
    let surrogate = SurrogateConfig::default();
    let snn: Vec<f64> = (0..24u64)
        .into_par_iter()
        .map(|seed| {
            let case = random_tiny_case(seed);
            grad_check_relaxed(&case.model, &case.spikes, case.target, &surrogate, 1e-5)
                .map(|r| r.max_rel_error)
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let snn_worst = snn.iter().cloned().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ann_worst: f64 = 0.0;
    for case in 0..24 {
        let d = rng.random_range(1..=4);
        let base = if case % 2 == 0 {
            CnnConfig::tailored(d, rng.random_range(2..=3))
        } else {
            CnnConfig::original(d, rng.random_range(2..=3))
        };
        let config = CnnConfig {
            filter_widths: (0..rng.random_range(1..=2)).map(|_| rng.random_range(1..=3)).collect(),
            feature_maps: rng.random_range(1..=3),
            neurons_per_class: rng.random_range(1..=2),
            ..base
        };
        let len = rng.random_range(3..=6);
        let mut params = CnnParams::<f64>::zeros(&config);
        for t in params.tensors_mut() {
            t.data.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        }
        let x: Vec<f64> = (0..len * d).map(|_| rng.random_range(0.0..1.0)).collect();
        let target = rng.random_range(0..config.num_classes);
        let r = grad_check_ann(&params, &config, &x, len, target, 1e-5).map_err(|e| e.to_string())?;
        ann_worst = ann_worst.max(r.max_rel_error);
    }
    check(
        snn_worst < 1e-4 && ann_worst < 1e-4,
        format!("24 spiking cases max {snn_worst:.2e}, 24 ANN cases max {ann_worst:.2e}"),
    )
}

fn poisson() -> Outcome {
    let (t, n) = (50usize, 10_000usize);
    let mut details = Vec::new();
    let mut ok = true;
    for p in [0.1f32, 0.5, 0.9] {
        let x = vec![p; n];
        let key = EncodeKey::evaluation(11, Purpose::Evaluate, 0, (p * 10.0) as usize);
        let a = encode_keyed(&x, n, 1, t, key).map_err(|e| e.to_string())?;
        let b = encode_keyed(&x, n, 1, t, key).map_err(|e| e.to_string())?;
        let rate = a.rate();
        let p = p as f64;
        let sigma = (p * (1.0 - p) / (t * n) as f64).sqrt();
        ok &= (rate - p).abs() <= 3.0 * sigma && a == b;
        details.push(format!("p={p:.1}: rate {rate:.4} ({:.1} sigma)", (rate - p).abs() / sigma));
    }
    // Keyed streams do not depend on evaluation order.
    let x = vec![0.3f32; 40];
    let keys: Vec<EncodeKey> = (0..64).map(|i| EncodeKey::training(5, 1, i / 8, i)).collect();
    let forward: Vec<_> = keys.par_iter().map(|&k| encode_keyed(&x, 8, 5, t, k).unwrap()).collect();
    let reverse: Vec<_> = keys.iter().rev().map(|&k| encode_keyed(&x, 8, 5, t, k).unwrap()).collect();
    let order_free = forward.iter().eq(reverse.iter().rev());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let direct = encode_poisson(&x, 8, 5, t, &mut rng).is_ok();
    check(ok && order_free && direct, format!("{}; order-independent: {order_free}", details.join(", ")))
}

struct DeskResult {
    ann: f64,
    converted: f64,
    finetuned: f64,
    direct: f64,
}

fn desk_pipeline(root: &std::path::Path) -> Result<Vec<DeskResult>, String> {
    (0..3u64)
        .map(|seed| {
            let cfg = common::desk_config(&root.join(format!("seed{seed}")), seed);
            let summary = pipeline::run_pipeline(&cfg).map_err(|e| e.to_string())?;
            let prepared = Prepared::load(&cfg.out_dir).map_err(|e| e.to_string())?;
            let (direct, _) = pipeline::direct_stage(&cfg, &prepared).map_err(|e| e.to_string())?;
            let direct = pipeline::evaluate_bundle(&direct, &prepared.test, cfg.trials, cfg.seed)
                .map_err(|e| e.to_string())?;
            Ok(DeskResult {
                ann: summary.ann.mean,
                converted: summary.converted.mean,
                finetuned: summary.finetuned.map(|r| r.mean).unwrap_or(f64::NAN),
                direct: direct.mean,
            })
        })
        .collect()
}

fn ordering(results: &Result<Vec<DeskResult>, String>) -> Outcome {
    let results = results.as_ref().map_err(|e| e.clone())?;
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&DeskResult) -> f64| 100.0 * results.iter().map(f).sum::<f64>() / n;
    let (ann, conv, ft, direct) = (
        mean(&|r| r.ann),
        mean(&|r| r.converted),
        mean(&|r| r.finetuned),
        mean(&|r| r.direct),
    );
    let a = (conv - ann).abs() <= 5.0;
    let b = ft >= conv - 0.5;
    let c = direct < ft;
    check(
        a && b && c,
        format!(
            "3 seeds: ann {ann:.2}, converted {conv:.2}, finetuned {ft:.2}, direct {direct:.2} \
             [(a) {a}, (b) {b}, (c) {c}]"
        ),
    )
}

fn threshold_activity(root: &std::path::Path) -> Outcome {
    let dir = root.join("seed0").join("out");
    let bundle = Bundle::load(&dir.join(pipeline::FINETUNED_CKPT)).map_err(|e| e.to_string())?;
    let prepared = Prepared::load(&dir).map_err(|e| e.to_string())?;
    let model = bundle.snn().map_err(|e| e.to_string())?;
    let values = [0.5, 1.0, 2.0, 4.0];
    let rows = sweep_lif(&model, SweepParam::UThr, &values, &prepared.test, &bundle.table, 3, 0)
        .map_err(|e| e.to_string())?;
    let active: Vec<f64> = rows.iter().map(|r| r.report.activity.active).collect();
    let per_layer = rows.windows(2).all(|w| {
        let (a, b) = (&w[0].report.activity, &w[1].report.activity);
        b.conv_active <= a.conv_active && b.out_active <= a.out_active
    });
    let ok = active.windows(2).all(|w| w[1] <= w[0]) && per_layer;
    let shown: Vec<String> = values.iter().zip(&active).map(|(v, a)| format!("{v}:{a:.4}")).collect();
    check(ok, format!("active proportion by U_thr {}", shown.join(" ")))
}

fn embedding_transform() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = rand_distr::StandardNormal;
    let mut exact = true;
    let mut in_range = true;
    let mut monotone = true;
    let mut total = 0usize;
    for _ in 0..20 {
        let (mu, sd) = (rng.random_range(-2.0..2.0), rng.random_range(0.05..3.0));
        let (rows, dim) = (rng.random_range(2..200), rng.random_range(1..50));
        let data: Vec<f64> = (0..rows * dim)
            .map(|_| mu + sd * rng.sample::<f64, _>(normal))
            .collect();
        let raw = RawEmbeddings::new(rows, dim, data);
        let table = normalize_shift(&raw).map_err(|e| e.to_string())?;
        let s = table.stats;
        exact &= s.shift(s.mean) == 0.5 && s.shift(s.mean + 3.0 * s.std) == 1.0 && s.shift(s.mean - 3.0 * s.std) == 0.0;
        in_range &= table.data.iter().all(|v| (0.0..=1.0).contains(v));
        let mut pairs: Vec<(f64, f32)> = raw.data[dim..].iter().copied().zip(table.data[dim..].iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        monotone &= pairs.windows(2).all(|w| w[0].1 <= w[1].1);
        total += rows * dim;
    }
    check(
        exact && in_range && monotone,
        format!("20 Gaussian matrices ({total} values): exact anchors {exact}, in [0,1] {in_range}, monotone {monotone}"),
    )
}

fn determinism(root: &std::path::Path) -> Outcome {
    let run = |name: &str| -> Result<std::path::PathBuf, String> {
        let mut cfg = common::toy_config(&root.join(name), 3);
        cfg.normalize = spiketext::config::Normalization::Data;
        pipeline::run_pipeline(&cfg).map_err(|e| e.to_string())?;
        Ok(cfg.out_dir)
    };
    let (a, b) = (run("a")?, run("b")?);
    let files = [
        pipeline::PREPARED,
        pipeline::ANN_CKPT,
        pipeline::SNN_CKPT,
        pipeline::FINETUNED_CKPT,
        pipeline::EVAL_TXT,
        pipeline::ENERGY_TXT,
        pipeline::METRICS_TXT,
    ];
    let mut differing = Vec::new();
    for f in files {
        let x = std::fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(f)).map_err(|e| e.to_string())?;
        if x != y {
            differing.push(f);
        }
    }
    check(
        differing.is_empty(),
        format!("{} artifacts compared, differing: {:?}", files.len(), differing),
    )
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n} {name}: PASS ({d}) [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({d}) [{secs:.1}s]");
            }
        }
    };
    report(1, "energy-model", &mut energy_model);
    report(2, "lif-recurrence-oracle", &mut lif_oracle);
    report(3, "rate-coding-convergence", &mut rate_coding);
    report(4, "gradient-correctness", &mut gradients);
    report(5, "poisson-statistics", &mut poisson);
    let mut desk = None;
    report(6, "desk-scale-ordering", &mut || {
        let r = desk_pipeline(root.path());
        let out = ordering(&r);
        desk = Some(r);
        out
    });
    report(7, "threshold-activity-monotonicity", &mut || match &desk {
        Some(Ok(_)) => threshold_activity(root.path()),
        _ => Err("desk-scale model unavailable".into()),
    });
    report(8, "embedding-transform", &mut embedding_transform);
    report(9, "determinism", &mut || determinism(root.path()));
    println!(
        "acceptance: {} of 9 criteria passed in {:.1}s",
        9 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
