use proptest::prelude::*;

use spiketext::ann::CnnConfig;
use spiketext::energy::{count_flops, estimate_energy, EnergyModel, FiringRates};
use spiketext::eval::ActivitySummary;

/// Counts operations by walking the loops a dense implementation would run:
/// one multiply and one add per weight use, one add per pooled element.
fn walk_flops(config: &CnnConfig, len: usize) -> f64 {
    let mut ops = 0u64;
    for &w in &config.filter_widths {
        for _pos in 0..=len - w {
            for _f in 0..config.feature_maps {
                for _k in 0..w * config.embed_dim {
                    ops += 2;
                }
            }
        }
        for _f in 0..config.feature_maps {
            for _pos in 0..=len - w {
                ops += 1;
            }
        }
    }
    for _out in 0..config.out_units() {
        for _in in 0..config.pooled_len() {
            ops += 2;
        }
    }
    ops as f64
}

fn uniform(rate: f64) -> FiringRates {
    FiringRates {
        conv: rate,
        pool: rate,
        fc: rate,
        activity: ActivitySummary::default(),
    }
}

proptest! {
    #[test]
    fn flops_match_loop_count(
        d in 1usize..12,
        f in 1usize..6,
        widths in proptest::collection::btree_set(1usize..6, 1..4),
        k in 2usize..4,
        h in 1usize..5,
        extra in 0usize..10,
    ) {
        let config = CnnConfig {
            filter_widths: widths.into_iter().collect(),
            feature_maps: f,
            neurons_per_class: h,
            ..CnnConfig::tailored(d, k)
        };
        let len = config.max_width() + extra;
        let total: f64 = count_flops(&config, len).unwrap().iter().map(|l| l.flops).sum();
        prop_assert_eq!(total, walk_flops(&config, len));
    }

    #[test]
    fn uniform_rate_reduction(rate in 0.001f64..1.0, t in 1usize..200) {
        let config = CnnConfig::tailored(10, 2);
        let flops = count_flops(&config, 20).unwrap();
        let r = estimate_energy(&flops, &uniform(rate), t, &EnergyModel::default()).unwrap();
        let want = 12.5e-12 / (77e-15 * t as f64 * rate);
        prop_assert!((r.reduction - want).abs() <= 1e-9 * want);
        prop_assert!((r.total_sops - t as f64 * rate * r.total_flops).abs() <= 1e-6 * r.total_sops);
    }
}

#[test]
fn silent_network_costs_nothing() {
    let config = CnnConfig::tailored(4, 2);
    let flops = count_flops(&config, 8).unwrap();
    let r = estimate_energy(&flops, &uniform(0.0), 50, &EnergyModel::default()).unwrap();
    assert_eq!(r.snn_mj, 0.0);
    assert!(r.reduction.is_infinite());
    assert!(r.to_table().contains("reduction\tinf"));
}

#[test]
fn table_has_one_row_per_layer() {
    let config = CnnConfig::tailored(300, 2);
    let flops = count_flops(&config, 50).unwrap();
    let r = estimate_energy(&flops, &uniform(0.1), 50, &EnergyModel::default()).unwrap();
    let table = r.to_table();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["conv3", "pool3", "conv4", "pool4", "conv5", "pool5", "fc", "total", "time_steps", "reduction"]);
    // conv3 alone: 48 positions × 100 maps × 2·3·300.
    assert_eq!(r.layers[0].flops, 48.0 * 100.0 * 1800.0);
}
