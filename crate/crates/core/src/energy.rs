//! Operation counts and energy estimates for the ANN and its spiking twin.

use std::fmt::Write as _;

use crate::ann::CnnConfig;
use crate::corpus::Dataset;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{evaluate_snn, ActivitySummary};
use crate::rng::Purpose;
use crate::snn::SnnModel;

/// Per-operation energy costs in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    /// One synaptic operation on neuromorphic hardware.
    pub e_sop: f64,
    /// One floating-point operation on a GPU.
    pub e_flop: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            e_sop: 77e-15,
            e_flop: 12.5e-12,
        }
    }
}

impl EnergyModel {
    pub fn ann_mj(&self, flops: f64) -> f64 {
        flops * self.e_flop * 1e3
    }

    pub fn snn_mj(&self, sops: f64) -> f64 {
        sops * self.e_sop * 1e3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Pool,
    Fc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFlops {
    pub name: String,
    pub kind: LayerKind,
    pub flops: f64,
}

/// FLOPs of one ANN forward pass over a sentence of `len` tokens.
///
/// Conv bank of width `w`: `(L−w+1)·F·2wD`; its average pool: `(L−w+1)·F`;
/// readout: `2·M·hK` with `M = F·|widths|`.
pub fn count_flops(config: &CnnConfig, len: usize) -> Result<Vec<LayerFlops>> {
    config.validate()?;
    config.check_len(len)?;
    let d = config.embed_dim as f64;
    let f = config.feature_maps as f64;
    let mut layers = Vec::new();
    for &w in &config.filter_widths {
        let positions = (len - w + 1) as f64;
        layers.push(LayerFlops {
            name: format!("conv{w}"),
            kind: LayerKind::Conv,
            flops: positions * f * 2.0 * w as f64 * d,
        });
        layers.push(LayerFlops {
            name: format!("pool{w}"),
            kind: LayerKind::Pool,
            flops: positions * f,
        });
    }
    layers.push(LayerFlops {
        name: "fc".into(),
        kind: LayerKind::Fc,
        flops: 2.0 * config.pooled_len() as f64 * config.out_units() as f64,
    });
    Ok(layers)
}

/// `SOPs = T · γ · FLOPs`.
pub fn sops(time_steps: usize, rate: f64, flops: f64) -> f64 {
    time_steps as f64 * rate * flops
}

/// Mean firing rate feeding each kind of layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiringRates {
    /// Input spikes into the conv banks.
    pub conv: f64,
    /// Conv spikes into the pools.
    pub pool: f64,
    /// Pooled values into the readout.
    pub fc: f64,
    pub activity: ActivitySummary,
}

impl FiringRates {
    pub fn for_layer(&self, kind: LayerKind) -> f64 {
        match kind {
            LayerKind::Conv => self.conv,
            LayerKind::Pool => self.pool,
            LayerKind::Fc => self.fc,
        }
    }
}

/// Measures firing rates by simulating the model over `data`.
pub fn measure_firing_rates(
    model: &SnnModel,
    data: &Dataset,
    table: &EmbeddingTable,
    trials: usize,
    seed: u64,
) -> Result<FiringRates> {
    let report = evaluate_snn(model, data, table, trials, seed, Purpose::Evaluate)?;
    let a = report.activity;
    Ok(FiringRates {
        conv: a.input_rate,
        pool: a.conv_rate,
        fc: a.pooled_rate,
        activity: a,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerEnergy {
    pub name: String,
    pub flops: f64,
    pub rate: f64,
    pub sops: f64,
    pub ann_mj: f64,
    pub snn_mj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub time_steps: usize,
    pub layers: Vec<LayerEnergy>,
    pub total_flops: f64,
    pub total_sops: f64,
    pub ann_mj: f64,
    pub snn_mj: f64,
    /// `ann_mj / snn_mj`.
    pub reduction: f64,
}

/// Combines per-layer FLOPs with measured firing rates.
pub fn estimate_energy(
    flops: &[LayerFlops],
    rates: &FiringRates,
    time_steps: usize,
    model: &EnergyModel,
) -> Result<EnergyReport> {
    if flops.is_empty() {
        return Err(Error::invalid("no layers to account for"));
    }
    let layers: Vec<LayerEnergy> = flops
        .iter()
        .map(|l| {
            let rate = rates.for_layer(l.kind);
            let s = sops(time_steps, rate, l.flops);
            LayerEnergy {
                name: l.name.clone(),
                flops: l.flops,
                rate,
                sops: s,
                ann_mj: model.ann_mj(l.flops),
                snn_mj: model.snn_mj(s),
            }
        })
        .collect();
    let total_flops = layers.iter().map(|l| l.flops).sum();
    let total_sops = layers.iter().map(|l| l.sops).sum();
    let ann_mj = model.ann_mj(total_flops);
    let snn_mj = model.snn_mj(total_sops);
    Ok(EnergyReport {
        time_steps,
        layers,
        total_flops,
        total_sops,
        ann_mj,
        snn_mj,
        reduction: if snn_mj > 0.0 { ann_mj / snn_mj } else { f64::INFINITY },
    })
}

impl EnergyReport {
    /// Tab-separated table with a totals row.
    pub fn to_table(&self) -> String {
        let mut s = String::from("layer\tflops\tgamma\tsops\tann_mj\tsnn_mj\n");
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{}\t{:.0}\t{:.6}\t{:.1}\t{:.6e}\t{:.6e}",
                l.name, l.flops, l.rate, l.sops, l.ann_mj, l.snn_mj
            );
        }
        let _ = writeln!(
            s,
            "total\t{:.0}\t-\t{:.1}\t{:.6e}\t{:.6e}",
            self.total_flops, self.total_sops, self.ann_mj, self.snn_mj
        );
        let _ = writeln!(s, "time_steps\t{}", self.time_steps);
        let _ = writeln!(s, "reduction\t{:.4}", self.reduction);
        s
    }
}
