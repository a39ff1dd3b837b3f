//! Accuracy and spiking-activity measurement over datasets.

use rayon::prelude::*;

use crate::ann::{ann_accuracy, CnnConfig, CnnParams};
use crate::corpus::Dataset;
use crate::embedding::EmbeddingTable;
use crate::encoder::{encode_keyed, EncodeKey};
use crate::error::{Error, Result};
use crate::rng::Purpose;
use crate::snn::{forward_spiking, readout, Activity, SnnModel};

/// Activity averaged over every simulated run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActivitySummary {
    pub runs: usize,
    /// Mean spike probability per step on the encoded input (enters the conv banks).
    pub input_rate: f64,
    /// Mean spike probability per step of the conv neurons (enters pooling).
    pub conv_rate: f64,
    /// Mean pooled value per step (enters the readout layer).
    pub pooled_rate: f64,
    /// Mean spike probability per step of the readout neurons.
    pub out_rate: f64,
    /// Fraction of conv neurons with at least one spike per run.
    pub conv_active: f64,
    pub out_active: f64,
    /// Fraction of all neurons with at least one spike per run.
    pub active: f64,
}

impl ActivitySummary {
    pub fn from_runs(runs: &[Activity]) -> Self {
        if runs.is_empty() {
            return Self::default();
        }
        let sum = |f: &dyn Fn(&Activity) -> f64| runs.iter().map(f).sum::<f64>();
        let n = runs.len() as f64;
        let rate = |num: &dyn Fn(&Activity) -> f64, den: &dyn Fn(&Activity) -> f64| {
            let d = sum(den);
            if d > 0.0 {
                sum(num) / d
            } else {
                0.0
            }
        };
        ActivitySummary {
            runs: runs.len(),
            input_rate: rate(&|a| a.input_spikes, &|a| (a.steps * a.input_units) as f64),
            conv_rate: rate(&|a| a.conv_spikes, &|a| (a.steps * a.conv_units) as f64),
            pooled_rate: rate(&|a| a.pooled_sum, &|a| (a.steps * a.pooled_units) as f64),
            out_rate: rate(&|a| a.out_spikes, &|a| (a.steps * a.out_units) as f64),
            conv_active: sum(&|a| a.conv_active as f64 / a.conv_units.max(1) as f64) / n,
            out_active: sum(&|a| a.out_active as f64 / a.out_units.max(1) as f64) / n,
            active: sum(&|a| {
                (a.conv_active + a.out_active) as f64 / (a.conv_units + a.out_units).max(1) as f64
            }) / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub trial_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over trials (zero for a single trial).
    pub std: f64,
    pub activity: ActivitySummary,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Classifies every example `trials` times, each with a fresh Poisson encoding.
pub fn evaluate_snn(
    model: &SnnModel,
    data: &Dataset,
    table: &EmbeddingTable,
    trials: usize,
    seed: u64,
    purpose: Purpose,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let trials = trials.max(1);
    let steps = model.lif.time_steps;
    let mut accuracies = Vec::with_capacity(trials);
    let mut runs = Vec::with_capacity(trials * data.len());
    for trial in 0..trials {
        let results: Result<Vec<(bool, Activity)>> = data
            .examples
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let x = table.embed(&ex.tokens);
                let key = EncodeKey::evaluation(seed, purpose, trial, i);
                let spikes = encode_keyed(&x, ex.tokens.len(), table.dim, steps, key)?;
                let out = forward_spiking(model, &spikes, false)?;
                Ok((readout(&out) == ex.label, out.activity))
            })
            .collect();
        let results = results?;
        let correct = results.iter().filter(|(c, _)| *c).count();
        accuracies.push(correct as f64 / data.len() as f64);
        runs.extend(results.into_iter().map(|(_, a)| a));
    }
    let (mean, std) = mean_std(&accuracies);
    Ok(EvalReport {
        trial_accuracies: accuracies,
        mean,
        std,
        activity: ActivitySummary::from_runs(&runs),
    })
}

/// ANN accuracy in the same report shape (deterministic, so one trial).
pub fn evaluate_ann(
    params: &CnnParams<f32>,
    config: &CnnConfig,
    data: &Dataset,
    table: &EmbeddingTable,
) -> Result<EvalReport> {
    let acc = ann_accuracy(params, config, data, table)?;
    Ok(EvalReport {
        trial_accuracies: vec![acc],
        mean: acc,
        std: 0.0,
        activity: ActivitySummary::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
