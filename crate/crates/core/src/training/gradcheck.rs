//! Finite-difference validation of the analytic gradients.
//!
//! The spiking check swaps the Heaviside for the fast sigmoid in the forward
//! pass too, so the analytic chain and the loss being differenced agree.

use rand::Rng;

use super::{rate_ce_with_grad, BpttOptions, ResetGrad, SurrogateConfig};
use crate::ann::{backward, cross_entropy, forward_with_mask, CnnConfig, CnnParams};
use crate::encoder::SpikeTrain;
use crate::error::Result;
use crate::rng::{self, Purpose};
use crate::snn::{simulate, LifConfig, SnnModel, SpikeFn};

/// `|a − n| / max(|a|, |n|, 1e-6)`. The floor keeps round-off on vanishing
/// gradients from dominating.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_grad: f64,
    pub checked: usize,
}

/// Rate loss of the relaxed (smooth) network.
pub fn relaxed_loss(
    model: &SnnModel<f64>,
    spikes: &SpikeTrain,
    target: usize,
    surrogate: &SurrogateConfig,
) -> Result<f64> {
    let out = simulate(model, spikes, None, SpikeFn::Relaxed(*surrogate), false)?;
    let (loss, _) = rate_ce_with_grad(&out.class_logits, out.steps, out.num_classes, target);
    Ok(loss)
}

/// Compares backpropagation through time against central differences of the
/// relaxed loss for every weight.
pub fn grad_check_relaxed(
    model: &SnnModel<f64>,
    spikes: &SpikeTrain,
    target: usize,
    surrogate: &SurrogateConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let out = simulate(model, spikes, None, SpikeFn::Relaxed(*surrogate), true)?;
    let opts = BpttOptions {
        surrogate: *surrogate,
        reset: ResetGrad::Full,
    };
    let (_, grads) = super::bptt(model, spikes, &out, None, target, &opts)?;

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_grad: 0.0,
        checked: 0,
    };
    let analytic: Vec<Vec<f64>> = grads.named().iter().map(|(_, t)| t.data.clone()).collect();
    let n_tensors = analytic.len();
    for ti in 0..n_tensors {
        for j in 0..analytic[ti].len() {
            let original = probe.params.tensors_mut()[ti].data[j];
            probe.params.tensors_mut()[ti].data[j] = original + step;
            let up = relaxed_loss(&probe, spikes, target, surrogate)?;
            probe.params.tensors_mut()[ti].data[j] = original - step;
            let down = relaxed_loss(&probe, spikes, target, surrogate)?;
            probe.params.tensors_mut()[ti].data[j] = original;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[ti][j];
            report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric));
            report.max_abs_grad = report.max_abs_grad.max(a.abs());
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Same comparison for the ANN, over every weight and every input entry.
pub fn grad_check_ann(
    params: &CnnParams<f64>,
    config: &CnnConfig,
    x: &[f64],
    len: usize,
    target: usize,
    step: f64,
) -> Result<GradCheckReport> {
    let ones = vec![1.0; config.pooled_len()];
    let loss = |p: &CnnParams<f64>, input: &[f64]| -> Result<f64> {
        let (scores, _) = forward_with_mask(p, config, input, len, ones.clone())?;
        Ok(cross_entropy(&scores, target).0)
    };
    let (scores, cache) = forward_with_mask(params, config, x, len, ones.clone())?;
    let (_, d_scores) = cross_entropy(&scores, target);
    let (grads, d_x) = backward(&cache, params, config, &d_scores)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_grad: 0.0,
        checked: 0,
    };
    let mut record = |a: f64, n: f64| {
        report.max_rel_error = report.max_rel_error.max(relative_error(a, n));
        report.max_abs_grad = report.max_abs_grad.max(a.abs());
        report.checked += 1;
    };

    let mut probe = params.clone();
    let analytic: Vec<Vec<f64>> = grads.named().iter().map(|(_, t)| t.data.clone()).collect();
    for (ti, values) in analytic.iter().enumerate() {
        for (j, &a) in values.iter().enumerate() {
            let original = probe.tensors_mut()[ti].data[j];
            probe.tensors_mut()[ti].data[j] = original + step;
            let up = loss(&probe, x)?;
            probe.tensors_mut()[ti].data[j] = original - step;
            let down = loss(&probe, x)?;
            probe.tensors_mut()[ti].data[j] = original;
            record(a, (up - down) / (2.0 * step));
        }
    }
    let mut xp = x.to_vec();
    for (j, &a) in d_x.iter().enumerate() {
        xp[j] = x[j] + step;
        let up = loss(params, &xp)?;
        xp[j] = x[j] - step;
        let down = loss(params, &xp)?;
        xp[j] = x[j];
        record(a, (up - down) / (2.0 * step));
    }
    Ok(report)
}

/// A randomly drawn small spiking problem for gradient checking.
#[derive(Debug, Clone)]
pub struct TinyCase {
    pub model: SnnModel<f64>,
    pub spikes: SpikeTrain,
    pub target: usize,
}

/// Sizes of a tiny spiking problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TinyDims {
    pub embed_dim: usize,
    pub len: usize,
    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub num_classes: usize,
    pub neurons_per_class: usize,
    pub time_steps: usize,
}

/// Draws a tiny architecture (D ≤ 4, L ≤ 6, F ≤ 3, T ≤ 6) with weights spread
/// around the firing threshold.
pub fn random_tiny_case(seed: u64) -> TinyCase {
    let mut rng = rng::stream(seed, Purpose::GradCheck, &[]);
    let n_widths = rng.random_range(1..=2);
    let dims = TinyDims {
        embed_dim: rng.random_range(1..=4),
        len: rng.random_range(3..=6),
        filter_widths: (0..n_widths).map(|_| rng.random_range(1..=3)).collect(),
        feature_maps: rng.random_range(1..=3),
        num_classes: rng.random_range(2..=3),
        neurons_per_class: rng.random_range(1..=2),
        time_steps: rng.random_range(2..=6),
    };
    tiny_case_with(&dims, &mut rng)
}

/// A case with the given sizes and seeded random weights, neuron constants
/// and input spikes.
pub fn tiny_case(dims: &TinyDims, seed: u64) -> Result<TinyCase> {
    let mut rng = rng::stream(seed, Purpose::GradCheck, &[1]);
    let case = tiny_case_with(dims, &mut rng);
    case.model.config.validate()?;
    case.model.config.check_len(dims.len)?;
    Ok(case)
}

fn tiny_case_with(dims: &TinyDims, rng: &mut impl Rng) -> TinyCase {
    let config = CnnConfig {
        filter_widths: dims.filter_widths.clone(),
        feature_maps: dims.feature_maps,
        neurons_per_class: dims.neurons_per_class,
        ..CnnConfig::tailored(dims.embed_dim, dims.num_classes)
    };
    let mut params = CnnParams::<f64>::zeros(&config);
    for t in params.tensors_mut() {
        for w in &mut t.data {
            *w = rng.random_range(-1.5..2.0);
        }
    }
    let lif = LifConfig {
        beta: rng.random_range(0.5..=1.0),
        threshold: rng.random_range(0.5..1.5),
        time_steps: dims.time_steps,
        slope: 25.0,
    };
    let mut spikes = SpikeTrain::zeros(lif.time_steps, dims.len, dims.embed_dim);
    for b in &mut spikes.bits {
        *b = rng.random_bool(0.5) as u8;
    }
    TinyCase {
        model: SnnModel {
            config,
            params,
            lif,
        },
        spikes,
        target: rng.random_range(0..dims.num_classes),
    }
}
