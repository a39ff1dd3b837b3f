//! Surrogate-gradient training of spiking models: the per-step rate loss,
//! backpropagation through time, fine-tuning and direct training.

mod bptt;
mod finetune;
mod gradcheck;
mod surrogate;

use rand::seq::SliceRandom;

use crate::ann::softmax;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{self, Purpose};
use crate::snn::StepOutput;

pub use bptt::{backward_through_time, bptt, BpttOptions, ResetGrad};
pub use finetune::{finetune, train_direct, EpochMetrics, FinetuneOutcome};
pub use gradcheck::{
    grad_check_ann, grad_check_relaxed, random_tiny_case, relative_error, relaxed_loss, tiny_case,
    GradCheckReport, TinyCase, TinyDims,
};
pub use surrogate::{surrogate_grad, Centering, SurrogateConfig};

/// Optimization settings shared by ANN training and SNN fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropout_rate: f64,
}

impl TrainConfig {
    /// Tailored-ANN defaults: learning rate 1e-4, batch 32, dropout 0.5.
    pub fn ann() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            dropout_rate: 0.5,
        }
    }

    /// SNN fine-tuning defaults: learning rate 5e-5, batch 50, 5 epochs.
    pub fn snn() -> Self {
        TrainConfig {
            lr: 5e-5,
            batch_size: 50,
            epochs: 5,
            seed: 0,
            dropout_rate: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Seeded permutation of `0..n` for one epoch of one training phase.
pub(crate) fn epoch_order(n: usize, seed: u64, phase: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Shuffle, &[phase, epoch as u64]));
    order
}

pub(crate) fn batches(order: &[usize], size: usize) -> std::slice::Chunks<'_, usize> {
    order.chunks(size.max(1))
}

/// Per-step softmax over class logits, cross-entropy against `target`,
/// averaged over the steps.
pub fn loss_rate_ce<F: Real>(out: &StepOutput<F>, target: usize) -> F {
    let (loss, _) = rate_ce_with_grad(&out.class_logits, out.steps, out.num_classes, target);
    loss
}

/// The rate loss and its gradient with respect to every per-step logit
/// (`steps × K`).
pub fn rate_ce_with_grad<F: Real>(
    logits: &[F],
    steps: usize,
    num_classes: usize,
    target: usize,
) -> (F, Vec<F>) {
    let inv_t = F::one() / F::lit(steps as f64);
    let mut total = F::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for t in 0..steps {
        let probs = softmax(&logits[t * num_classes..(t + 1) * num_classes]);
        total += -probs[target].max(F::min_positive_value()).ln();
        for (k, p) in probs.into_iter().enumerate() {
            let y = if k == target { F::one() } else { F::zero() };
            grad.push((p - y) * inv_t);
        }
    }
    (total * inv_t, grad)
}

/// Batch loss: the mean of per-example rate losses.
pub fn batch_rate_ce<F: Real>(outputs: &[(StepOutput<F>, usize)]) -> F {
    let n = F::lit(outputs.len().max(1) as f64);
    outputs
        .iter()
        .map(|(o, y)| loss_rate_ce(o, *y))
        .fold(F::zero(), |a, b| a + b)
        / n
}
