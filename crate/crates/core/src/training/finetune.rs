use rayon::prelude::*;

use super::{batches, bptt, epoch_order, BpttOptions, ResetGrad, SurrogateConfig, TrainConfig};
use crate::ann::{dropout_mask, CnnConfig, CnnParams};
use crate::corpus::Dataset;
use crate::embedding::EmbeddingTable;
use crate::encoder::{encode_keyed, EncodeKey};
use crate::error::{Error, Result};
use crate::eval::evaluate_snn;
use crate::optim::Adam;
use crate::rng::{self, Purpose};
use crate::snn::{readout, simulate, LifConfig, SnnModel, SpikeFn};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Weights from the epoch with the best validation accuracy, where epoch 0
    /// is the starting point (the last epoch when no validation set is given).
    pub model: SnnModel,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

const SNN_PHASE: u64 = 1;

/// Surrogate-gradient training of a spiking model. Every presentation gets a
/// fresh Poisson encoding and a dropout mask held fixed across its time steps.
/// The embedding table is read-only.
pub fn finetune(
    model: &SnnModel,
    train: &Dataset,
    table: &EmbeddingTable,
    val: Option<&Dataset>,
    config: &TrainConfig,
    surrogate: &SurrogateConfig,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    model.lif.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let opts = BpttOptions {
        surrogate: *surrogate,
        reset: ResetGrad::Detached,
    };
    let steps = model.lif.time_steps;
    let m = model.config.pooled_len();
    let mut current = model.clone();
    let mut opt = Adam::new(config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let validate = |m: &SnnModel| -> Result<Option<f64>> {
        match val {
            Some(v) if !v.is_empty() => Ok(Some(
                evaluate_snn(m, v, table, 1, config.seed, Purpose::Validate)?.mean,
            )),
            _ => Ok(None),
        }
    };
    // The starting weights compete too, so fine-tuning never selects a model
    // that validates worse than the one it was given.
    let mut best: Option<(f64, usize, SnnModel)> =
        validate(model)?.map(|acc| (acc, 0, model.clone()));

    for epoch in 0..config.epochs {
        let order = epoch_order(train.len(), config.seed, SNN_PHASE, epoch);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (b, batch) in batches(&order, config.batch_size).enumerate() {
            let results: Vec<Result<(f32, bool, CnnParams<f32>)>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train.examples[i];
                    let x = table.embed(&ex.tokens);
                    let key = EncodeKey::training(config.seed, epoch, b, i);
                    let spikes = encode_keyed(&x, ex.tokens.len(), table.dim, steps, key)?;
                    let mut mask_rng = rng::stream(
                        config.seed,
                        Purpose::Dropout,
                        &[SNN_PHASE, epoch as u64, b as u64, i as u64],
                    );
                    let mask: Vec<f32> = dropout_mask(m, config.dropout_rate, &mut mask_rng);
                    let out = simulate(&current, &spikes, Some(&mask), SpikeFn::Heaviside, true)?;
                    let hit = readout(&out) == ex.label;
                    let (loss, grads) = bptt(&current, &spikes, &out, Some(&mask), ex.label, &opts)?;
                    Ok((loss, hit, grads))
                })
                .collect();

            let mut total = current.params.zeros_like();
            for (&i, r) in batch.iter().zip(results) {
                let (loss, hit, grads) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "spiking loss at epoch {}, batch {b}, example {i}",
                        epoch + 1
                    )));
                }
                loss_sum += loss as f64;
                correct += hit as usize;
                total.add_assign(&grads);
            }
            total.scale(1.0 / batch.len() as f32);
            let grads = total.named().into_iter().map(|(_, t)| t).collect();
            opt.step(current.params.tensors_mut(), grads);
            if !current.params.all_finite() {
                return Err(Error::NonFinite(format!("weights after epoch {} batch {b}", epoch + 1)));
            }
        }

        let val_acc = validate(&current)?;
        history.push(EpochMetrics {
            epoch: epoch + 1,
            loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_acc,
        });
        let score = val_acc.unwrap_or(epoch as f64);
        if best.as_ref().is_none_or(|(s, _, _)| score >= *s) {
            best = Some((score, epoch + 1, current.clone()));
        }
    }

    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (current, 0),
    };
    Ok(FinetuneOutcome {
        model,
        best_epoch,
        history,
    })
}

/// The fine-tuning loop started from freshly initialized weights instead of
/// converted ones.
pub fn train_direct(
    arch: &CnnConfig,
    lif: LifConfig,
    train: &Dataset,
    table: &EmbeddingTable,
    val: Option<&Dataset>,
    config: &TrainConfig,
    surrogate: &SurrogateConfig,
) -> Result<FinetuneOutcome> {
    arch.validate()?;
    if !arch.is_tailored() {
        return Err(Error::NotConvertible(
            "spiking networks need avg pooling, relu and no biases".into(),
        ));
    }
    let model = SnnModel {
        config: arch.clone(),
        params: CnnParams::init(arch, config.seed),
        lif,
    };
    finetune(&model, train, table, val, config, surrogate)
}
