use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{argmax_first, backward, dropout_mask, forward_with_mask, CnnConfig, CnnParams};
use crate::corpus::{Dataset, PAD_ID};
use crate::embedding::{clip01, EmbeddingTable};
use crate::error::{Error, Result};
use crate::optim::{Adam, RowAdam};
use crate::real::Real;
use crate::rng::{self, Purpose};
use crate::training::{batches, epoch_order, TrainConfig};

/// Numerically stable softmax.
pub fn softmax<F: Real>(scores: &[F]) -> Vec<F> {
    let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
    let exp: Vec<F> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: F = exp.iter().copied().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy of `target`, and its gradient with respect to the scores.
pub fn cross_entropy<F: Real>(scores: &[F], target: usize) -> (F, Vec<F>) {
    let probs = softmax(scores);
    let loss = -probs[target].max(F::min_positive_value()).ln();
    let mut grad = probs;
    grad[target] -= F::one();
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone)]
pub struct AnnTrainOutcome {
    pub params: CnnParams<f32>,
    pub table: EmbeddingTable,
    pub history: Vec<EpochLoss>,
}

struct ExampleGrad {
    loss: f32,
    correct: bool,
    grads: CnnParams<f32>,
    d_x: Vec<f32>,
}

const ANN_PHASE: u64 = 0;

/// Mini-batch Adam on softmax cross-entropy. Trainable embeddings receive
/// row-sparse updates and are clipped back into `[0, 1]` after every step.
pub fn train_ann(
    config: &CnnConfig,
    params_init: CnnParams<f32>,
    train: &Dataset,
    table: &EmbeddingTable,
    opts: &TrainConfig,
) -> Result<AnnTrainOutcome> {
    opts.validate()?;
    config.validate()?;
    params_init.check(config)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let len = train.examples[0].tokens.len();
    config.check_len(len)?;

    let mut params = params_init;
    let mut table = table.clone();
    let mut opt = Adam::new(opts.lr);
    let mut emb_opt = RowAdam::new(opts.lr, table.rows, table.dim);
    let mut history = Vec::with_capacity(opts.epochs);
    let dim = table.dim;

    for epoch in 0..opts.epochs {
        let order = epoch_order(train.len(), opts.seed, ANN_PHASE, epoch);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (b, batch) in batches(&order, opts.batch_size).enumerate() {
            let results: Vec<Result<ExampleGrad>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train.examples[i];
                    let x = table.embed(&ex.tokens);
                    let mut rng = rng::stream(
                        opts.seed,
                        Purpose::Dropout,
                        &[ANN_PHASE, epoch as u64, b as u64, i as u64],
                    );
                    let mask = dropout_mask(config.pooled_len(), opts.dropout_rate, &mut rng);
                    let (scores, cache) = forward_with_mask(&params, config, &x, len, mask)?;
                    let (loss, d_scores) = cross_entropy(&scores, ex.label);
                    let (grads, d_x) = backward(&cache, &params, config, &d_scores)?;
                    Ok(ExampleGrad {
                        loss,
                        correct: argmax_first(&scores) == ex.label,
                        grads,
                        d_x,
                    })
                })
                .collect();

            let mut total = params.zeros_like();
            let mut row_grads: BTreeMap<u32, Vec<f32>> = BTreeMap::new();
            for (&i, r) in batch.iter().zip(results) {
                let r = r?;
                if !r.loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "ANN loss at epoch {epoch}, batch {b}, example {i}"
                    )));
                }
                loss_sum += r.loss as f64;
                correct += r.correct as usize;
                total.add_assign(&r.grads);
                if table.trainable {
                    for (pos, &id) in train.examples[i].tokens.iter().enumerate() {
                        if id == PAD_ID {
                            continue;
                        }
                        let g = row_grads.entry(id).or_insert_with(|| vec![0.0; dim]);
                        for (a, &d) in g.iter_mut().zip(&r.d_x[pos * dim..(pos + 1) * dim]) {
                            *a += d;
                        }
                    }
                }
            }
            let inv = 1.0 / batch.len() as f32;
            total.scale(inv);
            let grads = total.named().into_iter().map(|(_, t)| t).collect();
            opt.step(params.tensors_mut(), grads);

            if table.trainable {
                let rows: Vec<(u32, Vec<f32>)> = row_grads
                    .into_iter()
                    .map(|(id, g)| (id, g.into_iter().map(|v| v * inv).collect()))
                    .collect();
                emb_opt.step(&mut table.data, &rows);
                for (id, _) in &rows {
                    clip01(table.row_mut(*id));
                }
            }
        }
        history.push(EpochLoss {
            epoch: epoch + 1,
            loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
        });
    }
    Ok(AnnTrainOutcome {
        params,
        table,
        history,
    })
}

/// Eval-mode accuracy of the ANN on an encoded dataset.
pub fn ann_accuracy(
    params: &CnnParams<f32>,
    config: &CnnConfig,
    data: &Dataset,
    table: &EmbeddingTable,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits: Result<Vec<bool>> = data
        .examples
        .par_iter()
        .map(|ex| {
            let x = table.embed(&ex.tokens);
            Ok(super::predict(params, config, &x, ex.tokens.len())? == ex.label)
        })
        .collect();
    Ok(hits?.into_iter().filter(|&h| h).count() as f64 / data.len() as f64)
}
