//! Weight-normalization baselines applied after conversion.

use rayon::prelude::*;

use super::model::SnnModel;
use crate::ann::{forward_with_mask, CnnParams};
use crate::corpus::Dataset;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::real::Tensor;

/// Largest total positive weight feeding any one neuron, i.e. the highest
/// pre-activation reachable when every input sits at 1. `weights` holds one
/// row of `fan_in` values per neuron.
pub fn max_positive_input(weights: &[f32], fan_in: usize) -> f64 {
    weights
        .chunks(fan_in)
        .map(|row| row.iter().filter(|&&w| w > 0.0).map(|&w| w as f64).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scale_all(tensors: &mut [&mut Tensor<f32>], factor: f64) {
    for t in tensors.iter_mut() {
        for w in &mut t.data {
            *w = (*w as f64 * factor) as f32;
        }
    }
}

/// Model-based normalization. Each layer's weights are divided by
/// `max(λ, 1)` where `λ` is its maximum achievable positive input. The conv
/// banks form one layer. Returns the model and the per-layer `λ` values.
pub fn normalize_model_based(model: &SnnModel) -> (SnnModel, Vec<f64>) {
    let mut out = model.clone();
    let conv_lambda = model
        .params
        .conv
        .iter()
        .map(|t| max_positive_input(&t.data, t.shape[1] * t.shape[2]))
        .fold(0.0, f64::max);
    let m = model.config.pooled_len();
    let fc_lambda = max_positive_input(&model.params.fc.data, m);

    if conv_lambda > 1.0 {
        let mut banks: Vec<&mut Tensor<f32>> = out.params.conv.iter_mut().collect();
        scale_all(&mut banks, 1.0 / conv_lambda);
    }
    if fc_lambda > 1.0 {
        scale_all(&mut [&mut out.params.fc], 1.0 / fc_lambda);
    }
    (out, vec![conv_lambda, fc_lambda])
}

/// Maximum conv activation (after ReLU) and maximum readout unit value seen
/// over a dataset.
pub fn record_max_activations(
    params: &CnnParams<f32>,
    model: &SnnModel,
    data: &Dataset,
    table: &EmbeddingTable,
) -> Result<[f64; 2]> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ones = vec![1.0f32; model.config.pooled_len()];
    let per_example: Result<Vec<[f64; 2]>> = data
        .examples
        .par_iter()
        .map(|ex| {
            let x = table.embed(&ex.tokens);
            let (_, cache) = forward_with_mask(params, &model.config, &x, ex.tokens.len(), ones.clone())?;
            let conv = cache
                .act
                .iter()
                .flatten()
                .fold(0.0f64, |a, &v| a.max(v as f64));
            let fc = cache.units.iter().fold(0.0f64, |a, &v| a.max(v as f64));
            Ok([conv, fc])
        })
        .collect();
    Ok(per_example?
        .into_iter()
        .fold([0.0, 0.0], |a, b| [a[0].max(b[0]), a[1].max(b[1])]))
}

/// Data-based normalization: record each layer's maximum ANN activation
/// `λ_l` over the training set (floored at 1) and rescale layer `l` by
/// `λ_{l−1} / λ_l`, with `λ_0 = 1`. Returns the model and the floored `λ`s.
pub fn normalize_data_based(
    model: &SnnModel,
    ann: &CnnParams<f32>,
    train: &Dataset,
    table: &EmbeddingTable,
) -> Result<(SnnModel, Vec<f64>)> {
    ann.check(&model.config)?;
    let raw = record_max_activations(ann, model, train, table)?;
    let lambdas: Vec<f64> = raw.iter().map(|&l| l.max(1.0)).collect();
    let mut out = model.clone();
    let mut banks: Vec<&mut Tensor<f32>> = out.params.conv.iter_mut().collect();
    scale_all(&mut banks, 1.0 / lambdas[0]);
    scale_all(&mut [&mut out.params.fc], lambdas[0] / lambdas[1]);
    Ok((out, lambdas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::CnnConfig;
    use crate::corpus::{TokenizeMode, Vocabulary};
    use crate::embedding::EmbeddingStats;
    use crate::snn::{convert, LifConfig};

    #[test]
    fn positive_sum_of_single_unit() {
        let w = [0.5f32, -0.3, 0.8];
        let lambda = max_positive_input(&w, 3);
        assert!((lambda - 1.3).abs() < 1e-6);
        let scaled: Vec<f32> = w.iter().map(|&x| (x as f64 / lambda) as f32).collect();
        assert!((scaled[0] - 0.5 / 1.3).abs() < 1e-6);
        assert!((scaled[1] + 0.3 / 1.3).abs() < 1e-6);
        assert!((scaled[2] - 0.8 / 1.3).abs() < 1e-6);
    }

    fn one_filter_model(conv: Vec<f32>, fc: Vec<f32>) -> SnnModel {
        let config = CnnConfig {
            embed_dim: 1,
            filter_widths: vec![1],
            feature_maps: 1,
            num_classes: 1,
            neurons_per_class: 1,
            ..CnnConfig::tailored(1, 1)
        };
        let mut p = CnnParams::<f32>::zeros(&config);
        p.conv[0].data = conv;
        p.fc.data = fc;
        convert(&config, &p, LifConfig::default()).unwrap()
    }

    #[test]
    fn model_based_leaves_small_or_negative_layers() {
        let m = one_filter_model(vec![-0.5], vec![0.7]);
        let (n, lambdas) = normalize_model_based(&m);
        assert_eq!(n, m);
        assert_eq!(lambdas, vec![0.0, 0.7f32 as f64]);
    }

    #[test]
    fn model_based_scales_large_layers() {
        let m = one_filter_model(vec![2.0], vec![4.0]);
        let (n, _) = normalize_model_based(&m);
        assert_eq!(n.params.conv[0].data, vec![1.0]);
        assert_eq!(n.params.fc.data, vec![1.0]);
    }

    fn table_and_data(values: &[f32]) -> (EmbeddingTable, Dataset) {
        let words: Vec<String> = (0..values.len()).map(|i| format!("w{i}")).collect();
        let text: String = words.iter().map(|w| format!("0\t{w}\n")).collect();
        let mut data = Dataset::parse(&text, TokenizeMode::Whitespace).unwrap();
        let vocab = Vocabulary::from_tokens(words.iter().cloned(), 1);
        data.encode(&vocab, 1);
        let mut rows = vec![0.0f32, 0.0];
        rows.extend_from_slice(values);
        let table = EmbeddingTable {
            rows: rows.len(),
            dim: 1,
            data: rows,
            stats: EmbeddingStats { mean: 0.0, std: 1.0 },
            trainable: false,
        };
        (table, data)
    }

    #[test]
    fn data_based_halves_layer_with_max_activation_two() {
        let m = one_filter_model(vec![2.0], vec![0.5]);
        let (table, data) = table_and_data(&[0.25, 1.0, 0.5]);
        let raw = record_max_activations(&m.params, &m, &data, &table).unwrap();
        assert_eq!(raw, [2.0, 1.0]);
        let (n, lambdas) = normalize_data_based(&m, &m.params, &data, &table).unwrap();
        assert_eq!(lambdas, vec![2.0, 1.0]);
        assert_eq!(n.params.conv[0].data, vec![1.0]);
        assert_eq!(n.params.fc.data, vec![1.0]);
    }

    #[test]
    fn data_based_keeps_small_activations() {
        let m = one_filter_model(vec![0.8], vec![0.5]);
        let (table, data) = table_and_data(&[0.25, 1.0]);
        let (n, lambdas) = normalize_data_based(&m, &m.params, &data, &table).unwrap();
        assert_eq!(lambdas, vec![1.0, 1.0]);
        assert_eq!(n, m);
    }

    #[test]
    fn first_layer_max_is_homogeneous_in_input_scale() {
        let m = one_filter_model(vec![0.6], vec![0.5]);
        let (table, data) = table_and_data(&[0.2, 0.4, 0.3]);
        let base = record_max_activations(&m.params, &m, &data, &table).unwrap()[0];
        let mut scaled = table.clone();
        scaled.data.iter_mut().for_each(|v| *v *= 2.5);
        let s = record_max_activations(&m.params, &m, &data, &scaled).unwrap()[0];
        assert!((s - 2.5 * base).abs() < 1e-6);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let m = one_filter_model(vec![0.6], vec![0.5]);
        let (table, mut data) = table_and_data(&[0.2]);
        data.examples.clear();
        assert!(matches!(
            normalize_data_based(&m, &m.params, &data, &table),
            Err(Error::EmptyDataset)
        ));
    }
}
