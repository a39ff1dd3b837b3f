//! TextCNN over embedded sequences, in its tailored (SNN-convertible) and
//! original forms, with hand-written forward and backward passes.

mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::{dot, Real, Tensor};
use crate::rng::{self, Purpose};

pub use train::{ann_accuracy, cross_entropy, softmax, train_ann, AnnTrainOutcome, EpochLoss};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Pooling::Avg),
            "max" => Ok(Pooling::Max),
            _ => Err(Error::invalid(format!("unknown pooling `{s}`"))),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::invalid(format!("unknown activation `{s}`"))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Avg => "avg",
            Pooling::Max => "max",
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl Activation {
    fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => x.max(F::zero()),
            Activation::Sigmoid => F::one() / (F::one() + (-x).exp()),
        }
    }

    /// Derivative given the pre-activation and the activation output.
    fn grad<F: Real>(self, pre: F, out: F) -> F {
        match self {
            Activation::Relu => {
                if pre > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => out * (F::one() - out),
        }
    }
}

/// Architecture of the convolutional classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    /// Feature maps per filter width.
    pub feature_maps: usize,
    pub num_classes: usize,
    /// Output neurons per class; class score is the sum over the group.
    pub neurons_per_class: usize,
    pub pooling: Pooling,
    pub activation: Activation,
    pub use_bias: bool,
}

impl CnnConfig {
    /// Average pooling, ReLU, no biases.
    pub fn tailored(embed_dim: usize, num_classes: usize) -> Self {
        CnnConfig {
            embed_dim,
            filter_widths: vec![3, 4, 5],
            feature_maps: 100,
            num_classes,
            neurons_per_class: 10,
            pooling: Pooling::Avg,
            activation: Activation::Relu,
            use_bias: false,
        }
    }

    /// Baseline TextCNN: max pooling, ReLU, with biases.
    pub fn original(embed_dim: usize, num_classes: usize) -> Self {
        CnnConfig {
            pooling: Pooling::Max,
            use_bias: true,
            ..Self::tailored(embed_dim, num_classes)
        }
    }

    pub fn is_tailored(&self) -> bool {
        self.pooling == Pooling::Avg && self.activation == Activation::Relu && !self.use_bias
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.feature_maps == 0 || self.num_classes == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.neurons_per_class == 0 {
            return Err(Error::invalid("neurons per class must be at least 1"));
        }
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return Err(Error::invalid("filter widths must be non-empty and positive"));
        }
        Ok(())
    }

    pub fn max_width(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(0)
    }

    /// Length of the concatenated pooled vector.
    pub fn pooled_len(&self) -> usize {
        self.feature_maps * self.filter_widths.len()
    }

    pub fn out_units(&self) -> usize {
        self.neurons_per_class * self.num_classes
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len < self.max_width() {
            return Err(Error::invalid(format!(
                "sequence length {len} is shorter than the widest filter ({})",
                self.max_width()
            )));
        }
        Ok(())
    }
}

/// Weights shared by the ANN and the converted SNN.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams<F> {
    /// One `F × w × D` tensor per filter width.
    pub conv: Vec<Tensor<F>>,
    pub conv_bias: Option<Vec<Tensor<F>>>,
    /// `(h·K) × (F·|widths|)`.
    pub fc: Tensor<F>,
    pub fc_bias: Option<Tensor<F>>,
}

impl<F: Real> CnnParams<F> {
    pub fn zeros(config: &CnnConfig) -> Self {
        let conv = config
            .filter_widths
            .iter()
            .map(|&w| Tensor::zeros(&[config.feature_maps, w, config.embed_dim]))
            .collect();
        let conv_bias = config.use_bias.then(|| {
            config
                .filter_widths
                .iter()
                .map(|_| Tensor::zeros(&[config.feature_maps]))
                .collect()
        });
        CnnParams {
            conv,
            conv_bias,
            fc: Tensor::zeros(&[config.out_units(), config.pooled_len()]),
            fc_bias: config.use_bias.then(|| Tensor::zeros(&[config.out_units()])),
        }
    }

    /// Glorot-uniform weights from a seeded stream; biases start at zero.
    pub fn init(config: &CnnConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = rng::stream(seed, Purpose::Init, &[]);
        let fm = config.feature_maps as f64;
        let d = config.embed_dim as f64;
        for (t, &w) in p.conv.iter_mut().zip(&config.filter_widths) {
            let w = w as f64;
            glorot(t, w * d, w * fm, &mut rng);
        }
        glorot(
            &mut p.fc,
            config.pooled_len() as f64,
            config.out_units() as f64,
            &mut rng,
        );
        p
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor<F>| Tensor::zeros(&t.shape);
        CnnParams {
            conv: self.conv.iter().map(z).collect(),
            conv_bias: self.conv_bias.as_ref().map(|b| b.iter().map(z).collect()),
            fc: z(&self.fc),
            fc_bias: self.fc_bias.as_ref().map(z),
        }
    }

    pub fn has_bias(&self) -> bool {
        self.conv_bias.is_some() || self.fc_bias.is_some()
    }

    /// Every tensor with its checkpoint name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        for (i, t) in self.conv.iter().enumerate() {
            out.push((format!("conv.{i}.weight"), t));
        }
        if let Some(bias) = &self.conv_bias {
            for (i, t) in bias.iter().enumerate() {
                out.push((format!("conv.{i}.bias"), t));
            }
        }
        out.push(("fc.weight".to_string(), &self.fc));
        if let Some(b) = &self.fc_bias {
            out.push(("fc.bias".to_string(), b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = self.conv.iter_mut().collect();
        if let Some(bias) = &mut self.conv_bias {
            out.extend(bias.iter_mut());
        }
        out.push(&mut self.fc);
        if let Some(b) = &mut self.fc_bias {
            out.push(b);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        let theirs = other.named();
        for (mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine.add_assign(t);
        }
    }

    pub fn scale(&mut self, factor: F) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }

    pub fn cast<G: Real>(&self) -> CnnParams<G> {
        CnnParams {
            conv: self.conv.iter().map(Tensor::cast).collect(),
            conv_bias: self
                .conv_bias
                .as_ref()
                .map(|b| b.iter().map(Tensor::cast).collect()),
            fc: self.fc.cast(),
            fc_bias: self.fc_bias.as_ref().map(Tensor::cast),
        }
    }

    /// Checks tensor shapes against `config`.
    pub fn check(&self, config: &CnnConfig) -> Result<()> {
        let expected = CnnParams::<F>::zeros(config);
        let mine = self.named();
        let theirs = expected.named();
        if mine.len() != theirs.len() {
            return Err(Error::ShapeMismatch(
                "parameter set does not match the configuration".into(),
            ));
        }
        for ((n1, a), (_, b)) in mine.iter().zip(&theirs) {
            if a.shape != b.shape {
                return Err(Error::ShapeMismatch(format!(
                    "{n1}: expected {:?}, found {:?}",
                    b.shape, a.shape
                )));
            }
        }
        Ok(())
    }
}

fn glorot<F: Real>(t: &mut Tensor<F>, fan_in: f64, fan_out: f64, rng: &mut impl Rng) {
    let limit = (6.0 / (fan_in + fan_out)).sqrt();
    for x in &mut t.data {
        *x = F::lit(rng.random_range(-limit..=limit));
    }
}

/// Valid (unpadded) 1-D convolution over time. `x` is `len × dim`; `out`
/// receives `F × (len − w + 1)` values.
pub(crate) fn conv1d<F: Real>(weight: &Tensor<F>, x: &[F], len: usize, out: &mut [F]) {
    let (fm, w, dim) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    let positions = len + 1 - w;
    let span = w * dim;
    for f in 0..fm {
        let kernel = &weight.data[f * span..(f + 1) * span];
        for p in 0..positions {
            out[f * positions + p] = dot(kernel, &x[p * dim..p * dim + span]);
        }
    }
}

/// Accumulates the weight gradient (and optionally the input gradient) of
/// [`conv1d`] given the output gradient `d_out`.
pub(crate) fn conv1d_backward<F: Real>(
    weight: &Tensor<F>,
    x: &[F],
    len: usize,
    d_out: &[F],
    d_weight: &mut Tensor<F>,
    mut d_x: Option<&mut [F]>,
) {
    let (fm, w, dim) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    let positions = len + 1 - w;
    let span = w * dim;
    for f in 0..fm {
        let kernel = &weight.data[f * span..(f + 1) * span];
        let dk = &mut d_weight.data[f * span..(f + 1) * span];
        for p in 0..positions {
            let g = d_out[f * positions + p];
            if g == F::zero() {
                continue;
            }
            let window = &x[p * dim..p * dim + span];
            for (a, &b) in dk.iter_mut().zip(window) {
                *a += g * b;
            }
            if let Some(dx) = d_x.as_deref_mut() {
                for (a, &k) in dx[p * dim..p * dim + span].iter_mut().zip(kernel) {
                    *a += g * k;
                }
            }
        }
    }
}

/// Intermediate values kept from [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    pub len: usize,
    pub x: Vec<F>,
    /// Per filter width, `F × P` pre-activations.
    pub pre: Vec<Vec<F>>,
    pub act: Vec<Vec<F>>,
    /// Per filter width, the max-pool argmax of each feature map.
    pub argmax: Vec<Vec<usize>>,
    pub pooled: Vec<F>,
    /// Dropout multipliers on the pooled vector (all ones at inference).
    pub mask: Vec<F>,
    pub units: Vec<F>,
    pub scores: Vec<F>,
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1−rate)`.
pub fn dropout_mask<F: Real>(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<F> {
    if rate <= 0.0 {
        return vec![F::one(); n];
    }
    let keep = F::lit(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Forward pass over an `len × D` embedded sequence. In training mode a fresh
/// dropout mask is drawn from `rng`; otherwise the mask is all ones.
pub fn forward<F: Real>(
    params: &CnnParams<F>,
    config: &CnnConfig,
    x: &[F],
    len: usize,
    train_mode: bool,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<F>, ForwardCache<F>)> {
    let mask = if train_mode {
        dropout_mask(config.pooled_len(), dropout_rate, rng)
    } else {
        vec![F::one(); config.pooled_len()]
    };
    forward_with_mask(params, config, x, len, mask)
}

pub fn forward_with_mask<F: Real>(
    params: &CnnParams<F>,
    config: &CnnConfig,
    x: &[F],
    len: usize,
    mask: Vec<F>,
) -> Result<(Vec<F>, ForwardCache<F>)> {
    config.check_len(len)?;
    if x.len() != len * config.embed_dim {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, expected {len}×{}",
            x.len(),
            config.embed_dim
        )));
    }
    let fm = config.feature_maps;
    let mut pre = Vec::with_capacity(config.filter_widths.len());
    let mut act = Vec::with_capacity(config.filter_widths.len());
    let mut argmax = Vec::with_capacity(config.filter_widths.len());
    let mut pooled = Vec::with_capacity(config.pooled_len());

    for (b, &w) in config.filter_widths.iter().enumerate() {
        let positions = len + 1 - w;
        let mut z = vec![F::zero(); fm * positions];
        conv1d(&params.conv[b], x, len, &mut z);
        if let Some(bias) = &params.conv_bias {
            for f in 0..fm {
                let bf = bias[b].data[f];
                z[f * positions..(f + 1) * positions]
                    .iter_mut()
                    .for_each(|v| *v += bf);
            }
        }
        let a: Vec<F> = z.iter().map(|&v| config.activation.apply(v)).collect();
        let mut am = vec![0usize; fm];
        for f in 0..fm {
            let row = &a[f * positions..(f + 1) * positions];
            let value = match config.pooling {
                Pooling::Avg => row.iter().copied().sum::<F>() / F::lit(positions as f64),
                Pooling::Max => {
                    let i = argmax_first(row);
                    am[f] = i;
                    row[i]
                }
            };
            pooled.push(value);
        }
        pre.push(z);
        act.push(a);
        argmax.push(am);
    }

    let m = config.pooled_len();
    let dropped: Vec<F> = pooled.iter().zip(&mask).map(|(&p, &k)| p * k).collect();
    let mut units = vec![F::zero(); config.out_units()];
    for (o, u) in units.iter_mut().enumerate() {
        *u = dot(&params.fc.data[o * m..(o + 1) * m], &dropped);
        if let Some(b) = &params.fc_bias {
            *u += b.data[o];
        }
    }
    let scores = group_sums(&units, config.neurons_per_class);
    let cache = ForwardCache {
        len,
        x: x.to_vec(),
        pre,
        act,
        argmax,
        pooled,
        mask,
        units,
        scores: scores.clone(),
    };
    Ok((scores, cache))
}

/// Sums consecutive groups of `h` units into one score per class.
pub(crate) fn group_sums<F: Real>(units: &[F], h: usize) -> Vec<F> {
    units.chunks(h).map(|g| g.iter().copied().sum()).collect()
}

/// Index of the first maximal element.
pub fn argmax_first<F: PartialOrd + Copy>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Reverse of [`forward`]. Returns parameter gradients and the gradient with
/// respect to the `len × D` input.
pub fn backward<F: Real>(
    cache: &ForwardCache<F>,
    params: &CnnParams<F>,
    config: &CnnConfig,
    d_scores: &[F],
) -> Result<(CnnParams<F>, Vec<F>)> {
    if d_scores.len() != config.num_classes || cache.scores.len() != config.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "expected {} class gradients, got {}",
            config.num_classes,
            d_scores.len()
        )));
    }
    let h = config.neurons_per_class;
    let m = config.pooled_len();
    let fm = config.feature_maps;
    let len = cache.len;
    let mut grads = params.zeros_like();
    let mut dx = vec![F::zero(); cache.x.len()];

    let d_units: Vec<F> = (0..config.out_units()).map(|o| d_scores[o / h]).collect();
    let mut d_pooled = vec![F::zero(); m];
    for (o, &g) in d_units.iter().enumerate() {
        if g == F::zero() {
            continue;
        }
        let row = &params.fc.data[o * m..(o + 1) * m];
        let grow = &mut grads.fc.data[o * m..(o + 1) * m];
        for j in 0..m {
            grow[j] += g * cache.pooled[j] * cache.mask[j];
            d_pooled[j] += g * row[j];
        }
    }
    if let Some(b) = &mut grads.fc_bias {
        b.data.copy_from_slice(&d_units);
    }
    for (j, d) in d_pooled.iter_mut().enumerate() {
        *d *= cache.mask[j];
    }

    for (b, &w) in config.filter_widths.iter().enumerate() {
        let positions = len + 1 - w;
        let mut d_pre = vec![F::zero(); fm * positions];
        for f in 0..fm {
            let g = d_pooled[b * fm + f];
            if g == F::zero() {
                continue;
            }
            let at = |p: usize| f * positions + p;
            match config.pooling {
                Pooling::Avg => {
                    let share = g / F::lit(positions as f64);
                    for p in 0..positions {
                        d_pre[at(p)] = share;
                    }
                }
                Pooling::Max => d_pre[at(cache.argmax[b][f])] = g,
            }
            for p in 0..positions {
                let i = at(p);
                d_pre[i] *= config.activation.grad(cache.pre[b][i], cache.act[b][i]);
            }
        }
        if let Some(bias) = &mut grads.conv_bias {
            for f in 0..fm {
                bias[b].data[f] = d_pre[f * positions..(f + 1) * positions]
                    .iter()
                    .copied()
                    .sum();
            }
        }
        conv1d_backward(
            &params.conv[b],
            &cache.x,
            len,
            &d_pre,
            &mut grads.conv[b],
            Some(&mut dx),
        );
    }
    Ok((grads, dx))
}

/// Argmax of the class scores, ties to the lowest index.
pub fn predict<F: Real>(params: &CnnParams<F>, config: &CnnConfig, x: &[F], len: usize) -> Result<usize> {
    let (scores, _) = forward_with_mask(params, config, x, len, vec![F::one(); config.pooled_len()])?;
    Ok(argmax_first(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(width: usize, fm: usize, dim: usize, k: usize, h: usize) -> CnnConfig {
        CnnConfig {
            embed_dim: dim,
            filter_widths: vec![width],
            feature_maps: fm,
            num_classes: k,
            neurons_per_class: h,
            ..CnnConfig::tailored(dim, k)
        }
    }

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn zero_params_give_zero_scores() {
        let config = CnnConfig {
            feature_maps: 4,
            ..CnnConfig::tailored(3, 2)
        };
        let p = CnnParams::<f64>::zeros(&config);
        let x = vec![0.7; 6 * 3];
        let (s, _) = forward_with_mask(&p, &config, &x, 6, ones(config.pooled_len())).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
        let probs = softmax(&s);
        assert_eq!(probs, vec![0.5, 0.5]);
        assert_eq!(predict(&p, &config, &x, 6).unwrap(), 0);
    }

    #[test]
    fn hand_convolution() {
        let config = tiny(2, 1, 1, 1, 1);
        let mut p = CnnParams::<f64>::zeros(&config);
        p.conv[0].data = vec![1.0, 1.0];
        p.fc.data = vec![1.0];
        let (s, cache) = forward_with_mask(&p, &config, &[1.0, 0.0, 1.0], 3, ones(1)).unwrap();
        assert_eq!(cache.pre[0], vec![1.0, 1.0]);
        assert_eq!(cache.pooled, vec![1.0]);
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn rejects_short_sequences() {
        let config = CnnConfig::tailored(2, 2);
        let p = CnnParams::<f64>::zeros(&config);
        assert!(forward_with_mask(&p, &config, &[0.0; 8], 4, ones(300)).is_err());
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let config = CnnConfig {
            feature_maps: 3,
            ..CnnConfig::tailored(2, 2)
        };
        let p = CnnParams::<f32>::init(&config, 1);
        let x: Vec<f32> = (0..12).map(|i| (i as f32 * 0.37).fract()).collect();
        let mut rng = rng::stream(0, Purpose::Dropout, &[]);
        let (a, ca) = forward(&p, &config, &x, 6, false, 0.5, &mut rng).unwrap();
        let (b, _) = forward(&p, &config, &x, 6, false, 0.5, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(ca.mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let config = CnnConfig {
            feature_maps: 2,
            ..CnnConfig::original(2, 2)
        };
        let p = CnnParams::<f64>::init(&config, 4).cast::<f64>();
        let x: Vec<f64> = (0..14).map(|i| (i as f64 * 0.31).fract()).collect();
        let (_, cache) = forward_with_mask(&p, &config, &x, 7, ones(config.pooled_len())).unwrap();
        let (g, dx) = backward(&cache, &p, &config, &[0.0, 0.0]).unwrap();
        assert!(g.named().iter().all(|(_, t)| t.data.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn avg_pool_spreads_gradient_evenly() {
        let config = tiny(1, 1, 1, 1, 1);
        let mut p = CnnParams::<f64>::zeros(&config);
        p.conv[0].data = vec![0.5];
        p.fc.data = vec![2.0];
        let x = [0.2, 0.4, 0.6, 0.8];
        let (_, cache) = forward_with_mask(&p, &config, &x, 4, ones(1)).unwrap();
        let (_, dx) = backward(&cache, &p, &config, &[1.0]).unwrap();
        for v in &dx {
            assert!((v - 0.25).abs() < 1e-12, "{dx:?}");
        }
    }

    #[test]
    fn max_pool_routes_to_first_maximum() {
        let config = CnnConfig {
            pooling: Pooling::Max,
            ..tiny(1, 1, 1, 1, 1)
        };
        let mut p = CnnParams::<f64>::zeros(&config);
        p.conv[0].data = vec![1.0];
        p.fc.data = vec![1.0];
        let x = [0.3, 0.9, 0.9, 0.1];
        let (_, cache) = forward_with_mask(&p, &config, &x, 4, ones(1)).unwrap();
        let (_, dx) = backward(&cache, &p, &config, &[1.0]).unwrap();
        assert_eq!(dx, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bias_free_zero_input_scores_zero() {
        let config = CnnConfig {
            feature_maps: 5,
            ..CnnConfig::tailored(4, 3)
        };
        let p = CnnParams::<f32>::init(&config, 9);
        let (s, _) = forward_with_mask(&p, &config, &[0.0; 40], 10, vec![1.0; 15]).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    fn relu_avg_vs_avg_relu(x: &[f64], w: &[f64]) -> (f64, f64) {
        let config = tiny(1, 1, 1, 1, 1);
        let mut p = CnnParams::<f64>::zeros(&config);
        p.conv[0].data = w.to_vec();
        p.fc.data = vec![1.0];
        let (s, cache) = forward_with_mask(&p, &config, x, x.len(), ones(1)).unwrap();
        let avg_pre = cache.pre[0].iter().sum::<f64>() / cache.pre[0].len() as f64;
        (s[0], avg_pre.max(0.0))
    }

    #[test]
    fn relu_is_applied_before_pooling() {
        let (a, b) = relu_avg_vs_avg_relu(&[0.2, 0.5, 0.9], &[0.7]);
        assert!((a - b).abs() < 1e-12);
        let (a, b) = relu_avg_vs_avg_relu(&[0.2, -0.5, 0.9], &[1.0]);
        assert!((a - 11.0 / 30.0).abs() < 1e-12);
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn glorot_bounds() {
        let config = CnnConfig::tailored(8, 2);
        let p = CnnParams::<f32>::init(&config, 0);
        let lim = (6.0f64 / (3.0 * 8.0 + 3.0 * 100.0)).sqrt() as f32;
        assert!(p.conv[0].data.iter().all(|v| v.abs() <= lim));
        assert!(p.fc_bias.is_none() && p.conv_bias.is_none());
        assert_eq!(p, CnnParams::<f32>::init(&config, 0));
    }
}
