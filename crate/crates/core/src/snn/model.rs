use super::lif::{LifConfig, LifState, SpikeFn};
use crate::ann::{argmax_first, conv1d, CnnConfig, CnnParams};
use crate::encoder::SpikeTrain;
use crate::error::{Error, Result};
use crate::real::{dot, Real};

/// Converted network: conv banks of LIF neurons, average pooling of their
/// spikes, and a fully-connected readout layer of LIF neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel<F = f32> {
    pub config: CnnConfig,
    pub params: CnnParams<F>,
    pub lif: LifConfig,
}

/// Copies a tailored ANN's weights into a spiking model.
pub fn convert(config: &CnnConfig, ann: &CnnParams<f32>, lif: LifConfig) -> Result<SnnModel> {
    lif.validate()?;
    config.validate()?;
    if ann.has_bias() || config.use_bias {
        return Err(Error::NotConvertible("network has bias terms".into()));
    }
    if !config.is_tailored() {
        return Err(Error::NotConvertible(format!(
            "network uses {} pooling with {} activation; expected avg pooling with relu",
            config.pooling, config.activation
        )));
    }
    ann.check(config)?;
    Ok(SnnModel {
        config: config.clone(),
        params: ann.clone(),
        lif,
    })
}

impl<F: Real> SnnModel<F> {
    pub fn cast<G: Real>(&self) -> SnnModel<G> {
        SnnModel {
            config: self.config.clone(),
            params: self.params.cast(),
            lif: self.lif,
        }
    }

    /// `(offset, positions)` of each conv bank inside the flattened conv layer.
    pub fn conv_layout(&self, len: usize) -> Vec<(usize, usize)> {
        let mut offset = 0;
        self.config
            .filter_widths
            .iter()
            .map(|&w| {
                let positions = len + 1 - w;
                let here = offset;
                offset += self.config.feature_maps * positions;
                (here, positions)
            })
            .collect()
    }

    pub fn conv_units(&self, len: usize) -> usize {
        self.conv_layout(len)
            .iter()
            .map(|&(_, p)| p * self.config.feature_maps)
            .sum()
    }
}

/// Per-step values recorded for backpropagation through time. Every field is
/// `steps × width`, row-major.
#[derive(Debug, Clone)]
pub struct Record<F> {
    pub conv_u: Vec<F>,
    pub conv_s: Vec<F>,
    /// Pooled conv spikes after the dropout multipliers.
    pub fc_in: Vec<F>,
    pub out_u: Vec<F>,
    pub out_s: Vec<F>,
}

/// Aggregate spiking activity of one simulated example.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Activity {
    pub steps: usize,
    pub input_spikes: f64,
    pub input_units: usize,
    pub conv_spikes: f64,
    pub conv_units: usize,
    /// Conv neurons with at least one spike in the run.
    pub conv_active: usize,
    /// Sum over steps of the pooled values entering the readout layer.
    pub pooled_sum: f64,
    pub pooled_units: usize,
    pub out_spikes: f64,
    pub out_units: usize,
    pub out_active: usize,
}

/// Result of one spiking forward run.
#[derive(Debug, Clone)]
pub struct StepOutput<F> {
    pub steps: usize,
    pub num_classes: usize,
    pub neurons_per_class: usize,
    /// Output-layer spikes, `steps × (h·K)`.
    pub out_spikes: Vec<F>,
    /// Per-step class logits: the sum of each class group's output spikes.
    pub class_logits: Vec<F>,
    pub activity: Activity,
    pub trace: Option<Record<F>>,
}

impl<F: Real> StepOutput<F> {
    pub fn logits_at(&self, t: usize) -> &[F] {
        &self.class_logits[t * self.num_classes..(t + 1) * self.num_classes]
    }

    /// Total spike count of each class group over the whole run.
    pub fn class_totals(&self) -> Vec<F> {
        let mut totals = vec![F::zero(); self.num_classes];
        for t in 0..self.steps {
            for (a, &b) in totals.iter_mut().zip(self.logits_at(t)) {
                *a += b;
            }
        }
        totals
    }
}

/// Heaviside simulation with all-ones dropout multipliers.
pub fn forward_spiking<F: Real>(
    model: &SnnModel<F>,
    spikes: &SpikeTrain,
    trace: bool,
) -> Result<StepOutput<F>> {
    simulate(model, spikes, None, SpikeFn::Heaviside, trace)
}

/// Runs the network for every step of `spikes`. All membrane state starts at
/// zero. `mask` multiplies the pooled vector and is held fixed over time.
pub fn simulate<F: Real>(
    model: &SnnModel<F>,
    spikes: &SpikeTrain,
    mask: Option<&[F]>,
    spike_fn: SpikeFn,
    record: bool,
) -> Result<StepOutput<F>> {
    let cfg = &model.config;
    let len = spikes.len;
    cfg.check_len(len)?;
    if spikes.dim != cfg.embed_dim {
        return Err(Error::ShapeMismatch(format!(
            "spike train has dimension {}, model expects {}",
            spikes.dim, cfg.embed_dim
        )));
    }
    let m = cfg.pooled_len();
    if let Some(mask) = mask {
        if mask.len() != m {
            return Err(Error::ShapeMismatch("dropout mask length".into()));
        }
    }
    let steps = spikes.steps;
    let fm = cfg.feature_maps;
    let h = cfg.neurons_per_class;
    let n_out = cfg.out_units();
    let layout = model.conv_layout(len);
    let n_conv = model.conv_units(len);
    let beta = F::lit(model.lif.beta);
    let thr = F::lit(model.lif.threshold);

    let mut conv_state = LifState::<F>::zeros(n_conv);
    let mut out_state = LifState::<F>::zeros(n_out);
    let mut x = vec![F::zero(); len * cfg.embed_dim];
    let mut current = vec![F::zero(); n_conv];
    let mut pooled = vec![F::zero(); m];
    let mut out_current = vec![F::zero(); n_out];
    let mut ever_conv = vec![false; n_conv];
    let mut ever_out = vec![false; n_out];

    let mut out_spikes = Vec::with_capacity(steps * n_out);
    let mut class_logits = Vec::with_capacity(steps * cfg.num_classes);
    let mut rec = record.then(|| Record {
        conv_u: Vec::with_capacity(steps * n_conv),
        conv_s: Vec::with_capacity(steps * n_conv),
        fc_in: Vec::with_capacity(steps * m),
        out_u: Vec::with_capacity(steps * n_out),
        out_s: Vec::with_capacity(steps * n_out),
    });
    let mut activity = Activity {
        steps,
        input_units: len * cfg.embed_dim,
        conv_units: n_conv,
        pooled_units: m,
        out_units: n_out,
        ..Default::default()
    };

    for t in 0..steps {
        let bits = spikes.step(t);
        for (xi, &b) in x.iter_mut().zip(bits) {
            *xi = if b != 0 { F::one() } else { F::zero() };
        }
        activity.input_spikes += bits.iter().map(|&b| b as f64).sum::<f64>();

        for (b, &(offset, positions)) in layout.iter().enumerate() {
            conv1d(
                &model.params.conv[b],
                &x,
                len,
                &mut current[offset..offset + fm * positions],
            );
        }
        conv_state.advance(&current, beta, thr, spike_fn);

        for (b, &(offset, positions)) in layout.iter().enumerate() {
            let inv = F::one() / F::lit(positions as f64);
            for f in 0..fm {
                let start = offset + f * positions;
                let total: F = conv_state.spikes[start..start + positions].iter().copied().sum();
                pooled[b * fm + f] = total * inv;
            }
        }
        activity.conv_spikes += conv_state.spikes.iter().map(|s| s.as_f64()).sum::<f64>();
        activity.pooled_sum += pooled.iter().map(|s| s.as_f64()).sum::<f64>();
        if let Some(mask) = mask {
            for (p, &k) in pooled.iter_mut().zip(mask) {
                *p *= k;
            }
        }

        for (o, c) in out_current.iter_mut().enumerate() {
            *c = dot(&model.params.fc.data[o * m..(o + 1) * m], &pooled);
        }
        out_state.advance(&out_current, beta, thr, spike_fn);
        activity.out_spikes += out_state.spikes.iter().map(|s| s.as_f64()).sum::<f64>();

        for (e, s) in ever_conv.iter_mut().zip(&conv_state.spikes) {
            *e |= *s > F::zero();
        }
        for (e, s) in ever_out.iter_mut().zip(&out_state.spikes) {
            *e |= *s > F::zero();
        }
        out_spikes.extend_from_slice(&out_state.spikes);
        class_logits.extend(out_state.spikes.chunks(h).map(|g| g.iter().copied().sum::<F>()));

        if let Some(r) = rec.as_mut() {
            r.conv_u.extend_from_slice(&conv_state.potential);
            r.conv_s.extend_from_slice(&conv_state.spikes);
            r.fc_in.extend_from_slice(&pooled);
            r.out_u.extend_from_slice(&out_state.potential);
            r.out_s.extend_from_slice(&out_state.spikes);
        }
    }
    activity.conv_active = ever_conv.iter().filter(|&&e| e).count();
    activity.out_active = ever_out.iter().filter(|&&e| e).count();

    Ok(StepOutput {
        steps,
        num_classes: cfg.num_classes,
        neurons_per_class: h,
        out_spikes,
        class_logits,
        activity,
        trace: rec,
    })
}

/// Class with the most output spikes over the run; ties go to the lowest index.
pub fn readout<F: Real>(out: &StepOutput<F>) -> usize {
    argmax_first(&out.class_totals())
}

/// Readout from raw per-neuron totals: `counts` holds `h·K` spike counts.
pub fn readout_counts(counts: &[u32], h: usize) -> usize {
    let totals: Vec<u32> = counts.chunks(h).map(|g| g.iter().sum()).collect();
    argmax_first(&totals)
}
