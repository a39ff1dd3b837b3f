use super::{rate_ce_with_grad, SurrogateConfig};
use crate::ann::{conv1d_backward, CnnParams};
use crate::encoder::SpikeTrain;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::snn::{Record, SnnModel, StepOutput};

/// Treatment of the `−S_{t−1}·U_thr` reset term in the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetGrad {
    /// Reset carries no gradient, so `∂U_t/∂U_{t−1} = β`.
    #[default]
    Detached,
    /// Differentiate through the reset as well. Needed when the forward spike
    /// function is smooth and the result is compared against finite differences.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BpttOptions {
    pub surrogate: SurrogateConfig,
    pub reset: ResetGrad,
}

/// Loss and parameter gradients for one example from a recorded forward run.
pub fn bptt<F: Real>(
    model: &SnnModel<F>,
    spikes: &SpikeTrain,
    out: &StepOutput<F>,
    mask: Option<&[F]>,
    target: usize,
    opts: &BpttOptions,
) -> Result<(F, CnnParams<F>)> {
    let record = out
        .trace
        .as_ref()
        .ok_or_else(|| Error::invalid("forward pass was run without recording"))?;
    let (loss, d_logits) = rate_ce_with_grad(&out.class_logits, out.steps, out.num_classes, target);
    let grads = backward_through_time(model, spikes, record, mask, &d_logits, opts)?;
    Ok((loss, grads))
}

/// Single reverse sweep over the unrolled network, carrying the membrane
/// adjoint of each layer from step `t+1` to step `t`. `d_logits` is the loss
/// gradient with respect to each step's class logits (`steps × K`).
pub fn backward_through_time<F: Real>(
    model: &SnnModel<F>,
    spikes: &SpikeTrain,
    record: &Record<F>,
    mask: Option<&[F]>,
    d_logits: &[F],
    opts: &BpttOptions,
) -> Result<CnnParams<F>> {
    let cfg = &model.config;
    let steps = spikes.steps;
    let len = spikes.len;
    let fm = cfg.feature_maps;
    let m = cfg.pooled_len();
    let h = cfg.neurons_per_class;
    let n_out = cfg.out_units();
    let layout = model.conv_layout(len);
    let n_conv = model.conv_units(len);
    if record.out_u.len() != steps * n_out || record.conv_u.len() != steps * n_conv {
        return Err(Error::invalid("forward records do not cover every step"));
    }
    if d_logits.len() != steps * cfg.num_classes {
        return Err(Error::ShapeMismatch("logit gradient length".into()));
    }
    let beta = F::lit(model.lif.beta);
    let thr = F::lit(model.lif.threshold);
    let full_reset = opts.reset == ResetGrad::Full;
    let sg = &opts.surrogate;

    let mut grads = model.params.zeros_like();
    let mut out_adj = vec![F::zero(); n_out];
    let mut conv_adj = vec![F::zero(); n_conv];
    let mut d_out_u = vec![F::zero(); n_out];
    let mut d_fc_in = vec![F::zero(); m];
    let mut d_conv_u = vec![F::zero(); n_conv];
    let mut x = vec![F::zero(); len * cfg.embed_dim];

    for t in (0..steps).rev() {
        let out_u = &record.out_u[t * n_out..(t + 1) * n_out];
        let fc_in = &record.fc_in[t * m..(t + 1) * m];
        let conv_u = &record.conv_u[t * n_conv..(t + 1) * n_conv];
        let dl = &d_logits[t * cfg.num_classes..(t + 1) * cfg.num_classes];

        for o in 0..n_out {
            let mut d_s = dl[o / h];
            if full_reset {
                d_s -= thr * out_adj[o];
            }
            d_out_u[o] = d_s * sg.grad(out_u[o], thr) + beta * out_adj[o];
        }
        out_adj.copy_from_slice(&d_out_u);

        d_fc_in.iter_mut().for_each(|v| *v = F::zero());
        for (o, &g) in d_out_u.iter().enumerate() {
            if g == F::zero() {
                continue;
            }
            let w = &model.params.fc.data[o * m..(o + 1) * m];
            let gw = &mut grads.fc.data[o * m..(o + 1) * m];
            for j in 0..m {
                gw[j] += g * fc_in[j];
                d_fc_in[j] += g * w[j];
            }
        }
        if let Some(mask) = mask {
            for (d, &k) in d_fc_in.iter_mut().zip(mask) {
                *d *= k;
            }
        }

        for (b, &(offset, positions)) in layout.iter().enumerate() {
            let inv = F::one() / F::lit(positions as f64);
            for f in 0..fm {
                let d_pool = d_fc_in[b * fm + f] * inv;
                for p in 0..positions {
                    let i = offset + f * positions + p;
                    let mut d_s = d_pool;
                    if full_reset {
                        d_s -= thr * conv_adj[i];
                    }
                    d_conv_u[i] = d_s * sg.grad(conv_u[i], thr) + beta * conv_adj[i];
                }
            }
        }
        conv_adj.copy_from_slice(&d_conv_u);

        for (xi, &bit) in x.iter_mut().zip(spikes.step(t)) {
            *xi = if bit != 0 { F::one() } else { F::zero() };
        }
        for (b, &(offset, positions)) in layout.iter().enumerate() {
            conv1d_backward(
                &model.params.conv[b],
                &x,
                len,
                &d_conv_u[offset..offset + fm * positions],
                &mut grads.conv[b],
                None,
            );
        }

        if out_adj.iter().chain(&conv_adj).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("membrane gradient at step {}", t + 1)));
        }
    }
    for (name, t) in grads.named() {
        if !t.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok(grads)
}
