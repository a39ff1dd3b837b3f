use crate::error::{Error, Result};
use crate::real::Real;
use crate::training::SurrogateConfig;

/// Neuron and simulation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifConfig {
    /// Membrane decay rate β.
    pub beta: f64,
    pub threshold: f64,
    pub time_steps: usize,
    /// Surrogate slope k.
    pub slope: f64,
}

impl Default for LifConfig {
    fn default() -> Self {
        LifConfig {
            beta: 1.0,
            threshold: 1.0,
            time_steps: 50,
            slope: 25.0,
        }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid(format!("decay rate must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::invalid(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.time_steps == 0 {
            return Err(Error::invalid("time steps must be at least 1"));
        }
        if !(self.slope >= 0.0) {
            return Err(Error::invalid(format!("surrogate slope must be non-negative, got {}", self.slope)));
        }
        Ok(())
    }
}

/// How a membrane potential turns into an output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    /// `S = 1` iff `U ≥ U_thr`.
    Heaviside,
    /// Smooth fast sigmoid in the forward pass as well (gradient checking).
    Relaxed(SurrogateConfig),
}

impl SpikeFn {
    #[inline]
    pub fn apply<F: Real>(&self, u: F, threshold: F) -> F {
        match self {
            SpikeFn::Heaviside => {
                if u >= threshold {
                    F::one()
                } else {
                    F::zero()
                }
            }
            SpikeFn::Relaxed(s) => s.value(u, threshold),
        }
    }
}

/// Membrane potentials and previous-step spikes of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState<F> {
    pub potential: Vec<F>,
    pub spikes: Vec<F>,
}

impl<F: Real> LifState<F> {
    pub fn zeros(n: usize) -> Self {
        LifState {
            potential: vec![F::zero(); n],
            spikes: vec![F::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.potential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potential.is_empty()
    }

    /// `U_t = I_t + β·U_{t−1} − S_{t−1}·U_thr`, then `S_t = spike(U_t)`.
    #[inline]
    pub fn advance(&mut self, current: &[F], beta: F, threshold: F, spike: SpikeFn) {
        debug_assert_eq!(current.len(), self.potential.len());
        for ((u, s), &i) in self.potential.iter_mut().zip(&mut self.spikes).zip(current) {
            *u = i + beta * *u - *s * threshold;
            *s = spike.apply(*u, threshold);
        }
    }
}

/// One LIF update with the Heaviside spike. Returns the new spikes and state.
pub fn lif_step<F: Real>(
    state: &LifState<F>,
    current: &[F],
    lif: &LifConfig,
) -> Result<(Vec<F>, LifState<F>)> {
    if current.len() != state.len() {
        return Err(Error::ShapeMismatch(format!(
            "current has {} entries, layer has {}",
            current.len(),
            state.len()
        )));
    }
    if current.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("input current".into()));
    }
    let mut next = state.clone();
    next.advance(current, F::lit(lif.beta), F::lit(lif.threshold), SpikeFn::Heaviside);
    Ok((next.spikes.clone(), next))
}
