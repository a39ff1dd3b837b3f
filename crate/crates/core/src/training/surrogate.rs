use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::real::Real;

/// Where the fast sigmoid is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Around the firing threshold: `x = U − U_thr`.
    #[default]
    Threshold,
    /// Around zero: `x = U`.
    Raw,
}

impl FromStr for Centering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Centering::Threshold),
            "raw" => Ok(Centering::Raw),
            _ => Err(Error::invalid(format!("unknown surrogate centering `{s}`"))),
        }
    }
}

impl fmt::Display for Centering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Centering::Threshold => "threshold",
            Centering::Raw => "raw",
        })
    }
}

/// Fast-sigmoid surrogate `x / (1 + k|x|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub slope: f64,
    pub centering: Centering,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            slope: 25.0,
            centering: Centering::Threshold,
        }
    }
}

impl SurrogateConfig {
    #[inline]
    fn centered<F: Real>(&self, u: F, threshold: F) -> F {
        match self.centering {
            Centering::Threshold => u - threshold,
            Centering::Raw => u,
        }
    }

    /// The smooth stand-in for the Heaviside step.
    #[inline]
    pub fn value<F: Real>(&self, u: F, threshold: F) -> F {
        let x = self.centered(u, threshold);
        x / (F::one() + F::lit(self.slope) * x.abs())
    }

    /// `dS/dU = 1 / (1 + k|x|)²`.
    #[inline]
    pub fn grad<F: Real>(&self, u: F, threshold: F) -> F {
        let x = self.centered(u, threshold);
        let d = F::one() + F::lit(self.slope) * x.abs();
        F::one() / (d * d)
    }
}

pub fn surrogate_grad<F: Real>(u: F, threshold: F, surrogate: &SurrogateConfig) -> F {
    surrogate.grad(u, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn peak_and_tail() {
        let s = SurrogateConfig::default();
        assert_eq!(surrogate_grad(1.0f64, 1.0, &s), 1.0);
        let tail = surrogate_grad(2.0f64, 1.0, &s);
        assert!((tail - 1.0 / 676.0).abs() < 1e-15);
        assert!((tail - 1.4793e-3).abs() < 1e-7);
    }

    #[test]
    fn zero_slope_is_straight_through() {
        let s = SurrogateConfig {
            slope: 0.0,
            ..Default::default()
        };
        for u in [-3.0f64, 0.0, 0.7, 12.0] {
            assert_eq!(surrogate_grad(u, 1.0, &s), 1.0);
        }
    }

    #[test]
    fn raw_centering_peaks_at_zero() {
        let s = SurrogateConfig {
            centering: Centering::Raw,
            ..Default::default()
        };
        assert_eq!(surrogate_grad(0.0f64, 1.0, &s), 1.0);
        assert!(surrogate_grad(1.0f64, 1.0, &s) < 1.0);
    }

    proptest! {
        #[test]
        fn symmetric_about_threshold(delta in -50.0f64..50.0, thr in 0.1f64..4.0, k in 0.0f64..60.0) {
            let s = SurrogateConfig { slope: k, centering: Centering::Threshold };
            let (a, b) = (s.grad(thr + delta, thr), s.grad(thr - delta, thr));
            // thr ± delta rounds independently, so allow a few ulps.
            prop_assert!((a - b).abs() <= 1e-12 * a.max(b));
        }

        #[test]
        fn grad_is_derivative_of_value(u in -3.0f64..3.0, k in 0.0f64..40.0) {
            let s = SurrogateConfig { slope: k, centering: Centering::Threshold };
            prop_assume!((u - 1.0).abs() > 1e-3);
            let h = 1e-6;
            let fd = (s.value(u + h, 1.0) - s.value(u - h, 1.0)) / (2.0 * h);
            prop_assert!((fd - s.grad(u, 1.0)).abs() < 1e-6);
        }
    }
}
