//! Rate coding of `[0, 1]` embedded sequences as Bernoulli spike trains.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Binary spikes of shape `steps × len × dim`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    pub steps: usize,
    pub len: usize,
    pub dim: usize,
    pub bits: Vec<u8>,
}

impl SpikeTrain {
    pub fn zeros(steps: usize, len: usize, dim: usize) -> Self {
        SpikeTrain {
            steps,
            len,
            dim,
            bits: vec![0; steps * len * dim],
        }
    }

    /// The `len × dim` slice for one time step.
    pub fn step(&self, t: usize) -> &[u8] {
        let n = self.len * self.dim;
        &self.bits[t * n..(t + 1) * n]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn rate(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    /// Bit-packed layout: `steps`, `len`, `dim` as little-endian `u32`, then the
    /// spikes row-major, most significant bit first, zero-padded to a byte.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.bits.len().div_ceil(8));
        for v in [self.steps, self.len, self.dim] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for chunk in self.bits.chunks(8) {
            let mut byte = 0u8;
            for (i, &b) in chunk.iter().enumerate() {
                byte |= (b & 1) << (7 - i);
            }
            out.push(byte);
        }
        out
    }

    pub fn from_packed(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::invalid("spike file shorter than its header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let (steps, len, dim) = (word(0), word(1), word(2));
        let n = steps * len * dim;
        let body = &bytes[12..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::invalid(format!(
                "spike file body has {} bytes, expected {}",
                body.len(),
                n.div_ceil(8)
            )));
        }
        let bits = (0..n).map(|i| (body[i / 8] >> (7 - i % 8)) & 1).collect();
        Ok(SpikeTrain {
            steps,
            len,
            dim,
            bits,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_packed())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_packed(&buf)
    }
}

/// One independent Bernoulli draw per `(t, l, d)` with success probability
/// `x[l, d]`.
pub fn encode_poisson(
    x: &[f32],
    len: usize,
    dim: usize,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<SpikeTrain> {
    if x.len() != len * dim {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, expected {len}×{dim}",
            x.len()
        )));
    }
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!(
            "firing probability {bad} outside [0, 1]"
        )));
    }
    let mut bits = Vec::with_capacity(steps * x.len());
    for _ in 0..steps {
        for &p in x {
            bits.push((rng.random::<f32>() < p) as u8);
        }
    }
    Ok(SpikeTrain {
        steps,
        len,
        dim,
        bits,
    })
}

/// Stream key for one example presentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeKey {
    pub seed: u64,
    pub purpose: Purpose,
    /// Epoch (training) or trial (evaluation).
    pub round: u64,
    pub batch: u64,
    pub example: u64,
}

impl EncodeKey {
    pub fn training(seed: u64, epoch: usize, batch: usize, example: usize) -> Self {
        EncodeKey {
            seed,
            purpose: Purpose::Encode,
            round: epoch as u64,
            batch: batch as u64,
            example: example as u64,
        }
    }

    pub fn evaluation(seed: u64, purpose: Purpose, trial: usize, example: usize) -> Self {
        EncodeKey {
            seed,
            purpose,
            round: trial as u64,
            batch: 0,
            example: example as u64,
        }
    }
}

pub fn encode_keyed(x: &[f32], len: usize, dim: usize, steps: usize, key: EncodeKey) -> Result<SpikeTrain> {
    let mut rng = rng::stream(key.seed, key.purpose, &[key.round, key.batch, key.example]);
    encode_poisson(x, len, dim, steps, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(example: usize) -> EncodeKey {
        EncodeKey::training(5, 0, 0, example)
    }

    #[test]
    fn zero_and_one_rates_are_exact() {
        let t = encode_keyed(&[0.0, 1.0], 1, 2, 30, key(0)).unwrap();
        for s in 0..30 {
            assert_eq!(t.step(s), &[0, 1]);
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(encode_keyed(&[1.2], 1, 1, 3, key(0)).is_err());
        assert!(encode_keyed(&[-0.01], 1, 1, 3, key(0)).is_err());
        assert!(encode_keyed(&[0.2, 0.3], 1, 1, 3, key(0)).is_err());
    }

    #[test]
    fn keyed_streams_are_order_independent() {
        let x = vec![0.3f32; 12];
        let a = encode_keyed(&x, 3, 4, 10, key(7)).unwrap();
        let _ = encode_keyed(&x, 3, 4, 10, key(8)).unwrap();
        let b = encode_keyed(&x, 3, 4, 10, key(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, encode_keyed(&x, 3, 4, 10, key(8)).unwrap());
    }

    #[test]
    fn larger_probability_more_spikes_on_aggregate() {
        let mut x = vec![0.2f32; 500];
        x.extend(vec![0.6f32; 500]);
        let t = encode_keyed(&x, 1000, 1, 50, key(1)).unwrap();
        let (mut lo, mut hi) = (0usize, 0usize);
        for s in 0..50 {
            let step = t.step(s);
            lo += step[..500].iter().map(|&b| b as usize).sum::<usize>();
            hi += step[500..].iter().map(|&b| b as usize).sum::<usize>();
        }
        assert!(hi > lo);
    }

    proptest! {
        #[test]
        fn packed_round_trip(steps in 1usize..5, len in 1usize..5, dim in 1usize..7, seed in any::<u64>()) {
            let x: Vec<f32> = (0..len * dim).map(|i| (i as f32 * 0.173).fract()).collect();
            let t = encode_keyed(&x, len, dim, steps, EncodeKey::training(seed, 0, 0, 0)).unwrap();
            prop_assert_eq!(SpikeTrain::from_packed(&t.to_packed()).unwrap(), t);
        }
    }
}
