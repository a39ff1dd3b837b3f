//! Adam, for dense parameter tensors and for sparsely-touched embedding rows.

use crate::real::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
struct Moments {
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Moments {
    #[inline]
    fn update(&self, p: &mut f32, g: f32, m: &mut f32, v: &mut f32, lr_t: f64) {
        *m = (self.beta1 * *m as f64 + (1.0 - self.beta1) * g as f64) as f32;
        *v = (self.beta2 * *v as f64 + (1.0 - self.beta2) * (g as f64) * (g as f64)) as f32;
        *p -= (lr_t * *m as f64 / ((*v as f64).sqrt() + self.eps)) as f32;
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    moments: Moments,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            moments: Moments {
                beta1: BETA1,
                beta2: BETA2,
                eps: EPSILON,
            },
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    fn bias_corrected_lr(&self) -> f64 {
        let t = self.step as i32;
        self.lr * (1.0 - BETA2.powi(t)).sqrt() / (1.0 - BETA1.powi(t))
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<f32>>, grads: Vec<&Tensor<f32>>) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        if self.lr == 0.0 {
            return;
        }
        let lr_t = self.bias_corrected_lr();
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                self.moments
                    .update(&mut p.data[j], g.data[j], &mut m[j], &mut v[j], lr_t);
            }
        }
    }
}

/// Lazy Adam over the rows of a `rows × dim` table: only rows present in a
/// step's gradient have their moments and values updated.
#[derive(Debug, Clone)]
pub struct RowAdam {
    pub lr: f64,
    dim: usize,
    moments: Moments,
    step: u64,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl RowAdam {
    pub fn new(lr: f64, rows: usize, dim: usize) -> Self {
        RowAdam {
            lr,
            dim,
            moments: Moments {
                beta1: BETA1,
                beta2: BETA2,
                eps: EPSILON,
            },
            step: 0,
            m: vec![0.0; rows * dim],
            v: vec![0.0; rows * dim],
        }
    }

    /// `rows` must be sorted by id for reproducibility.
    pub fn step(&mut self, table: &mut [f32], rows: &[(u32, Vec<f32>)]) {
        self.step += 1;
        if self.lr == 0.0 {
            return;
        }
        let t = self.step as i32;
        let lr_t = self.lr * (1.0 - BETA2.powi(t)).sqrt() / (1.0 - BETA1.powi(t));
        for (id, g) in rows {
            let base = *id as usize * self.dim;
            for (j, &gj) in g.iter().enumerate() {
                let k = base + j;
                self.moments
                    .update(&mut table[k], gj, &mut self.m[k], &mut self.v[k], lr_t);
            }
        }
    }
}
