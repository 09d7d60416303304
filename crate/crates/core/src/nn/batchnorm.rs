use super::matrix::Matrix;
use crate::error::{Error, Result};

/// How a batch-normalized network treats its statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and fold them into the running
    /// averages.
    Train,
    /// Normalize with batch statistics but leave the running averages alone.
    /// Used when a network is evaluated inside another network's update.
    TrainFrozen,
    /// Normalize with the running averages.
    Inference,
}

impl Mode {
    fn uses_batch_stats(self) -> bool {
        !matches!(self, Mode::Inference)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight of the old running value: `r ← m·r + (1 − m)·batch`.
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<Cache>,
}

#[derive(Clone, Debug)]
struct Cache {
    xhat: Matrix,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            grad_gamma: vec![0.0; dim],
            grad_beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, mut x: Matrix, mode: Mode) -> Result<Matrix> {
        let (n, dim) = x.shape();
        assert_eq!(dim, self.dim(), "batchnorm width");
        let inv_std: Vec<f64>;
        if mode.uses_batch_stats() {
            if n < 2 {
                return Err(Error::shape(format!(
                    "batch normalization in training mode needs at least 2 rows, got {n}"
                )));
            }
            let mut mean = vec![0.0; dim];
            for row in x.iter_rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; dim];
            for row in x.iter_rows() {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    let c = v - m;
                    *s += c * c;
                }
            }
            var.iter_mut().for_each(|s| *s /= n as f64);
            if mode == Mode::Train {
                let unbias = n as f64 / (n as f64 - 1.0);
                let mo = self.momentum;
                for j in 0..dim {
                    self.running_mean[j] = mo * self.running_mean[j] + (1.0 - mo) * mean[j];
                    self.running_var[j] = mo * self.running_var[j] + (1.0 - mo) * var[j] * unbias;
                }
            }
            inv_std = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
            normalize_rows(&mut x, &mean, &inv_std);
        } else {
            inv_std = self
                .running_var
                .iter()
                .map(|v| 1.0 / (v + self.epsilon).sqrt())
                .collect();
            normalize_rows(&mut x, &self.running_mean, &inv_std);
        }
        let mut y = Vec::with_capacity(n * dim);
        for row in x.iter_rows() {
            y.extend(row.iter().zip(&self.gamma).zip(&self.beta).map(|((v, g), b)| g * v + b));
        }
        let y = Matrix::from_vec(n, dim, y);
        self.cache = Some(Cache {
            xhat: x,
            inv_std,
            batch_stats: mode.uses_batch_stats(),
        });
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Matrix, param_grads: bool) -> Matrix {
        let cache = self.cache.as_ref().expect("batchnorm backward before forward");
        let (n, dim) = grad_out.shape();
        assert_eq!(cache.xhat.shape(), (n, dim), "batchnorm upstream shape");
        let mut sum_g = vec![0.0; dim];
        let mut sum_gx = vec![0.0; dim];
        for r in 0..n {
            let (g, xh) = (grad_out.row(r), cache.xhat.row(r));
            for j in 0..dim {
                sum_g[j] += g[j];
                sum_gx[j] += g[j] * xh[j];
            }
        }
        if param_grads {
            for j in 0..dim {
                self.grad_gamma[j] += sum_gx[j];
                self.grad_beta[j] += sum_g[j];
            }
        }
        let mut gx = Matrix::zeros(n, dim);
        if cache.batch_stats {
            let inv_n = 1.0 / n as f64;
            let scale: Vec<f64> = (0..dim).map(|j| self.gamma[j] * cache.inv_std[j]).collect();
            let mean_g: Vec<f64> = sum_g.iter().map(|s| s * inv_n).collect();
            let mean_gx: Vec<f64> = sum_gx.iter().map(|s| s * inv_n).collect();
            for r in 0..n {
                let (g, xh) = (grad_out.row(r), cache.xhat.row(r));
                for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
                    *o = scale[j] * (g[j] - mean_g[j] - xh[j] * mean_gx[j]);
                }
            }
        } else {
            for r in 0..n {
                let g = grad_out.row(r);
                for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
                    *o = g[j] * self.gamma[j] * cache.inv_std[j];
                }
            }
        }
        gx
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.iter_mut().for_each(|g| *g = 0.0);
        self.grad_beta.iter_mut().for_each(|g| *g = 0.0);
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}

fn normalize_rows(x: &mut Matrix, mean: &[f64], inv_std: &[f64]) {
    for r in 0..x.rows() {
        for ((v, m), s) in x.row_mut(r).iter_mut().zip(mean).zip(inv_std) {
            *v = (*v - m) * s;
        }
    }
}
