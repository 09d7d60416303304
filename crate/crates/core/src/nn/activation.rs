use super::matrix::Matrix;

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward(&mut self, mut x: Matrix) -> Matrix {
        self.mask.clear();
        self.mask.extend(x.data().iter().map(|&v| v > 0.0));
        for v in x.data_mut() {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        x
    }

    pub fn backward(&self, mut grad: Matrix) -> Matrix {
        assert_eq!(grad.data().len(), self.mask.len(), "relu upstream shape");
        for (g, &m) in grad.data_mut().iter_mut().zip(&self.mask) {
            if !m {
                *g = 0.0;
            }
        }
        grad
    }

    /// [`Relu::backward`] without consuming the upstream gradient.
    pub fn backward_ref(&self, grad: &Matrix) -> Matrix {
        assert_eq!(grad.data().len(), self.mask.len(), "relu upstream shape");
        let data = grad
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Matrix::from_vec(grad.rows(), grad.cols(), data)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.mask = Vec::new();
    }
}

/// Row-wise softmax computed through log-sum-exp.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Row-wise `log softmax`.
pub fn log_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Mean negative log-likelihood of `labels` under the row softmax of
/// `logits`, with its gradient `(softmax − one_hot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = logits.rows();
    assert_eq!(labels.len(), n, "one label per row");
    let logp = log_softmax(logits);
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        assert!(label < logits.cols(), "label {label} out of range");
        loss -= logp.get(r, label);
        let row = grad.row_mut(r);
        row[label] -= 1.0;
        row.iter_mut().for_each(|g| *g /= n as f64);
    }
    (loss / n as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uninformative_logits_cost_ln2() {
        let logits = Matrix::from_rows(&[[0.0, 0.0]]);
        for label in [0, 1] {
            let (loss, _) = softmax_cross_entropy(&logits, &[label]);
            assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = Matrix::from_rows(&[[20.0, -20.0]]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]);
        assert!((loss - 40.0).abs() < 1e-9);
        assert!(grad.is_finite());
        let (loss, _) = softmax_cross_entropy(&Matrix::from_rows(&[[800.0, -800.0]]), &[1]);
        assert!((loss - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&Matrix::from_rows(&[[1.0, 2.0], [-700.0, 700.0], [0.3, 0.3]]));
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_masks_gradient() {
        let mut relu = Relu::default();
        let y = relu.forward(Matrix::from_rows(&[[-1.0, 2.0, 0.0]]));
        assert_eq!(y.row(0), &[0.0, 2.0, 0.0]);
        let g = relu.backward(Matrix::from_rows(&[[5.0, 5.0, 5.0]]));
        assert_eq!(g.row(0), &[0.0, 5.0, 0.0]);
    }
}
