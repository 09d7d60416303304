use super::matrix::{gemm, Matrix};

/// Dense layer `y = W x + b`, applied to every row of a batch.
#[derive(Clone, Debug)]
pub struct Linear {
    /// `out_dim × in_dim`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<f64>,
    input: Option<Matrix>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            grad_weight: Matrix::zeros(out_dim, in_dim),
            grad_bias: vec![0.0; out_dim],
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn infer(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.in_dim(), "linear input width");
        let mut y = Matrix::from_vec(x.rows(), self.out_dim(), self.bias.repeat(x.rows()));
        gemm(1.0, x, false, &self.weight, true, 1.0, &mut y);
        y
    }

    /// Forward pass that keeps the input for [`Linear::backward`].
    pub fn forward(&mut self, x: Matrix) -> Matrix {
        let y = self.infer(&x);
        self.input = Some(x);
        y
    }

    /// Input kept by the last [`Linear::forward`].
    pub fn input(&self) -> Option<&Matrix> {
        self.input.as_ref()
    }

    /// Accumulates `∂L/∂W`, `∂L/∂b` when `param_grads` is set and returns
    /// `∂L/∂x` when `input_grad` is set.
    pub fn backward(&mut self, grad_out: &Matrix, param_grads: bool, input_grad: bool) -> Option<Matrix> {
        let x = self.input.as_ref().expect("linear backward before forward");
        assert_eq!(grad_out.shape(), (x.rows(), self.out_dim()), "linear upstream shape");
        if param_grads {
            gemm(1.0, grad_out, true, x, false, 1.0, &mut self.grad_weight);
            for row in grad_out.iter_rows() {
                for (g, v) in self.grad_bias.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        input_grad.then(|| {
            let mut gx = Matrix::zeros(x.rows(), self.in_dim());
            gemm(1.0, grad_out, false, &self.weight, false, 0.0, &mut gx);
            gx
        })
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut l = Linear::new(3, 3);
        for i in 0..3 {
            l.weight.set(i, i, 1.0);
        }
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0], [3.0, 0.0, -0.25]]);
        assert_eq!(l.forward(x.clone()), x);
    }

    #[test]
    fn scalar_layer() {
        let mut l = Linear::new(1, 1);
        l.weight.set(0, 0, 2.0);
        l.bias[0] = 1.0;
        let y = l.forward(Matrix::from_rows(&[[3.0]]));
        assert_eq!(y.get(0, 0), 7.0);
        let gx = l.backward(&Matrix::from_rows(&[[1.0]]), true, true).unwrap();
        assert_eq!(gx.get(0, 0), 2.0);
        assert_eq!(l.grad_weight.get(0, 0), 3.0);
        assert_eq!(l.grad_bias[0], 1.0);
    }

    #[test]
    #[should_panic(expected = "linear input width")]
    fn wrong_width_is_a_contract_violation() {
        let l = Linear::new(3, 2);
        l.infer(&Matrix::zeros(1, 4));
    }
}
