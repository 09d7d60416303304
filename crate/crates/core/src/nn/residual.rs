use super::activation::Relu;
use super::batchnorm::{BatchNorm, Mode};
use super::linear::Linear;
use super::matrix::Matrix;
use super::network::{BufferVisitor, ParamVisitor};
use crate::error::Result;

/// `x + ReLU(BN(W₂ · ReLU(BN(W₁ x))))`; no activation after the addition.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub fc1: Linear,
    pub bn1: BatchNorm,
    relu1: Relu,
    pub fc2: Linear,
    pub bn2: BatchNorm,
    relu2: Relu,
}

impl ResidualBlock {
    pub fn new(width: usize) -> Self {
        Self {
            fc1: Linear::new(width, width),
            bn1: BatchNorm::new(width),
            relu1: Relu::default(),
            fc2: Linear::new(width, width),
            bn2: BatchNorm::new(width),
            relu2: Relu::default(),
        }
    }

    pub fn width(&self) -> usize {
        self.fc1.in_dim()
    }

    pub fn forward(&mut self, x: Matrix, mode: Mode) -> Result<Matrix> {
        let h = self.fc1.forward(x);
        let h = self.relu1.forward(self.bn1.forward(h, mode)?);
        let h = self.fc2.forward(h);
        let mut h = self.relu2.forward(self.bn2.forward(h, mode)?);
        h.add_assign(self.fc1.input().expect("kept by forward"));
        Ok(h)
    }

    pub fn backward(&mut self, grad_out: &Matrix, param_grads: bool) -> Matrix {
        let g = self.relu2.backward_ref(grad_out);
        let g = self.bn2.backward(&g, param_grads);
        let g = self.fc2.backward(&g, param_grads, true).expect("input grad");
        let g = self.relu1.backward(g);
        let g = self.bn1.backward(&g, param_grads);
        let mut g = self.fc1.backward(&g, param_grads, true).expect("input grad");
        g.add_assign(grad_out);
        g
    }

    pub(crate) fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        let w = [self.fc1.out_dim(), self.fc1.in_dim()];
        let d = [self.bn1.dim()];
        f(
            &format!("{prefix}.fc1.weight"),
            &w,
            self.fc1.weight.data_mut(),
            self.fc1.grad_weight.data_mut(),
        );
        f(
            &format!("{prefix}.fc1.bias"),
            &d,
            &mut self.fc1.bias,
            &mut self.fc1.grad_bias,
        );
        f(
            &format!("{prefix}.bn1.gamma"),
            &d,
            &mut self.bn1.gamma,
            &mut self.bn1.grad_gamma,
        );
        f(
            &format!("{prefix}.bn1.beta"),
            &d,
            &mut self.bn1.beta,
            &mut self.bn1.grad_beta,
        );
        f(
            &format!("{prefix}.fc2.weight"),
            &w,
            self.fc2.weight.data_mut(),
            self.fc2.grad_weight.data_mut(),
        );
        f(
            &format!("{prefix}.fc2.bias"),
            &d,
            &mut self.fc2.bias,
            &mut self.fc2.grad_bias,
        );
        f(
            &format!("{prefix}.bn2.gamma"),
            &d,
            &mut self.bn2.gamma,
            &mut self.bn2.grad_gamma,
        );
        f(
            &format!("{prefix}.bn2.beta"),
            &d,
            &mut self.bn2.beta,
            &mut self.bn2.grad_beta,
        );
    }

    pub(crate) fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor) {
        let d = [self.bn1.dim()];
        f(&format!("{prefix}.bn1.running_mean"), &d, &mut self.bn1.running_mean);
        f(&format!("{prefix}.bn1.running_var"), &d, &mut self.bn1.running_var);
        f(&format!("{prefix}.bn2.running_mean"), &d, &mut self.bn2.running_mean);
        f(&format!("{prefix}.bn2.running_var"), &d, &mut self.bn2.running_var);
    }

    pub(crate) fn clear_cache(&mut self) {
        self.fc1.clear_cache();
        self.bn1.clear_cache();
        self.relu1.clear_cache();
        self.fc2.clear_cache();
        self.bn2.clear_cache();
        self.relu2.clear_cache();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroed_second_stack_is_identity() {
        let mut block = ResidualBlock::new(3);
        for i in 0..3 {
            for j in 0..3 {
                block.fc1.weight.set(i, j, 0.1 * (i as f64) - 0.2 * (j as f64) + 0.05);
            }
        }
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0], [1.0, 0.25, -0.5], [0.0, 3.0, 1.0]]);
        for mode in [Mode::Train, Mode::Inference] {
            let y = block.forward(x.clone(), mode).unwrap();
            assert_eq!(y, x);
        }
    }
}
