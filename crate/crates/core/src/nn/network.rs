use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::activation::softmax;
use super::batchnorm::{BatchNorm, Mode};
use super::linear::Linear;
use super::matrix::Matrix;
use super::residual::ResidualBlock;
use crate::error::{Error, Result};
use crate::geometry::{NUM_JOINTS, POSE_DIM};

/// `f(name, shape, values, grads)`.
pub type ParamVisitor<'a> = dyn FnMut(&str, &[usize], &mut [f64], &mut [f64]) + 'a;
/// `f(name, shape, values)`.
pub type BufferVisitor<'a> = dyn FnMut(&str, &[usize], &mut [f64]) + 'a;

/// Anything whose trainable tensors can be enumerated in a fixed order.
pub trait Parameterized {
    /// Calls `f(name, shape, values, grads)` for every trainable tensor.
    fn visit_params(&mut self, f: &mut ParamVisitor);

    /// Calls `f(name, shape, values)` for every non-trainable state tensor
    /// (batch-norm running statistics).
    fn visit_buffers(&mut self, f: &mut BufferVisitor);

    fn zero_grad(&mut self) {
        self.visit_params(&mut |_, _, _, g| g.iter_mut().for_each(|v| *v = 0.0));
    }

    fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, _, v, _| n += v.len());
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub in_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub out_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetOptions {
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    /// Start the output layer at zero so the network initially emits zeros.
    pub zero_output: bool,
}

impl Default for NetOptions {
    fn default() -> Self {
        Self {
            bn_momentum: BatchNorm::DEFAULT_MOMENTUM,
            bn_epsilon: BatchNorm::DEFAULT_EPSILON,
            zero_output: false,
        }
    }
}

/// Input projection to `width`, a stack of residual blocks, and an output
/// projection.
#[derive(Clone, Debug)]
pub struct ResidualMlp {
    pub input: Linear,
    pub blocks: Vec<ResidualBlock>,
    pub output: Linear,
}

impl ResidualMlp {
    pub fn new(shape: NetShape, opts: &NetOptions) -> Self {
        let mut blocks: Vec<ResidualBlock> = (0..shape.blocks).map(|_| ResidualBlock::new(shape.width)).collect();
        for b in &mut blocks {
            for bn in [&mut b.bn1, &mut b.bn2] {
                bn.momentum = opts.bn_momentum;
                bn.epsilon = opts.bn_epsilon;
            }
        }
        Self {
            input: Linear::new(shape.in_dim, shape.width),
            blocks,
            output: Linear::new(shape.width, shape.out_dim),
        }
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            in_dim: self.input.in_dim(),
            width: self.input.out_dim(),
            blocks: self.blocks.len(),
            out_dim: self.output.out_dim(),
        }
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases, unit/zero
    /// batch-norm affine parameters. Fully determined by `seed`.
    pub fn init_parameters(&mut self, seed: u64, zero_output: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |layer: &mut Linear| {
            let fan_in = layer.in_dim() as f64;
            let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            layer
                .weight
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = dist.sample(&mut rng));
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        };
        he(&mut self.input);
        for b in &mut self.blocks {
            he(&mut b.fc1);
            he(&mut b.fc2);
            for bn in [&mut b.bn1, &mut b.bn2] {
                bn.gamma.iter_mut().for_each(|g| *g = 1.0);
                bn.beta.iter_mut().for_each(|g| *g = 0.0);
                bn.running_mean.iter_mut().for_each(|g| *g = 0.0);
                bn.running_var.iter_mut().for_each(|g| *g = 1.0);
            }
        }
        he(&mut self.output);
        if zero_output {
            self.output.weight.fill(0.0);
        }
    }

    pub fn forward(&mut self, x: Matrix, mode: Mode) -> Result<Matrix> {
        if x.cols() != self.input.in_dim() {
            return Err(Error::shape(format!(
                "network expects {} inputs per row, got {}",
                self.input.in_dim(),
                x.cols()
            )));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut h = self.input.forward(x);
        for b in &mut self.blocks {
            h = b.forward(h, mode)?;
        }
        let y = self.output.forward(h);
        if !y.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(y)
    }

    /// Backpropagates `grad_out`. Parameter gradients are accumulated only
    /// when `param_grads` is set; the input gradient is returned only when
    /// `input_grad` is set.
    pub fn backward(&mut self, grad_out: &Matrix, param_grads: bool, input_grad: bool) -> Option<Matrix> {
        let mut g = self.output.backward(grad_out, param_grads, true).expect("input grad");
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g, param_grads);
        }
        self.input.backward(&g, param_grads, input_grad)
    }

    /// Drops activations kept for the backward pass.
    pub fn clear_cache(&mut self) {
        self.input.clear_cache();
        self.blocks.iter_mut().for_each(ResidualBlock::clear_cache);
        self.output.clear_cache();
    }
}

impl Parameterized for ResidualMlp {
    fn visit_params(&mut self, f: &mut ParamVisitor) {
        let (i, o) = (self.input.in_dim(), self.input.out_dim());
        f(
            "input.weight",
            &[o, i],
            self.input.weight.data_mut(),
            self.input.grad_weight.data_mut(),
        );
        f("input.bias", &[o], &mut self.input.bias, &mut self.input.grad_bias);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params(&format!("block{i}"), f);
        }
        let (i, o) = (self.output.in_dim(), self.output.out_dim());
        f(
            "output.weight",
            &[o, i],
            self.output.weight.data_mut(),
            self.output.grad_weight.data_mut(),
        );
        f("output.bias", &[o], &mut self.output.bias, &mut self.output.grad_bias);
    }

    fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_buffers(&format!("block{i}"), f);
        }
    }
}

/// Maps a batch of flattened 2D poses to one depth offset per joint.
#[derive(Clone, Debug)]
pub struct GeneratorNet {
    pub net: ResidualMlp,
}

impl GeneratorNet {
    pub const DEFAULT_BLOCKS: usize = 4;

    pub fn new(width: usize, blocks: usize, opts: &NetOptions) -> Self {
        Self {
            net: ResidualMlp::new(
                NetShape {
                    in_dim: POSE_DIM,
                    width,
                    blocks,
                    out_dim: NUM_JOINTS,
                },
                opts,
            ),
        }
    }

    pub fn init_parameters(&mut self, seed: u64, opts: &NetOptions) {
        self.net.init_parameters(seed, opts.zero_output);
    }

    /// `batch × 28` poses to `batch × 14` depth offsets.
    pub fn apply(&mut self, poses: &Matrix, mode: Mode) -> Result<Matrix> {
        self.net.forward(poses.clone(), mode)
    }

    pub fn backward(&mut self, grad_offsets: &Matrix, param_grads: bool, input_grad: bool) -> Option<Matrix> {
        self.net.backward(grad_offsets, param_grads, input_grad)
    }
}

impl Parameterized for GeneratorNet {
    fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.net.visit_params(f)
    }

    fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        self.net.visit_buffers(f)
    }
}

/// Scores a batch of flattened 2D poses with two logits, `(fake, real)`.
#[derive(Clone, Debug)]
pub struct DiscriminatorNet {
    pub net: ResidualMlp,
}

impl DiscriminatorNet {
    pub const DEFAULT_BLOCKS: usize = 3;
    pub const FAKE: usize = 0;
    pub const REAL: usize = 1;

    pub fn new(width: usize, blocks: usize, opts: &NetOptions) -> Self {
        Self {
            net: ResidualMlp::new(
                NetShape {
                    in_dim: POSE_DIM,
                    width,
                    blocks,
                    out_dim: 2,
                },
                opts,
            ),
        }
    }

    pub fn init_parameters(&mut self, seed: u64) {
        self.net.init_parameters(seed, false);
    }

    pub fn logits(&mut self, poses: &Matrix, mode: Mode) -> Result<Matrix> {
        self.net.forward(poses.clone(), mode)
    }

    /// `D(u)`: softmax probability of the "real" class for each row.
    pub fn apply(&mut self, poses: &Matrix, mode: Mode) -> Result<Vec<f64>> {
        let p = softmax(&self.logits(poses, mode)?);
        Ok(p.iter_rows().map(|r| r[Self::REAL]).collect())
    }

    pub fn backward(&mut self, grad_logits: &Matrix, param_grads: bool, input_grad: bool) -> Option<Matrix> {
        self.net.backward(grad_logits, param_grads, input_grad)
    }
}

impl Parameterized for DiscriminatorNet {
    fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.net.visit_params(f)
    }

    fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        self.net.visit_buffers(f)
    }
}
