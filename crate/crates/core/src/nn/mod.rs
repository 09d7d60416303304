//! Layer-wise reverse-mode differentiation for the generator and
//! discriminator: every layer caches what its backward pass needs during
//! `forward` and replays it in reverse in `backward`.

mod activation;
mod adam;
mod batchnorm;
pub mod checkpoint;
mod linear;
mod matrix;
mod network;
mod residual;

pub use activation::{log_softmax, softmax, softmax_cross_entropy, Relu};
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, Mode};
pub use checkpoint::{Checkpoint, Tensor};
pub use linear::Linear;
pub use matrix::{gemm, Matrix};
pub use network::{
    BufferVisitor, DiscriminatorNet, GeneratorNet, NetOptions, NetShape, ParamVisitor, Parameterized, ResidualMlp,
};
pub use residual::ResidualBlock;
