//! The adversarial lifting pipeline: normalization, lifting, random
//! re-projection, the GAN objective and the training loop.

mod loss;
mod model;
mod normalize;
mod pipeline;
mod train;

pub use loss::{disc_loss_logits, gan_loss, gen_loss_logits, GanLosses, GeneratorLoss};
pub use model::LiftModel;
pub use normalize::{normalize, NormStats};
pub use pipeline::{
    center_vjp, lift, lift_offsets, poses_from_matrix, poses_to_matrix, project_with, random_project, Lifted,
    Projected, ProjectionConfig,
};
pub use train::{
    load_config, train, EpochSampler, StepStats, TrainConfig, TrainOptions, TrainOutcome, TrainState, Validator,
    CONFIG_FILE, NORM_FILE, TELEMETRY_HEADER,
};
