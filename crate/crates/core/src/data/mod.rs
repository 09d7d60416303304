//! Synthetic skeletons, multi-view 2D augmentation and pose dataset files.

mod dataset;
mod generate;
mod prior;
mod views;

pub use dataset::{
    load_dataset, pose_header, read_poses_2d, read_skeletons, save_dataset, split, write_matrix_csv, write_poses_2d,
    write_skeletons, DatasetMeta, PoseDataset, CLASS_COLUMN, METADATA_FILE, SYNTHETIC_UNIT_MM,
};
pub use generate::{generate_synthetic, Splits, SyntheticConfig};
pub use prior::{
    sample_skeleton, AngleLimit, ArticulationPriors, BoneLengths, BonePriors, LengthPrior, SampledSkeleton,
    SkeletonPrior, ANGLE_NAMES, NUM_ANGLES, POSTURE_CLASSES,
};
pub use views::{augment_views, view_from_rotation, View, ViewConfig};
