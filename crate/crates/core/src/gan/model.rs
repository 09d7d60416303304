use std::path::Path;

use super::normalize::NormStats;
use super::pipeline::lift;
use super::train::{load_config, NORM_FILE};
use crate::error::{Error, Result};
use crate::geometry::{LiftConfig, Pose2D, Skeleton3D, SkeletonTopology};
use crate::nn::{Checkpoint, GeneratorNet, Mode};

use super::pipeline::poses_to_matrix;

/// A trained generator ready for inference.
#[derive(Clone, Debug)]
pub struct LiftModel {
    pub generator: GeneratorNet,
    pub lift: LiftConfig,
    pub norm: Option<NormStats>,
    /// Where the model was loaded from, for reports.
    pub id: String,
}

impl LiftModel {
    pub fn load(dir: &Path) -> Result<Self> {
        let config = load_config(dir)?;
        let ck = Checkpoint::load(dir)?;
        let mut generator = config.build_generator();
        ck.restore_params("generator", &mut generator)?;
        let norm_path = dir.join(NORM_FILE);
        let norm = if norm_path.exists() {
            Some(NormStats::load(&norm_path)?)
        } else {
            None
        };
        Ok(Self {
            generator,
            lift: config.lift,
            norm,
            id: dir.display().to_string(),
        })
    }

    /// Lifts poses that are already normalized.
    pub fn lift_normalized(&mut self, poses: &[Pose2D]) -> Result<Vec<Skeleton3D>> {
        let mut out = Vec::with_capacity(poses.len());
        // Inference mode makes rows independent, so chunking does not change
        // the result.
        for chunk in poses.chunks(4096) {
            out.extend(lift(
                &mut self.generator,
                &poses_to_matrix(chunk),
                Mode::Inference,
                &self.lift,
            )?);
        }
        Ok(out)
    }

    /// Normalizes raw poses with the stored statistics, then lifts.
    pub fn lift_raw(&mut self, poses: &[Pose2D]) -> Result<Vec<Skeleton3D>> {
        let norm = self
            .norm
            .as_ref()
            .ok_or_else(|| Error::config(format!("{} has no {NORM_FILE}", self.id)))?;
        let normalized = norm.apply(poses, &SkeletonTopology::standard())?;
        self.lift_normalized(&normalized)
    }
}
