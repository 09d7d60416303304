use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{
    perspective_project, rotate_about_pivot, CameraRotation, LiftConfig, Pose2D, Skeleton3D, ViewRanges,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    pub num_cameras: usize,
    pub ranges: ViewRanges,
    /// Standard deviation of Gaussian noise added to projected 2D joints, in
    /// normalized image units. Zero disables it.
    pub jitter_std: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            num_cameras: 8,
            ranges: ViewRanges::default(),
            jitter_std: 0.0,
        }
    }
}

/// One synthetic camera view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct View {
    /// Root-centered 2D pose.
    pub pose: Pose2D,
    /// Ground truth in this camera's frame.
    pub camera: Skeleton3D,
    pub rotation: CameraRotation,
}

/// Places a root-centered skeleton at distance `d` on the optical axis and
/// images it through `rot`.
pub fn view_from_rotation(sk: &Skeleton3D, rot: &CameraRotation, cfg: &LiftConfig) -> Result<View> {
    let placed = sk.translated(cfg.pivot());
    let camera = rotate_about_pivot(&placed, rot, cfg).skeleton;
    let pose = perspective_project(&camera)?.centered();
    Ok(View {
        pose,
        camera,
        rotation: *rot,
    })
}

pub fn augment_views<R: Rng + ?Sized>(
    sk: &Skeleton3D,
    rng: &mut R,
    lift: &LiftConfig,
    cfg: &ViewConfig,
) -> Result<Vec<View>> {
    let jitter = (cfg.jitter_std > 0.0).then(|| Normal::new(0.0, cfg.jitter_std).expect("positive std"));
    (0..cfg.num_cameras)
        .map(|_| {
            let rot = cfg.ranges.sample(rng, lift.elevation_sense);
            let mut v = view_from_rotation(sk, &rot, lift)?;
            if let Some(n) = &jitter {
                for j in &mut v.pose.joints {
                    j[0] += n.sample(rng);
                    j[1] += n.sample(rng);
                }
                v.pose = v.pose.centered();
            }
            Ok(v)
        })
        .collect()
}
