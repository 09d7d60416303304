use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LiftConfig, Pose2D, SkeletonTopology};

/// The global 2D scale fitted on a training set, reused verbatim for every
/// other set fed to the same model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub scale: f64,
    pub distance: f64,
    pub topology: String,
}

impl NormStats {
    /// Root-centers each pose, then multiplies by the stored scale.
    pub fn apply(&self, poses: &[Pose2D], topology: &SkeletonTopology) -> Result<Vec<Pose2D>> {
        if topology.name != self.topology {
            return Err(Error::config(format!(
                "poses use topology '{}', normalization was fitted on '{}'",
                topology.name, self.topology
            )));
        }
        poses
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if !p.is_finite() {
                    return Err(Error::NonFinite(format!("pose {i}")));
                }
                Ok(center(p, topology).scaled(self.scale))
            })
            .collect()
    }

    /// Maps normalized coordinates back to the input units.
    pub fn invert(&self, pose: &Pose2D) -> Pose2D {
        pose.scaled(1.0 / self.scale)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let stats: NormStats = toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if !(stats.scale.is_finite() && stats.scale > 0.0) {
            return Err(Error::config(format!("{}: scale must be positive", path.display())));
        }
        Ok(stats)
    }
}

fn center(p: &Pose2D, topology: &SkeletonTopology) -> Pose2D {
    let l = p.joints[topology.left_hip_index];
    let r = p.joints[topology.right_hip_index];
    let root = [(l[0] + r[0]) / 2.0, (l[1] + r[1]) / 2.0];
    let mut out = *p;
    for j in &mut out.joints {
        j[0] -= root[0];
        j[1] -= root[1];
    }
    out
}

/// Centers every pose on its hip midpoint and fits one global scale so the
/// mean head-root distance of the set becomes `1/d`.
pub fn normalize(poses: &[Pose2D], topology: &SkeletonTopology, cfg: &LiftConfig) -> Result<(Vec<Pose2D>, NormStats)> {
    cfg.validate()?;
    let mut total = 0.0;
    for (i, p) in poses.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("pose {i}")));
        }
        let c = center(p, topology);
        let [hx, hy] = c.joints[topology.head_index];
        total += hx.hypot(hy);
    }
    let mean = total / poses.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Degenerate(
            "head coincides with the root in every pose; cannot fit a scale".into(),
        ));
    }
    let stats = NormStats {
        scale: 1.0 / (cfg.distance * mean),
        distance: cfg.distance,
        topology: topology.name.to_string(),
    };
    let out = stats.apply(poses, topology)?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::joint;
    use proptest::prelude::*;

    fn mean_head_root(poses: &[Pose2D]) -> f64 {
        poses
            .iter()
            .map(|p| {
                let [hx, hy] = p.joints[joint::HEAD];
                let [rx, ry] = p.root();
                (hx - rx).hypot(hy - ry)
            })
            .sum::<f64>()
            / poses.len() as f64
    }

    #[test]
    fn single_pose_in_pixels() {
        let mut p = Pose2D::default();
        for j in &mut p.joints {
            *j = [320.0, 240.0];
        }
        p.joints[joint::HEAD] = [320.0, 340.0];
        let (out, stats) = normalize(&[p], &SkeletonTopology::standard(), &LiftConfig::default()).unwrap();
        assert!((stats.scale - 1e-3).abs() < 1e-18);
        assert!((out[0].joints[joint::HEAD][1] - 0.1).abs() < 1e-15);
        assert_eq!(out[0].joints[joint::HEAD][0], 0.0);
    }

    #[test]
    fn already_normalized_set_keeps_scale_one() {
        let mut a = Pose2D::default();
        a.joints[joint::HEAD] = [0.0, 0.05];
        let mut b = Pose2D::default();
        b.joints[joint::HEAD] = [0.15, 0.0];
        let (out, stats) = normalize(&[a, b], &SkeletonTopology::standard(), &LiftConfig::default()).unwrap();
        assert!((stats.scale - 1.0).abs() < 1e-15);
        assert!((out[0].joints[joint::HEAD][1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn degenerate_set_is_rejected() {
        let poses = vec![Pose2D::default(); 3];
        let err = normalize(&poses, &SkeletonTopology::standard(), &LiftConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn stats_file_round_trip() {
        let stats = NormStats {
            scale: 0.1 + 0.2,
            distance: 10.0,
            topology: SkeletonTopology::STANDARD_NAME.into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("norm.toml");
        stats.save(&path).unwrap();
        assert_eq!(NormStats::load(&path).unwrap(), stats);
    }

    proptest! {
        #[test]
        fn normalized_sets_hit_target(
            coords in prop::collection::vec(-500.0f64..500.0, 28 * 3),
            offset in -1e3f64..1e3,
        ) {
            let poses: Vec<Pose2D> = coords
                .chunks(28)
                .map(|c| {
                    let v: Vec<f64> = c.iter().map(|x| x + offset).collect();
                    Pose2D::from_flat(&v).unwrap()
                })
                .collect();
            let (out, _) = normalize(&poses, &SkeletonTopology::standard(), &LiftConfig::default()).unwrap();
            prop_assert!((mean_head_root(&out) - 0.1).abs() < 1e-12);
            for p in &out {
                let [rx, ry] = p.root();
                prop_assert!(rx.abs() < 1e-9 && ry.abs() < 1e-9);
            }
        }
    }
}
