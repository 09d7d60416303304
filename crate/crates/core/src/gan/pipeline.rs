use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    back_project, back_project_vjp, depth_from_offset, depth_from_offset_vjp, joint, perspective_project,
    perspective_project_vjp, rotate_about_pivot, rotate_about_pivot_vjp, CameraRotation, DepthOffsets, Depths,
    LiftConfig, Pose2D, Rotated, Skeleton3D, ViewRanges, NUM_JOINTS, POSE_DIM,
};
use crate::nn::{GeneratorNet, Matrix, Mode};

/// How fake samples are produced from lifted skeletons.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub ranges: ViewRanges,
    /// Re-center each projected pose on its hip midpoint, matching how real
    /// poses are presented to the discriminator.
    pub center_fakes: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            ranges: ViewRanges::default(),
            center_fakes: true,
        }
    }
}

/// Skeletons lifted from a pose batch, with what the backward pass needs.
#[derive(Clone, Debug)]
pub struct Lifted {
    pub poses: Vec<Pose2D>,
    pub depths: Vec<Depths>,
    pub skeletons: Vec<Skeleton3D>,
}

pub fn poses_from_matrix(m: &Matrix) -> Result<Vec<Pose2D>> {
    if m.cols() != POSE_DIM {
        return Err(Error::shape(format!(
            "pose batch has {} columns, expected {POSE_DIM}",
            m.cols()
        )));
    }
    m.iter_rows().map(Pose2D::from_flat).collect()
}

pub fn poses_to_matrix(poses: &[Pose2D]) -> Matrix {
    let mut m = Matrix::zeros(poses.len(), POSE_DIM);
    for (i, p) in poses.iter().enumerate() {
        p.write_flat(m.row_mut(i));
    }
    m
}

/// Depth from offsets, then back-projection, for every row.
pub fn lift_offsets(poses: &Matrix, offsets: &Matrix, cfg: &LiftConfig) -> Result<Lifted> {
    if offsets.shape() != (poses.rows(), NUM_JOINTS) {
        return Err(Error::shape(format!(
            "offsets are {:?}, expected ({}, {NUM_JOINTS})",
            offsets.shape(),
            poses.rows()
        )));
    }
    let poses = poses_from_matrix(poses)?;
    let mut depths = Vec::with_capacity(poses.len());
    let mut skeletons = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let mut o = [0.0; NUM_JOINTS];
        o.copy_from_slice(offsets.row(i));
        let d = depth_from_offset(&DepthOffsets(o), cfg)?;
        skeletons.push(back_project(pose, &d.z)?);
        depths.push(d);
    }
    Ok(Lifted {
        poses,
        depths,
        skeletons,
    })
}

impl Lifted {
    /// Gradient with respect to the offsets, given gradients on the skeletons.
    pub fn backward(&self, grad: &[Skeleton3D]) -> Matrix {
        assert_eq!(grad.len(), self.skeletons.len(), "one gradient per skeleton");
        let mut out = Matrix::zeros(grad.len(), NUM_JOINTS);
        for (i, g) in grad.iter().enumerate() {
            let (_, g_z) = back_project_vjp(&self.poses[i], &self.depths[i].z, g);
            out.row_mut(i)
                .copy_from_slice(&depth_from_offset_vjp(&self.depths[i], &g_z));
        }
        out
    }
}

/// Generator, depth and back-projection composed.
pub fn lift(gen: &mut GeneratorNet, poses: &Matrix, mode: Mode, cfg: &LiftConfig) -> Result<Vec<Skeleton3D>> {
    let offsets = gen.apply(poses, mode)?;
    gen.net.clear_cache();
    Ok(lift_offsets(poses, &offsets, cfg)?.skeletons)
}

/// Fake 2D poses made by re-imaging skeletons from new viewpoints.
#[derive(Clone, Debug)]
pub struct Projected {
    pub rotations: Vec<CameraRotation>,
    rotated: Vec<Rotated>,
    centered: bool,
    pub poses: Matrix,
}

pub fn project_with(
    skeletons: &[Skeleton3D],
    rotations: Vec<CameraRotation>,
    cfg: &LiftConfig,
    center: bool,
) -> Result<Projected> {
    assert_eq!(skeletons.len(), rotations.len(), "one rotation per skeleton");
    let mut poses = Matrix::zeros(skeletons.len(), POSE_DIM);
    let mut rotated = Vec::with_capacity(skeletons.len());
    for (i, (sk, rot)) in skeletons.iter().zip(&rotations).enumerate() {
        let r = rotate_about_pivot(sk, rot, cfg);
        let mut p = perspective_project(&r.skeleton)?;
        if center {
            p = p.centered();
        }
        p.write_flat(poses.row_mut(i));
        rotated.push(r);
    }
    Ok(Projected {
        rotations,
        rotated,
        centered: center,
        poses,
    })
}

/// Draws an independent rotation per skeleton and projects.
pub fn random_project<R: Rng + ?Sized>(
    skeletons: &[Skeleton3D],
    rng: &mut R,
    lift_cfg: &LiftConfig,
    cfg: &ProjectionConfig,
) -> Result<Projected> {
    let rotations = (0..skeletons.len())
        .map(|_| cfg.ranges.sample(rng, lift_cfg.elevation_sense))
        .collect();
    project_with(skeletons, rotations, lift_cfg, cfg.center_fakes)
}

/// `∂L/∂p` through `p_j - (p_lhip + p_rhip)/2`.
pub fn center_vjp(grad: &Pose2D) -> Pose2D {
    let mut sum = [0.0; 2];
    for g in &grad.joints {
        sum[0] += g[0];
        sum[1] += g[1];
    }
    let mut out = *grad;
    for h in [joint::LEFT_HIP, joint::RIGHT_HIP] {
        out.joints[h][0] -= 0.5 * sum[0];
        out.joints[h][1] -= 0.5 * sum[1];
    }
    out
}

impl Projected {
    /// Gradient with respect to the input skeletons.
    pub fn backward(&self, grad_poses: &Matrix) -> Result<Vec<Skeleton3D>> {
        let grads = poses_from_matrix(grad_poses)?;
        assert_eq!(grads.len(), self.rotated.len(), "one gradient row per fake");
        Ok(grads
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let g = if self.centered { center_vjp(g) } else { *g };
                let g = perspective_project_vjp(&self.rotated[i].skeleton, &g);
                rotate_about_pivot_vjp(&self.rotated[i], &self.rotations[i], &g)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetOptions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..POSE_DIM).map(|_| rng.random_range(-0.12..0.12)).collect())
            .collect();
        Matrix::from_rows(&rows)
    }

    #[test]
    fn zero_offsets_place_joints_at_eleven() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_batch(&mut rng, 3);
        let lifted = lift_offsets(&x, &Matrix::zeros(3, NUM_JOINTS), &LiftConfig::default()).unwrap();
        for (sk, p) in lifted.skeletons.iter().zip(&lifted.poses) {
            for (j, q) in sk.joints.iter().zip(&p.joints) {
                assert_eq!(j[2], 11.0);
                assert_eq!(j[0], 11.0 * q[0]);
                assert_eq!(j[1], 11.0 * q[1]);
            }
        }
    }

    #[test]
    fn identity_projection_recovers_input() {
        let opts = NetOptions::default();
        let mut g = GeneratorNet::new(16, 2, &opts);
        g.init_parameters(3, &opts);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_batch(&mut rng, 8);
        let cfg = LiftConfig::default();
        let sk = lift(&mut g, &x, Mode::Inference, &cfg).unwrap();
        let p = project_with(&sk, vec![CameraRotation::identity(); 8], &cfg, false).unwrap();
        for (a, b) in p.poses.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_projection_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_batch(&mut rng, 6);
        let cfg = LiftConfig::default();
        let sk = lift_offsets(&x, &Matrix::zeros(6, NUM_JOINTS), &cfg).unwrap().skeletons;
        let pc = ProjectionConfig {
            center_fakes: false,
            ..Default::default()
        };
        let a = random_project(&sk, &mut ChaCha8Rng::seed_from_u64(9), &cfg, &pc).unwrap();
        let b = random_project(&sk, &mut ChaCha8Rng::seed_from_u64(9), &cfg, &pc).unwrap();
        assert_eq!(a.poses, b.poses);
        assert_eq!(a.rotations, b.rotations);
        assert!(a.poses.is_finite());
        let moved = poses_from_matrix(&a.poses)
            .unwrap()
            .iter()
            .filter(|p| p.root()[0].abs() > 1e-6)
            .count();
        assert!(moved > 0);
    }

    #[test]
    fn centered_fakes_have_root_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_batch(&mut rng, 5);
        let cfg = LiftConfig::default();
        let sk = lift_offsets(&x, &Matrix::zeros(5, NUM_JOINTS), &cfg).unwrap().skeletons;
        let p = random_project(&sk, &mut rng, &cfg, &ProjectionConfig::default()).unwrap();
        for pose in poses_from_matrix(&p.poses).unwrap() {
            let r = pose.root();
            assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15);
        }
    }
}
