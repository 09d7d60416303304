//! Camera-frame geometry of the lifting pipeline.
//!
//! Conventions: a unit-focal-length camera sits at the origin looking down
//! +Z; X is image-horizontal and Y image-vertical. A skeleton is hypothesized
//! around the pivot `T = (0, 0, d)` and re-imaged after rotating about that
//! pivot. Every differentiable operation comes with a vector-Jacobian product
//! (`*_vjp`) for the backward pass, and the small per-joint Jacobians are
//! exposed for gradient checking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 14;
/// Width of a flattened 2D pose: `x1, y1, ..., x14, y14`.
pub const POSE_DIM: usize = 2 * NUM_JOINTS;
/// Width of a flattened 3D skeleton: `X1, Y1, Z1, ..., X14, Y14, Z14`.
pub const SKELETON_DIM: usize = 3 * NUM_JOINTS;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Joint indices of the standard 14-joint layout.
pub mod joint {
    pub const HEAD: usize = 0;
    pub const NECK: usize = 1;
    pub const LEFT_SHOULDER: usize = 2;
    pub const LEFT_ELBOW: usize = 3;
    pub const LEFT_WRIST: usize = 4;
    pub const RIGHT_SHOULDER: usize = 5;
    pub const RIGHT_ELBOW: usize = 6;
    pub const RIGHT_WRIST: usize = 7;
    pub const LEFT_HIP: usize = 8;
    pub const LEFT_KNEE: usize = 9;
    pub const LEFT_ANKLE: usize = 10;
    pub const RIGHT_HIP: usize = 11;
    pub const RIGHT_KNEE: usize = 12;
    pub const RIGHT_ANKLE: usize = 13;
}

/// Joint naming and connectivity. The root (hip midpoint) is implicit and is
/// not one of the 14 joints; the kinematic tree is rooted at the left hip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkeletonTopology {
    pub name: &'static str,
    pub joint_names: [&'static str; NUM_JOINTS],
    pub parent_index: [Option<usize>; NUM_JOINTS],
    pub head_index: usize,
    pub left_hip_index: usize,
    pub right_hip_index: usize,
    pub symmetric_pairs: Vec<(usize, usize)>,
    /// `(child, parent)` for every non-root joint.
    pub bone_list: Vec<(usize, usize)>,
}

impl SkeletonTopology {
    pub const STANDARD_NAME: &'static str = "standard14";

    pub fn standard() -> Self {
        use joint::*;
        let mut parent_index = [None; NUM_JOINTS];
        parent_index[RIGHT_HIP] = Some(LEFT_HIP);
        parent_index[NECK] = Some(LEFT_HIP);
        parent_index[HEAD] = Some(NECK);
        parent_index[LEFT_SHOULDER] = Some(NECK);
        parent_index[RIGHT_SHOULDER] = Some(NECK);
        parent_index[LEFT_ELBOW] = Some(LEFT_SHOULDER);
        parent_index[RIGHT_ELBOW] = Some(RIGHT_SHOULDER);
        parent_index[LEFT_WRIST] = Some(LEFT_ELBOW);
        parent_index[RIGHT_WRIST] = Some(RIGHT_ELBOW);
        parent_index[LEFT_KNEE] = Some(LEFT_HIP);
        parent_index[RIGHT_KNEE] = Some(RIGHT_HIP);
        parent_index[LEFT_ANKLE] = Some(LEFT_KNEE);
        parent_index[RIGHT_ANKLE] = Some(RIGHT_KNEE);
        let bone_list = parent_index
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (c, p)))
            .collect();
        Self {
            name: Self::STANDARD_NAME,
            joint_names: [
                "head",
                "neck",
                "left_shoulder",
                "left_elbow",
                "left_wrist",
                "right_shoulder",
                "right_elbow",
                "right_wrist",
                "left_hip",
                "left_knee",
                "left_ankle",
                "right_hip",
                "right_knee",
                "right_ankle",
            ],
            parent_index,
            head_index: HEAD,
            left_hip_index: LEFT_HIP,
            right_hip_index: RIGHT_HIP,
            symmetric_pairs: vec![
                (LEFT_SHOULDER, RIGHT_SHOULDER),
                (LEFT_ELBOW, RIGHT_ELBOW),
                (LEFT_WRIST, RIGHT_WRIST),
                (LEFT_HIP, RIGHT_HIP),
                (LEFT_KNEE, RIGHT_KNEE),
                (LEFT_ANKLE, RIGHT_ANKLE),
            ],
            bone_list,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            Self::STANDARD_NAME => Ok(Self::standard()),
            other => Err(Error::config(format!("unknown topology '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |i: usize| i < NUM_JOINTS;
        let (h, l, r) = (self.head_index, self.left_hip_index, self.right_hip_index);
        if !(in_range(h) && in_range(l) && in_range(r)) || h == l || h == r || l == r {
            return Err(Error::domain("head/hip indices must be distinct and in range"));
        }
        let roots: Vec<usize> = (0..NUM_JOINTS).filter(|&j| self.parent_index[j].is_none()).collect();
        if roots.len() != 1 || (roots[0] != l && roots[0] != r) {
            return Err(Error::domain("kinematic tree must have exactly one root at a hip"));
        }
        for start in 0..NUM_JOINTS {
            let mut j = start;
            let mut hops = 0;
            while let Some(p) = self.parent_index[j] {
                if !in_range(p) {
                    return Err(Error::domain(format!("parent of joint {j} out of range")));
                }
                j = p;
                hops += 1;
                if hops > NUM_JOINTS {
                    return Err(Error::domain("cycle in parent graph"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2D {
    pub joints: [[f64; 2]; NUM_JOINTS],
}

impl Default for Pose2D {
    fn default() -> Self {
        Self {
            joints: [[0.0; 2]; NUM_JOINTS],
        }
    }
}

impl Pose2D {
    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() != POSE_DIM {
            return Err(Error::shape(format!(
                "2D pose needs {POSE_DIM} values, got {}",
                v.len()
            )));
        }
        let mut joints = [[0.0; 2]; NUM_JOINTS];
        for (j, c) in joints.iter_mut().zip(v.chunks_exact(2)) {
            *j = [c[0], c[1]];
        }
        Ok(Self { joints })
    }

    pub fn write_flat(&self, out: &mut [f64]) {
        for (c, j) in out.chunks_exact_mut(2).zip(&self.joints) {
            c.copy_from_slice(j);
        }
    }

    pub fn to_flat(&self) -> [f64; POSE_DIM] {
        let mut out = [0.0; POSE_DIM];
        self.write_flat(&mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().flatten().all(|v| v.is_finite())
    }

    /// Midpoint of the two hip joints.
    pub fn root(&self) -> [f64; 2] {
        let (l, r) = (self.joints[joint::LEFT_HIP], self.joints[joint::RIGHT_HIP]);
        [0.5 * (l[0] + r[0]), 0.5 * (l[1] + r[1])]
    }

    pub fn centered(&self) -> Self {
        let root = self.root();
        let mut out = *self;
        for j in &mut out.joints {
            j[0] -= root[0];
            j[1] -= root[1];
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.joints.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }
}

/// Per-joint depth offsets produced by the generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthOffsets(pub [f64; NUM_JOINTS]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Skeleton3D {
    pub joints: [Vec3; NUM_JOINTS],
}

impl Default for Skeleton3D {
    fn default() -> Self {
        Self {
            joints: [[0.0; 3]; NUM_JOINTS],
        }
    }
}

impl Skeleton3D {
    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() != SKELETON_DIM {
            return Err(Error::shape(format!(
                "3D skeleton needs {SKELETON_DIM} values, got {}",
                v.len()
            )));
        }
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, c) in joints.iter_mut().zip(v.chunks_exact(3)) {
            *j = [c[0], c[1], c[2]];
        }
        Ok(Self { joints })
    }

    pub fn to_flat(&self) -> [f64; SKELETON_DIM] {
        let mut out = [0.0; SKELETON_DIM];
        for (c, j) in out.chunks_exact_mut(3).zip(&self.joints) {
            c.copy_from_slice(j);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().flatten().all(|v| v.is_finite())
    }

    pub fn root(&self) -> Vec3 {
        let (l, r) = (self.joints[joint::LEFT_HIP], self.joints[joint::RIGHT_HIP]);
        [0.5 * (l[0] + r[0]), 0.5 * (l[1] + r[1]), 0.5 * (l[2] + r[2])]
    }

    pub fn translated(&self, t: Vec3) -> Self {
        let mut out = *self;
        for p in &mut out.joints {
            for k in 0..3 {
                p[k] += t[k];
            }
        }
        out
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        dist3(self.joints[a], self.joints[b])
    }
}

pub(crate) fn dist3(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Which way a positive elevation tips the subject.
///
/// With image Y pointing up, `Positive` tips the subject's top away from the
/// camera, i.e. the subject is seen from above. Image data whose Y axis points
/// down (pixel rows) should use `Negative` to keep that meaning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElevationSense {
    #[default]
    Positive,
    Negative,
}

impl ElevationSense {
    fn sign(self) -> f64 {
        match self {
            ElevationSense::Positive => 1.0,
            ElevationSense::Negative => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftConfig {
    /// Camera-to-skeleton distance `d`.
    pub distance: f64,
    #[serde(default)]
    pub elevation_sense: ElevationSense,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            distance: 10.0,
            elevation_sense: ElevationSense::Positive,
        }
    }
}

impl LiftConfig {
    /// Every hypothesized and rotated joint is kept at least this far in
    /// front of the camera.
    pub const MIN_DEPTH: f64 = 1.0;

    pub fn new(distance: f64) -> Result<Self> {
        let cfg = Self {
            distance,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance.is_finite() && self.distance > 1.0) {
            return Err(Error::domain(format!(
                "camera distance must be > 1, got {}",
                self.distance
            )));
        }
        Ok(())
    }

    pub fn pivot(&self) -> Vec3 {
        [0.0, 0.0, self.distance]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraRotation {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub matrix: Mat3,
}

impl CameraRotation {
    pub const MAX_ELEVATION_DEG: f64 = 20.0;

    pub fn identity() -> Self {
        Self {
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            matrix: IDENTITY,
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        mat_vec(&self.matrix, v)
    }

    pub fn apply_transpose(&self, v: Vec3) -> Vec3 {
        let m = &self.matrix;
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub(crate) fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rotation about the vertical (Y) axis.
pub fn rotation_y(angle_rad: f64) -> Mat3 {
    let (s, c) = angle_rad.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

/// Rotation about the horizontal (X) axis.
pub fn rotation_x(angle_rad: f64) -> Mat3 {
    let (s, c) = angle_rad.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

/// Rotation about the optical (Z) axis.
pub fn rotation_z(angle_rad: f64) -> Mat3 {
    let (s, c) = angle_rad.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// `R = R_elev(φ) · R_azim(θ)`: azimuth about the vertical axis first, then
/// elevation about the horizontal axis.
pub fn rotation_from_angles(azimuth_deg: f64, elevation_deg: f64) -> Result<CameraRotation> {
    rotation_from_angles_with(azimuth_deg, elevation_deg, ElevationSense::Positive)
}

pub fn rotation_from_angles_with(
    azimuth_deg: f64,
    elevation_deg: f64,
    sense: ElevationSense,
) -> Result<CameraRotation> {
    if !(azimuth_deg.is_finite() && (0.0..360.0).contains(&azimuth_deg)) {
        return Err(Error::domain(format!("azimuth {azimuth_deg} outside [0, 360)")));
    }
    if !(elevation_deg.is_finite() && (0.0..=CameraRotation::MAX_ELEVATION_DEG).contains(&elevation_deg)) {
        return Err(Error::domain(format!("elevation {elevation_deg} outside [0, 20]")));
    }
    let azim = rotation_y(azimuth_deg.to_radians());
    let elev = rotation_x(sense.sign() * elevation_deg.to_radians());
    Ok(CameraRotation {
        azimuth_deg,
        elevation_deg,
        matrix: mat_mul(&elev, &azim),
    })
}

/// Ranges the random views are drawn from, in degrees. Azimuth is half-open,
/// elevation closed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewRanges {
    pub azimuth_deg: (f64, f64),
    pub elevation_deg: (f64, f64),
}

impl Default for ViewRanges {
    fn default() -> Self {
        Self {
            azimuth_deg: (0.0, 360.0),
            elevation_deg: (0.0, 20.0),
        }
    }
}

impl ViewRanges {
    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = self.azimuth_deg;
        let (e0, e1) = self.elevation_deg;
        if !(0.0 <= a0 && a0 <= a1 && a1 <= 360.0) {
            return Err(Error::config(format!("azimuth range ({a0}, {a1}) not within [0, 360]")));
        }
        if !(0.0 <= e0 && e0 <= e1 && e1 <= CameraRotation::MAX_ELEVATION_DEG) {
            return Err(Error::config(format!(
                "elevation range ({e0}, {e1}) not within [0, 20]"
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, sense: ElevationSense) -> CameraRotation {
        let (a0, a1) = self.azimuth_deg;
        let (e0, e1) = self.elevation_deg;
        let mut az = a0 + (a1 - a0) * rng.random::<f64>();
        if az >= 360.0 {
            az = 0.0;
        }
        let el = e0 + (e1 - e0) * rng.random::<f64>();
        rotation_from_angles_with(az, el, sense).expect("validated view ranges")
    }
}

/// Depths together with the subgradient mask of the `max(0, ·)` clamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Depths {
    pub z: [f64; NUM_JOINTS],
    /// True where `d + o_i > 0`, i.e. where `∂z_i/∂o_i = 1`.
    pub active: [bool; NUM_JOINTS],
}

/// `z_i = max(0, d + o_i) + 1`.
pub fn depth_from_offset(offsets: &DepthOffsets, cfg: &LiftConfig) -> Result<Depths> {
    let mut z = [0.0; NUM_JOINTS];
    let mut active = [false; NUM_JOINTS];
    for (i, &o) in offsets.0.iter().enumerate() {
        if !o.is_finite() {
            return Err(Error::NonFinite(format!("depth offset of joint {i} is {o}")));
        }
        let shifted = cfg.distance + o;
        active[i] = shifted > 0.0;
        z[i] = shifted.max(0.0) + LiftConfig::MIN_DEPTH;
    }
    Ok(Depths { z, active })
}

/// Chain rule through the depth clamp: `∂L/∂o_i = ∂L/∂z_i · [d + o_i > 0]`.
pub fn depth_from_offset_vjp(depths: &Depths, grad_z: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
    let mut g = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        if depths.active[i] {
            g[i] = grad_z[i];
        }
    }
    g
}

/// `X_i = (z_i x_i, z_i y_i, z_i)`.
pub fn back_project(pose: &Pose2D, z: &[f64; NUM_JOINTS]) -> Result<Skeleton3D> {
    let mut out = Skeleton3D::default();
    for (i, &zi) in z.iter().enumerate() {
        if !(zi >= LiftConfig::MIN_DEPTH) {
            return Err(Error::domain(format!("depth of joint {i} is {zi}, must be >= 1")));
        }
        let [x, y] = pose.joints[i];
        out.joints[i] = [zi * x, zi * y, zi];
    }
    Ok(out)
}

/// Jacobian of one back-projected joint with respect to `(x_i, y_i, z_i)`;
/// rows are `X, Y, Z`.
pub fn back_project_jacobian(point: [f64; 2], z: f64) -> Mat3 {
    [[z, 0.0, point[0]], [0.0, z, point[1]], [0.0, 0.0, 1.0]]
}

/// Gradients of back-projection with respect to the pose and the depths.
pub fn back_project_vjp(pose: &Pose2D, z: &[f64; NUM_JOINTS], grad: &Skeleton3D) -> (Pose2D, [f64; NUM_JOINTS]) {
    let mut g_pose = Pose2D::default();
    let mut g_z = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        let [gx, gy, gz] = grad.joints[i];
        let [x, y] = pose.joints[i];
        g_pose.joints[i] = [z[i] * gx, z[i] * gy];
        g_z[i] = x * gx + y * gy + gz;
    }
    (g_pose, g_z)
}

/// `P_i = R(X_i - T) + T` without the depth clamp.
pub fn rotate_about_pivot_unclamped(sk: &Skeleton3D, rot: &CameraRotation, cfg: &LiftConfig) -> Skeleton3D {
    let t = cfg.pivot();
    let mut out = Skeleton3D::default();
    for (o, p) in out.joints.iter_mut().zip(&sk.joints) {
        let r = rot.apply([p[0] - t[0], p[1] - t[1], p[2] - t[2]]);
        *o = [r[0] + t[0], r[1] + t[1], r[2] + t[2]];
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotated {
    pub skeleton: Skeleton3D,
    /// True where `P_i^z` was raised to the minimum depth.
    pub clamped: [bool; NUM_JOINTS],
}

/// `P_i = R(X_i - T) + T`, then `P_i^z ← max(P_i^z, 1)`.
pub fn rotate_about_pivot(sk: &Skeleton3D, rot: &CameraRotation, cfg: &LiftConfig) -> Rotated {
    let mut skeleton = rotate_about_pivot_unclamped(sk, rot, cfg);
    let mut clamped = [false; NUM_JOINTS];
    for (c, p) in clamped.iter_mut().zip(skeleton.joints.iter_mut()) {
        if p[2] < LiftConfig::MIN_DEPTH {
            p[2] = LiftConfig::MIN_DEPTH;
            *c = true;
        }
    }
    Rotated { skeleton, clamped }
}

/// Backward through the pivoted rotation; the clamped depth component
/// carries no gradient.
pub fn rotate_about_pivot_vjp(rotated: &Rotated, rot: &CameraRotation, grad: &Skeleton3D) -> Skeleton3D {
    let mut out = Skeleton3D::default();
    for i in 0..NUM_JOINTS {
        let mut g = grad.joints[i];
        if rotated.clamped[i] {
            g[2] = 0.0;
        }
        out.joints[i] = rot.apply_transpose(g);
    }
    out
}

/// `p_i = (X_i / Z_i, Y_i / Z_i)`.
pub fn perspective_project(sk: &Skeleton3D) -> Result<Pose2D> {
    let mut out = Pose2D::default();
    for (i, p) in sk.joints.iter().enumerate() {
        if !(p[2] >= LiftConfig::MIN_DEPTH) {
            return Err(Error::domain(format!(
                "joint {i} at depth {}, must be >= 1 to project",
                p[2]
            )));
        }
        out.joints[i] = [p[0] / p[2], p[1] / p[2]];
    }
    Ok(out)
}

/// Jacobian of one projected joint with respect to `(X, Y, Z)`.
pub fn perspective_jacobian(p: Vec3) -> [[f64; 3]; 2] {
    let inv = 1.0 / p[2];
    let inv2 = inv * inv;
    [[inv, 0.0, -p[0] * inv2], [0.0, inv, -p[1] * inv2]]
}

pub fn perspective_project_vjp(sk: &Skeleton3D, grad: &Pose2D) -> Skeleton3D {
    let mut out = Skeleton3D::default();
    for i in 0..NUM_JOINTS {
        let p = sk.joints[i];
        let [gx, gy] = grad.joints[i];
        let inv = 1.0 / p[2];
        out.joints[i] = [gx * inv, gy * inv, -(gx * p[0] + gy * p[1]) * inv * inv];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose2D {
        let mut p = Pose2D::default();
        for j in &mut p.joints {
            *j = [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)];
        }
        p
    }

    #[test]
    fn standard_topology_is_valid() {
        let t = SkeletonTopology::standard();
        t.validate().unwrap();
        assert_eq!(t.bone_list.len(), NUM_JOINTS - 1);
        assert_eq!(t.joint_names[t.head_index], "head");
    }

    #[test]
    fn topology_rejects_cycles_and_bad_roots() {
        let mut t = SkeletonTopology::standard();
        t.parent_index[joint::LEFT_HIP] = Some(joint::RIGHT_HIP);
        assert!(t.validate().is_err());
        let mut t = SkeletonTopology::standard();
        t.parent_index[joint::HEAD] = None;
        assert!(t.validate().is_err());
    }

    #[test]
    fn depth_examples() {
        let cfg = LiftConfig::default();
        let d = depth_from_offset(&DepthOffsets([0.0; NUM_JOINTS]), &cfg).unwrap();
        assert!(d.z.iter().all(|&z| z == 11.0));
        assert!(d.active.iter().all(|&a| a));

        let d = depth_from_offset(&DepthOffsets([-10.0; NUM_JOINTS]), &cfg).unwrap();
        assert!(d.z.iter().all(|&z| z == 1.0));
        assert!(d.active.iter().all(|&a| !a));
        let g = depth_from_offset_vjp(&d, &[1.0; NUM_JOINTS]);
        assert!(g.iter().all(|&g| g == 0.0));

        let d = depth_from_offset(&DepthOffsets([-12.0; NUM_JOINTS]), &cfg).unwrap();
        assert!(d.z.iter().all(|&z| z == 1.0));
    }

    #[test]
    fn depth_rejects_non_finite() {
        let mut o = [0.0; NUM_JOINTS];
        o[3] = f64::NAN;
        assert!(matches!(
            depth_from_offset(&DepthOffsets(o), &LiftConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn back_project_examples() {
        let mut pose = Pose2D::default();
        pose.joints[0] = [0.1, 0.2];
        pose.joints[2] = [-0.05, 0.03];
        let mut z = [11.0; NUM_JOINTS];
        z[0] = 10.0;
        z[2] = 9.5;
        let sk = back_project(&pose, &z).unwrap();
        assert_eq!(sk.joints[0], [1.0, 2.0, 10.0]);
        assert_eq!(sk.joints[1], [0.0, 0.0, 11.0]);
        let p = sk.joints[2];
        assert!((p[0] + 0.475).abs() < 1e-15 && (p[1] - 0.285).abs() < 1e-15 && p[2] == 9.5);
    }

    #[test]
    fn back_project_rejects_shallow_depth() {
        let mut z = [2.0; NUM_JOINTS];
        z[5] = 0.5;
        assert!(back_project(&Pose2D::default(), &z).is_err());
    }

    #[test]
    fn project_examples() {
        let mut sk = Skeleton3D::default();
        for p in &mut sk.joints {
            *p = [0.0, 0.0, 4.0];
        }
        sk.joints[0] = [1.0, 2.0, 10.0];
        let p = perspective_project(&sk).unwrap();
        assert!((p.joints[0][0] - 0.1).abs() < 1e-16 && (p.joints[0][1] - 0.2).abs() < 1e-16);
        assert_eq!(p.joints[1], [0.0, 0.0]);

        sk.joints[4][2] = 0.999;
        assert!(perspective_project(&sk).is_err());
    }

    #[test]
    fn rotation_examples() {
        let r = rotation_from_angles(0.0, 0.0).unwrap();
        assert_eq!(r.matrix, IDENTITY);

        let r = rotation_from_angles(180.0, 0.0).unwrap();
        let cfg = LiftConfig::default();
        let mut sk = Skeleton3D::default();
        sk.joints[0] = [0.3, -0.2, 10.7];
        for p in sk.joints.iter_mut().skip(1) {
            *p = [0.0, 0.0, 10.0];
        }
        let out = rotate_about_pivot(&sk, &r, &cfg).skeleton;
        let p = out.joints[0];
        assert!((p[0] + 0.3).abs() < 1e-12);
        assert!((p[1] + 0.2).abs() < 1e-12);
        assert!((p[2] - 9.3).abs() < 1e-12);

        assert!(rotation_from_angles(360.0, 0.0).is_err());
        assert!(rotation_from_angles(10.0, 20.5).is_err());
        assert!(rotation_from_angles(10.0, -1.0).is_err());
    }

    #[test]
    fn positive_elevation_tips_top_away() {
        let r = rotation_from_angles(0.0, 20.0).unwrap();
        let up = r.apply([0.0, 1.0, 0.0]);
        assert!(up[2] > 0.0);
        let r = rotation_from_angles_with(0.0, 20.0, ElevationSense::Negative).unwrap();
        assert!(r.apply([0.0, 1.0, 0.0])[2] < 0.0);
    }

    #[test]
    fn rotations_are_proper_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = ViewRanges::default().sample(&mut rng, ElevationSense::Positive);
            let m = nalgebra::Matrix3::from_fn(|i, j| r.matrix[i][j]);
            let err = (m.transpose() * m - nalgebra::Matrix3::identity()).abs().max();
            assert!(err < 1e-12);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_rotation_and_pivot_fixed_point() {
        let cfg = LiftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pose = random_pose(&mut rng);
        let sk = back_project(&pose, &[10.5; NUM_JOINTS]).unwrap();
        let out = rotate_about_pivot(&sk, &CameraRotation::identity(), &cfg);
        assert_eq!(out.skeleton, sk);

        let mut pivot = Skeleton3D::default();
        pivot.joints = [cfg.pivot(); NUM_JOINTS];
        let r = ViewRanges::default().sample(&mut rng, ElevationSense::Positive);
        assert_eq!(rotate_about_pivot(&pivot, &r, &cfg).skeleton, pivot);
    }

    #[test]
    fn clamp_forces_minimum_depth() {
        let cfg = LiftConfig::default();
        let mut sk = Skeleton3D {
            joints: [[0.0, 0.0, 10.0]; NUM_JOINTS],
        };
        sk.joints[0] = [0.0, 0.0, 20.0];
        let r = rotation_from_angles(180.0, 0.0).unwrap();
        let out = rotate_about_pivot(&sk, &r, &cfg);
        assert!(out.clamped[0]);
        assert_eq!(out.skeleton.joints[0][2], 1.0);
        assert!(!out.clamped[1]);
        let g = rotate_about_pivot_vjp(
            &out,
            &r,
            &Skeleton3D {
                joints: [[0.0, 0.0, 1.0]; NUM_JOINTS],
            },
        );
        assert_eq!(g.joints[0], [0.0, 0.0, 0.0]);
    }
}
