//! A parametric human skeleton sampled by forward kinematics.
//!
//! Canonical frame: Y up, the subject faces −Z (toward a camera at the
//! origin once placed), the subject's left is −X. Lengths are in skeleton
//! units where the head-root distance is about 1.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{joint, mat_mul, mat_vec, rotation_x, rotation_y, rotation_z, Mat3, Skeleton3D, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthPrior {
    pub mean: f64,
    pub std: f64,
}

impl LengthPrior {
    const fn rel(mean: f64) -> Self {
        Self { mean, std: 0.05 * mean }
    }
}

/// A truncated normal over an angle, in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleLimit {
    pub mean_deg: f64,
    pub std_deg: f64,
    pub min_deg: f64,
    pub max_deg: f64,
}

const fn lim(mean_deg: f64, std_deg: f64, min_deg: f64, max_deg: f64) -> AngleLimit {
    AngleLimit {
        mean_deg,
        std_deg,
        min_deg,
        max_deg,
    }
}

impl AngleLimit {
    pub fn contains(&self, deg: f64) -> bool {
        (self.min_deg..=self.max_deg).contains(&deg)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.std_deg == 0.0 {
            return self.mean_deg.clamp(self.min_deg, self.max_deg);
        }
        for _ in 0..1000 {
            let z: f64 = StandardNormal.sample(rng);
            let v = self.mean_deg + self.std_deg * z;
            if self.contains(v) {
                return v;
            }
        }
        rng.random_range(self.min_deg..=self.max_deg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoneLengths {
    /// Hip midpoint to neck.
    pub spine: f64,
    pub neck: f64,
    pub head: f64,
    /// Neck to either shoulder.
    pub shoulder: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Hip midpoint to either hip.
    pub hip: f64,
    pub thigh: f64,
    pub shin: f64,
}

/// Per-bone length priors. Left and right bones share one entry, so
/// symmetric pairs always share a mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BonePriors {
    pub spine: LengthPrior,
    pub neck: LengthPrior,
    pub head: LengthPrior,
    pub shoulder: LengthPrior,
    pub upper_arm: LengthPrior,
    pub forearm: LengthPrior,
    pub hip: LengthPrior,
    pub thigh: LengthPrior,
    pub shin: LengthPrior,
}

impl Default for BonePriors {
    fn default() -> Self {
        Self {
            spine: LengthPrior::rel(0.62),
            neck: LengthPrior::rel(0.12),
            head: LengthPrior::rel(0.25),
            shoulder: LengthPrior::rel(0.19),
            upper_arm: LengthPrior::rel(0.30),
            forearm: LengthPrior::rel(0.27),
            hip: LengthPrior::rel(0.12),
            thigh: LengthPrior::rel(0.45),
            shin: LengthPrior::rel(0.43),
        }
    }
}

/// Articulation limits relative to the parent segment. Arm and leg entries
/// apply to both sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArticulationPriors {
    /// Forward lean of the trunk.
    pub torso_pitch: AngleLimit,
    pub torso_roll: AngleLimit,
    pub torso_twist: AngleLimit,
    pub head_pitch: AngleLimit,
    pub head_roll: AngleLimit,
    /// Forward raise of the upper arm.
    pub arm_flex: AngleLimit,
    pub arm_abduction: AngleLimit,
    pub elbow_flex: AngleLimit,
    pub arm_twist: AngleLimit,
    pub leg_flex: AngleLimit,
    pub leg_abduction: AngleLimit,
    pub knee_flex: AngleLimit,
    /// Forward lean of the whole body about the hip midpoint.
    pub body_pitch: AngleLimit,
    /// Sideways lean of the whole body about the hip midpoint.
    pub body_roll: AngleLimit,
}

impl Default for ArticulationPriors {
    fn default() -> Self {
        Self {
            torso_pitch: lim(10.0, 15.0, -15.0, 60.0),
            torso_roll: lim(0.0, 6.0, -20.0, 20.0),
            torso_twist: lim(0.0, 12.0, -40.0, 40.0),
            head_pitch: lim(10.0, 10.0, -20.0, 45.0),
            head_roll: lim(0.0, 8.0, -25.0, 25.0),
            arm_flex: lim(15.0, 40.0, -45.0, 170.0),
            arm_abduction: lim(15.0, 25.0, 0.0, 110.0),
            elbow_flex: lim(30.0, 35.0, 0.0, 145.0),
            arm_twist: lim(0.0, 30.0, -60.0, 90.0),
            leg_flex: lim(10.0, 25.0, -30.0, 120.0),
            leg_abduction: lim(5.0, 8.0, -10.0, 45.0),
            knee_flex: lim(15.0, 30.0, 0.0, 150.0),
            body_pitch: lim(0.0, 10.0, -30.0, 30.0),
            body_roll: lim(0.0, 10.0, -30.0, 30.0),
        }
    }
}

/// Every angle drawn for one skeleton, in degrees.
pub const ANGLE_NAMES: [&str; NUM_ANGLES] = [
    "torso_pitch",
    "torso_roll",
    "torso_twist",
    "head_pitch",
    "head_roll",
    "left_arm_flex",
    "left_arm_abduction",
    "left_elbow_flex",
    "left_arm_twist",
    "right_arm_flex",
    "right_arm_abduction",
    "right_elbow_flex",
    "right_arm_twist",
    "left_leg_flex",
    "left_leg_abduction",
    "left_knee_flex",
    "right_leg_flex",
    "right_leg_abduction",
    "right_knee_flex",
    "body_pitch",
    "body_roll",
];
pub const NUM_ANGLES: usize = 21;

impl ArticulationPriors {
    /// Limits in the order of [`ANGLE_NAMES`].
    pub fn limits(&self) -> [AngleLimit; NUM_ANGLES] {
        let arm = [self.arm_flex, self.arm_abduction, self.elbow_flex, self.arm_twist];
        let leg = [self.leg_flex, self.leg_abduction, self.knee_flex];
        let mut out = [self.torso_pitch; NUM_ANGLES];
        out[..5].copy_from_slice(&[
            self.torso_pitch,
            self.torso_roll,
            self.torso_twist,
            self.head_pitch,
            self.head_roll,
        ]);
        out[5..9].copy_from_slice(&arm);
        out[9..13].copy_from_slice(&arm);
        out[13..16].copy_from_slice(&leg);
        out[16..19].copy_from_slice(&leg);
        out[19] = self.body_pitch;
        out[20] = self.body_roll;
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonPrior {
    pub bones: BonePriors,
    pub angles: ArticulationPriors,
    /// Correlation of left and right length noise; 1 makes the two sides
    /// identical.
    pub symmetry_coupling: f64,
    /// Multiplies every angle standard deviation.
    pub spread: f64,
}

impl Default for SkeletonPrior {
    fn default() -> Self {
        Self {
            bones: BonePriors::default(),
            angles: ArticulationPriors::default(),
            symmetry_coupling: 1.0,
            spread: 1.0,
        }
    }
}

impl SkeletonPrior {
    /// No variation at all: every draw is the mean skeleton.
    pub fn rigid() -> Self {
        let mut p = Self {
            spread: 0.0,
            ..Self::default()
        };
        let b = &mut p.bones;
        for l in [
            &mut b.spine,
            &mut b.neck,
            &mut b.head,
            &mut b.shoulder,
            &mut b.upper_arm,
            &mut b.forearm,
            &mut b.hip,
            &mut b.thigh,
            &mut b.shin,
        ] {
            l.std = 0.0;
        }
        p
    }

    fn bones(&self) -> [LengthPrior; 9] {
        let b = &self.bones;
        [
            b.spine,
            b.neck,
            b.head,
            b.shoulder,
            b.upper_arm,
            b.forearm,
            b.hip,
            b.thigh,
            b.shin,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for l in self.bones() {
            if !(l.mean > 0.0 && l.std >= 0.0 && l.mean.is_finite() && l.std.is_finite()) {
                return Err(Error::config("bone lengths need a positive mean and non-negative std"));
            }
        }
        for (name, a) in ANGLE_NAMES.iter().zip(self.angles.limits()) {
            if !(a.min_deg <= a.mean_deg && a.mean_deg <= a.max_deg && a.std_deg >= 0.0) {
                return Err(Error::config(format!("angle limit {name} is inconsistent")));
            }
        }
        if !(0.0..=1.0).contains(&self.symmetry_coupling) || !(self.spread >= 0.0) {
            return Err(Error::config("symmetry_coupling must be in [0, 1], spread >= 0"));
        }
        Ok(())
    }
}

/// One draw from the prior with everything that was sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSkeleton {
    /// Root (hip midpoint) at the origin.
    pub skeleton: Skeleton3D,
    pub angles_deg: [f64; NUM_ANGLES],
    /// Bone lengths before the final head-root rescale, left side then right
    /// side for the limb entries.
    pub left: BoneLengths,
    pub right: BoneLengths,
}

impl SampledSkeleton {
    /// A coarse posture label for per-class reports.
    pub fn posture_class(&self) -> &'static str {
        let a = &self.angles_deg;
        let (l_arm, r_arm) = (a[5], a[9]);
        let (l_leg, r_leg, l_knee, r_knee) = (a[13], a[16], a[15], a[18]);
        if l_arm > 90.0 || r_arm > 90.0 {
            "arms_raised"
        } else if l_knee > 60.0 || r_knee > 60.0 {
            "crouching"
        } else if (l_leg - r_leg).abs() > 30.0 {
            "striding"
        } else {
            "standing"
        }
    }
}

pub const POSTURE_CLASSES: [&str; 4] = ["arms_raised", "crouching", "striding", "standing"];

fn mul(a: Mat3, b: Mat3) -> Mat3 {
    mat_mul(&a, &b)
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

const UP: Vec3 = [0.0, 1.0, 0.0];
const DOWN: Vec3 = [0.0, -1.0, 0.0];

pub fn sample_skeleton<R: Rng + ?Sized>(prior: &SkeletonPrior, rng: &mut R) -> SampledSkeleton {
    let c = prior.symmetry_coupling;
    let mut draw_pair = |l: LengthPrior| -> (f64, f64) {
        let nl: f64 = StandardNormal.sample(rng);
        let ni: f64 = StandardNormal.sample(rng);
        let nr = c * nl + (1.0 - c * c).sqrt() * ni;
        let floor = 0.1 * l.mean;
        ((l.mean + l.std * nl).max(floor), (l.mean + l.std * nr).max(floor))
    };
    let b = &prior.bones;
    let pairs: Vec<(f64, f64)> = [
        b.spine,
        b.neck,
        b.head,
        b.shoulder,
        b.upper_arm,
        b.forearm,
        b.hip,
        b.thigh,
        b.shin,
    ]
    .into_iter()
    .map(&mut draw_pair)
    .collect();
    let side_lengths = |pick: fn(&(f64, f64)) -> f64| BoneLengths {
        spine: pick(&pairs[0]),
        neck: pick(&pairs[1]),
        head: pick(&pairs[2]),
        shoulder: pick(&pairs[3]),
        upper_arm: pick(&pairs[4]),
        forearm: pick(&pairs[5]),
        hip: pick(&pairs[6]),
        thigh: pick(&pairs[7]),
        shin: pick(&pairs[8]),
    };
    let left = side_lengths(|p| p.0);
    let right = side_lengths(|p| p.1);

    let mut angles = [0.0; NUM_ANGLES];
    for (a, l) in angles.iter_mut().zip(prior.angles.limits()) {
        let l = AngleLimit {
            std_deg: l.std_deg * prior.spread,
            ..l
        };
        *a = l.sample(rng);
    }
    let rad: Vec<f64> = angles.iter().map(|a| a.to_radians()).collect();

    let mut j = [[0.0; 3]; 14];
    let (pitch, roll, twist) = (rad[0], rad[1], rad[2]);
    let torso = mul(mul(rotation_z(roll), rotation_x(-pitch)), rotation_y(twist));
    let neck = scale(mat_vec(&torso, UP), left.spine);
    j[joint::NECK] = neck;
    let head_rot = mul(mul(torso, rotation_x(-rad[3])), rotation_z(rad[4]));
    j[joint::HEAD] = add(neck, scale(mat_vec(&head_rot, UP), left.neck + left.head));

    let arms = [
        (
            -1.0,
            &left,
            [joint::LEFT_SHOULDER, joint::LEFT_ELBOW, joint::LEFT_WRIST],
            5,
        ),
        (
            1.0,
            &right,
            [joint::RIGHT_SHOULDER, joint::RIGHT_ELBOW, joint::RIGHT_WRIST],
            9,
        ),
    ];
    for (side, len, [s, e, w], k) in arms {
        let shoulder = add(neck, mat_vec(&torso, [side * len.shoulder, -0.03, 0.0]));
        j[s] = shoulder;
        let (flex, abd, elbow, tw) = (rad[k], rad[k + 1], rad[k + 2], rad[k + 3]);
        let upper = mul(mul(torso, rotation_x(-flex)), rotation_z(side * abd));
        let elbow_pos = add(shoulder, scale(mat_vec(&upper, DOWN), len.upper_arm));
        j[e] = elbow_pos;
        let fore = mul(mul(upper, rotation_y(side * tw)), rotation_x(-elbow));
        j[w] = add(elbow_pos, scale(mat_vec(&fore, DOWN), len.forearm));
    }
    let legs = [
        (-1.0, &left, [joint::LEFT_HIP, joint::LEFT_KNEE, joint::LEFT_ANKLE], 13),
        (
            1.0,
            &right,
            [joint::RIGHT_HIP, joint::RIGHT_KNEE, joint::RIGHT_ANKLE],
            16,
        ),
    ];
    for (side, len, [h, k, a], i) in legs {
        let hip = [side * len.hip, 0.0, 0.0];
        j[h] = hip;
        let (flex, abd, knee) = (rad[i], rad[i + 1], rad[i + 2]);
        let thigh = mul(mul(rotation_y(0.3 * twist), rotation_x(-flex)), rotation_z(side * abd));
        let knee_pos = add(hip, scale(mat_vec(&thigh, DOWN), len.thigh));
        j[k] = knee_pos;
        let shin = mul(thigh, rotation_x(knee));
        j[a] = add(knee_pos, scale(mat_vec(&shin, DOWN), len.shin));
    }

    let root = scale(add(j[joint::LEFT_HIP], j[joint::RIGHT_HIP]), 0.5);
    for p in &mut j {
        *p = [p[0] - root[0], p[1] - root[1], p[2] - root[2]];
    }
    let body = mul(rotation_z(rad[20]), rotation_x(-rad[19]));
    for p in &mut j {
        *p = mat_vec(&body, *p);
    }
    let head_root = (j[joint::HEAD][0].powi(2) + j[joint::HEAD][1].powi(2) + j[joint::HEAD][2].powi(2)).sqrt();
    let target = head_root.clamp(0.9, 1.1);
    if target != head_root {
        let s = target / head_root;
        j.iter_mut().for_each(|p| *p = scale(*p, s));
    }
    SampledSkeleton {
        skeleton: Skeleton3D { joints: j },
        angles_deg: angles,
        left,
        right,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rigid_prior_repeats_exactly() {
        let prior = SkeletonPrior::rigid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample_skeleton(&prior, &mut rng);
        let b = sample_skeleton(&prior, &mut rng);
        assert_eq!(a.skeleton, b.skeleton);
    }

    #[test]
    fn full_coupling_ties_left_and_right() {
        let prior = SkeletonPrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = sample_skeleton(&prior, &mut rng);
            assert!((s.left.upper_arm - s.right.upper_arm).abs() <= 1e-12);
            assert!((s.left.shin - s.right.shin).abs() <= 1e-12);
            let arm = |a: usize, b: usize| s.skeleton.distance(a, b);
            let ratio = arm(joint::LEFT_ELBOW, joint::LEFT_WRIST) / arm(joint::RIGHT_ELBOW, joint::RIGHT_WRIST);
            assert!((ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_coupling_unties_sides() {
        let prior = SkeletonPrior {
            symmetry_coupling: 0.5,
            ..Default::default()
        };
        let s = sample_skeleton(&prior, &mut ChaCha8Rng::seed_from_u64(3));
        assert_ne!(s.left.thigh, s.right.thigh);
    }

    #[test]
    fn skeletons_are_rooted_and_scaled() {
        let prior = SkeletonPrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let s = sample_skeleton(&prior, &mut rng).skeleton;
            let r = s.root();
            assert!(r.iter().all(|v| v.abs() < 1e-12));
            let hr = s.joints[joint::HEAD].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(&hr), "head-root {hr}");
        }
    }

    #[test]
    fn mean_skeleton_is_upright_and_facing_away_from_z() {
        let s = sample_skeleton(&SkeletonPrior::rigid(), &mut ChaCha8Rng::seed_from_u64(0)).skeleton;
        assert!(s.joints[joint::HEAD][1] > 0.8);
        assert!(s.joints[joint::LEFT_ANKLE][1] < -0.6);
        assert!(s.joints[joint::LEFT_HIP][0] < 0.0 && s.joints[joint::RIGHT_HIP][0] > 0.0);
    }

    #[test]
    fn whole_body_lean_tilts_the_pelvis() {
        let hips_level = |prior: &SkeletonPrior, seed| {
            let s = sample_skeleton(prior, &mut ChaCha8Rng::seed_from_u64(seed)).skeleton;
            let (l, r) = (s.joints[joint::LEFT_HIP], s.joints[joint::RIGHT_HIP]);
            (l[1] - r[1]).abs() < 1e-12 && (l[2] - r[2]).abs() < 1e-12
        };
        let mut level = SkeletonPrior::default();
        level.angles.body_pitch.std_deg = 0.0;
        level.angles.body_roll.std_deg = 0.0;
        assert!((0..50).all(|s| hips_level(&level, s)));
        assert!((0..50).all(|s| !hips_level(&SkeletonPrior::default(), s)));
    }

    #[test]
    fn invalid_priors_are_rejected() {
        let mut p = SkeletonPrior::default();
        p.angles.knee_flex.mean_deg = 200.0;
        assert!(p.validate().is_err());
        let p = SkeletonPrior {
            symmetry_coupling: 1.5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(SkeletonPrior::default().validate().is_ok());
    }
}
