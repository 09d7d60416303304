//! Similarity-aligned MPJPE, the flat baseline and model ensembles.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::gan::{lift_offsets, poses_to_matrix, LiftModel};
use crate::geometry::{LiftConfig, Mat3, Pose2D, Skeleton3D, Vec3, NUM_JOINTS};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentResult {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    /// `scale · rotation · pred + translation`.
    pub aligned: Skeleton3D,
    /// Mean joint distance after alignment, in ground-truth units.
    pub residual: f64,
}

fn centered(sk: &Skeleton3D) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let pts: Vec<Vector3<f64>> = sk.joints.iter().map(|p| Vector3::from(*p)).collect();
    let mean = pts.iter().sum::<Vector3<f64>>() / NUM_JOINTS as f64;
    (mean, pts.iter().map(|p| p - mean).collect())
}

/// Mean Euclidean distance between corresponding joints.
pub fn mean_joint_distance(a: &Skeleton3D, b: &Skeleton3D) -> f64 {
    a.joints
        .iter()
        .zip(&b.joints)
        .map(|(p, q)| crate::geometry::dist3(*p, *q))
        .sum::<f64>()
        / NUM_JOINTS as f64
}

/// Least-squares similarity transform taking `pred` onto `gt`, reflections
/// excluded.
pub fn procrustes_align(pred: &Skeleton3D, gt: &Skeleton3D) -> Result<AlignmentResult> {
    if !(pred.is_finite() && gt.is_finite()) {
        return Err(Error::NonFinite("skeleton passed to alignment".into()));
    }
    let (mu_p, a) = centered(pred);
    let (mu_g, b) = centered(gt);
    let norm_a: f64 = a.iter().map(|v| v.norm_squared()).sum();
    let norm_b: f64 = b.iter().map(|v| v.norm_squared()).sum();
    if !(norm_b > 0.0) {
        return Err(Error::Degenerate("ground-truth skeleton collapses to a point".into()));
    }
    if !(norm_a > 0.0) {
        return Err(Error::Degenerate("predicted skeleton collapses to a point".into()));
    }
    // Cross-covariance Σ b aᵀ; the optimal rotation maps a onto b.
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(&b) {
        h += q * p.transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let flip = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, flip));
    let r = u * d * v_t;
    let s = (svd.singular_values[0] + svd.singular_values[1] + flip * svd.singular_values[2]) / norm_a;
    let t = mu_g - s * r * mu_p;

    let mut aligned = Skeleton3D::default();
    for (out, p) in aligned.joints.iter_mut().zip(&pred.joints) {
        let q = s * r * Vector3::from(*p) + t;
        *out = [q.x, q.y, q.z];
    }
    let mut rotation = [[0.0; 3]; 3];
    for (i, row) in rotation.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = r[(i, j)];
        }
    }
    Ok(AlignmentResult {
        scale: s,
        rotation,
        translation: [t.x, t.y, t.z],
        residual: mean_joint_distance(&aligned, gt),
        aligned,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSummary {
    pub count: usize,
    pub mpjpe_mm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall_mpjpe_mm: f64,
    pub per_class: BTreeMap<String, ClassSummary>,
    pub per_sample_mm: Vec<f64>,
    pub labels: Vec<String>,
    pub count: usize,
    pub checkpoint_id: String,
}

pub const UNLABELED: &str = "unlabeled";

/// Per-sample aligned error in millimetres, aggregated overall and by class.
pub fn mpjpe(
    pred: &[Skeleton3D],
    gt: &[Skeleton3D],
    labels: Option<&[String]>,
    unit_scale_mm: f64,
) -> Result<EvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} ground-truth skeletons",
            pred.len(),
            gt.len()
        )));
    }
    if let Some(l) = labels {
        if l.len() != gt.len() {
            return Err(Error::shape("one label per sample"));
        }
    }
    let per_sample_mm = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| Ok(procrustes_align(p, g)?.residual * unit_scale_mm))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<String> = match labels {
        Some(l) => l.to_vec(),
        None => vec![UNLABELED.to_string(); gt.len()],
    };
    let mut sums: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for (l, e) in labels.iter().zip(&per_sample_mm) {
        let entry = sums.entry(l.clone()).or_default();
        entry.0 += 1;
        entry.1 += e;
    }
    let per_class = sums
        .into_iter()
        .map(|(k, (n, s))| {
            (
                k,
                ClassSummary {
                    count: n,
                    mpjpe_mm: s / n as f64,
                },
            )
        })
        .collect();
    let overall = if per_sample_mm.is_empty() {
        0.0
    } else {
        per_sample_mm.iter().sum::<f64>() / per_sample_mm.len() as f64
    };
    Ok(EvalReport {
        overall_mpjpe_mm: overall,
        per_class,
        count: per_sample_mm.len(),
        per_sample_mm,
        labels,
        checkpoint_id: String::new(),
    })
}

impl EvalReport {
    /// `class,count,mpjpe_mm`, one row per class, then `ALL`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "class,count,mpjpe_mm")?;
        for (k, c) in &self.per_class {
            writeln!(out, "{k},{},{}", c.count, c.mpjpe_mm)?;
        }
        writeln!(out, "ALL,{},{}", self.count, self.overall_mpjpe_mm)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_residuals(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "index,class,mpjpe_mm")?;
        for (i, (l, e)) in self.labels.iter().zip(&self.per_sample_mm).enumerate() {
            writeln!(out, "{i},{l},{e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Every joint at depth `d + 1`: the lift of an all-zero generator.
pub fn flat_baseline(poses: &[Pose2D], cfg: &LiftConfig) -> Result<Vec<Skeleton3D>> {
    let x = poses_to_matrix(poses);
    Ok(lift_offsets(&x, &Matrix::zeros(poses.len(), NUM_JOINTS), cfg)?.skeletons)
}

/// Per-sample mean of the skeletons lifted by each model.
pub fn ensemble_lift(models: &mut [LiftModel], poses: &[Pose2D]) -> Result<Vec<Skeleton3D>> {
    let first = models
        .first()
        .ok_or_else(|| Error::config("an ensemble needs at least one model"))?;
    let (lift0, topo0) = (first.lift, first.norm.as_ref().map(|n| n.topology.clone()));
    for m in models.iter() {
        let topo = m.norm.as_ref().map(|n| n.topology.clone());
        if m.lift != lift0 || topo != topo0 {
            return Err(Error::config(format!(
                "{} does not match the first model's topology or camera",
                m.id
            )));
        }
    }
    // Deviations from the first member are averaged, so identical members
    // reproduce it bit for bit.
    let (head, rest) = models.split_first_mut().expect("checked non-empty");
    let base = head.lift_normalized(poses)?;
    let mut dev = vec![[[0.0; 3]; NUM_JOINTS]; poses.len()];
    for m in rest.iter_mut() {
        for ((acc, sk), b) in dev.iter_mut().zip(m.lift_normalized(poses)?).zip(&base) {
            for ((a, p), q) in acc.iter_mut().zip(&sk.joints).zip(&b.joints) {
                for k in 0..3 {
                    a[k] += p[k] - q[k];
                }
            }
        }
    }
    let k = models.len() as f64;
    Ok(base
        .iter()
        .zip(dev)
        .map(|(b, d)| {
            let mut out = *b;
            for (o, e) in out.joints.iter_mut().zip(d) {
                for c in 0..3 {
                    o[c] += e[c] / k;
                }
            }
            out
        })
        .collect())
}
