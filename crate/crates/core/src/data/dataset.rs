use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2D, Skeleton3D, SkeletonTopology, NUM_JOINTS, POSE_DIM, SKELETON_DIM};
use crate::rng::{self, domain};

pub const METADATA_FILE: &str = "metadata.toml";
pub const CLASS_COLUMN: &str = "class";

/// Millimetres per skeleton unit for synthetic data: roughly an adult's
/// head-to-pelvis length.
pub const SYNTHETIC_UNIT_MM: f64 = 900.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetMeta {
    /// Ground-truth unit to millimetres.
    pub unit_scale_mm: f64,
    pub topology: String,
    pub source: String,
    /// Free-form provenance entries (generator seed, counts, ...).
    pub provenance: BTreeMap<String, String>,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            unit_scale_mm: SYNTHETIC_UNIT_MM,
            topology: SkeletonTopology::STANDARD_NAME.to_string(),
            source: "unknown".to_string(),
            provenance: BTreeMap::new(),
        }
    }
}

impl DatasetMeta {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseDataset {
    pub poses_2d: Vec<Pose2D>,
    /// Ground truth, used for evaluation only.
    pub poses_3d: Option<Vec<Skeleton3D>>,
    pub labels: Option<Vec<String>>,
    /// Which source skeleton each row came from; rows sharing a group are
    /// never separated by [`split`]. `None` treats every row as its own group.
    pub groups: Option<Vec<u64>>,
    pub meta: DatasetMeta,
}

impl PoseDataset {
    pub fn len(&self) -> usize {
        self.poses_2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses_2d.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let check = |what: &str, m: Option<usize>| match m {
            Some(m) if m != n => Err(Error::shape(format!("{m} {what} for {n} poses"))),
            _ => Ok(()),
        };
        check("skeletons", self.poses_3d.as_ref().map(Vec::len))?;
        check("labels", self.labels.as_ref().map(Vec::len))?;
        check("group ids", self.groups.as_ref().map(Vec::len))?;
        Ok(())
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> PoseDataset {
        let pick = |v: &Vec<_>| idx.iter().map(|&i| v[i]).collect();
        PoseDataset {
            poses_2d: pick(&self.poses_2d),
            poses_3d: self.poses_3d.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|v| idx.iter().map(|&i| v[i].clone()).collect()),
            groups: self.groups.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect()),
            meta: self.meta.clone(),
        }
    }

    /// Writes `<name>_2d.csv`, `<name>_3d.csv` when ground truth is present,
    /// and the directory's metadata file.
    pub fn save_split(&self, dir: &Path, name: &str) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        write_poses_2d(
            &dir.join(format!("{name}_2d.csv")),
            &self.poses_2d,
            self.labels.as_deref(),
        )?;
        if let Some(gt) = &self.poses_3d {
            write_skeletons(&dir.join(format!("{name}_3d.csv")), gt, self.labels.as_deref())?;
        }
        self.meta.save(&dir.join(METADATA_FILE))
    }

    /// Reads what [`save_split`](Self::save_split) wrote. The 3D file and the
    /// metadata file are optional.
    pub fn load_split(dir: &Path, name: &str) -> Result<Self> {
        let path_3d = dir.join(format!("{name}_3d.csv"));
        let mut ds = load_dataset(
            &dir.join(format!("{name}_2d.csv")),
            path_3d.exists().then_some(path_3d.as_path()),
        )?;
        let meta = dir.join(METADATA_FILE);
        if meta.exists() {
            ds.meta = DatasetMeta::load(&meta)?;
        }
        Ok(ds)
    }
}

/// Column names: `x1,y1,…` for 2D, `x1,y1,z1,…` for 3D.
pub fn pose_header(joints: usize, dims: usize) -> Vec<String> {
    let axes = ["x", "y", "z"];
    (1..=joints)
        .flat_map(|j| axes[..dims].iter().map(move |a| format!("{a}{j}")))
        .collect()
}

fn write_rows(
    path: &Path,
    dims: usize,
    rows: &mut dyn Iterator<Item = Vec<f64>>,
    labels: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path).map_err(csv_io)?;
    let mut header = pose_header(NUM_JOINTS, dims);
    if labels.is_some() {
        header.push(CLASS_COLUMN.to_string());
    }
    w.write_record(&header).map_err(csv_io)?;
    for (i, row) in rows.enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(l) = labels {
            rec.push(l[i].clone());
        }
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_poses_2d(path: &Path, poses: &[Pose2D], labels: Option<&[String]>) -> Result<()> {
    write_rows(path, 2, &mut poses.iter().map(|p| p.to_flat().to_vec()), labels)
}

pub fn write_skeletons(path: &Path, skeletons: &[Skeleton3D], labels: Option<&[String]>) -> Result<()> {
    write_rows(path, 3, &mut skeletons.iter().map(|s| s.to_flat().to_vec()), labels)
}

struct Table {
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

fn read_table(path: &Path, width: usize) -> Result<Table> {
    let source_name = path.display().to_string();
    let err = |line: u64, message: String| Error::Parse {
        source_name: source_name.clone(),
        line: line as usize,
        message,
    };
    let file = fs::File::open(path)?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = r.records();
    let header = match records.next() {
        None => {
            return Ok(Table {
                rows: Vec::new(),
                labels: None,
            })
        }
        Some(h) => h.map_err(|e| err(1, e.to_string()))?,
    };
    let has_class = match header.len() {
        n if n == width => false,
        n if n == width + 1 && header.get(width).map(str::trim) == Some(CLASS_COLUMN) => true,
        n => {
            return Err(err(
                1,
                format!(
                    "header has {n} columns, expected {width} (or {} with '{CLASS_COLUMN}')",
                    width + 1
                ),
            ))
        }
    };
    let mut rows = Vec::new();
    let mut labels = has_class.then(Vec::new);
    for rec in records {
        let rec = rec.map_err(|e| err(0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        let expected = width + has_class as usize;
        if rec.len() != expected {
            return Err(err(line, format!("row has {} columns, expected {expected}", rec.len())));
        }
        let mut row = Vec::with_capacity(width);
        for (c, field) in rec.iter().take(width).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(line, format!("column {} is not a number: '{field}'", c + 1)))?;
            if !v.is_finite() {
                return Err(err(line, format!("column {} is not finite", c + 1)));
            }
            row.push(v);
        }
        if let Some(l) = labels.as_mut() {
            l.push(rec.get(width).unwrap_or_default().to_string());
        }
        rows.push(row);
    }
    Ok(Table { rows, labels })
}

pub fn read_poses_2d(path: &Path) -> Result<(Vec<Pose2D>, Option<Vec<String>>)> {
    let t = read_table(path, POSE_DIM)?;
    let poses = t.rows.iter().map(|r| Pose2D::from_flat(r)).collect::<Result<_>>()?;
    Ok((poses, t.labels))
}

pub fn read_skeletons(path: &Path) -> Result<(Vec<Skeleton3D>, Option<Vec<String>>)> {
    let t = read_table(path, SKELETON_DIM)?;
    let sk = t.rows.iter().map(|r| Skeleton3D::from_flat(r)).collect::<Result<_>>()?;
    Ok((sk, t.labels))
}

/// Loads 2D poses and, optionally, matching ground truth. Class labels come
/// from whichever file has them.
pub fn load_dataset(path_2d: &Path, path_3d: Option<&Path>) -> Result<PoseDataset> {
    let (poses_2d, mut labels) = read_poses_2d(path_2d)?;
    let poses_3d = match path_3d {
        Some(p) => {
            let (sk, l3) = read_skeletons(p)?;
            if sk.len() != poses_2d.len() {
                return Err(Error::shape(format!(
                    "{} has {} rows, {} has {}",
                    path_2d.display(),
                    poses_2d.len(),
                    p.display(),
                    sk.len()
                )));
            }
            labels = labels.or(l3);
            Some(sk)
        }
        None => None,
    };
    let ds = PoseDataset {
        poses_2d,
        poses_3d,
        labels,
        groups: None,
        meta: DatasetMeta::default(),
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &PoseDataset, path_2d: &Path, path_3d: Option<&Path>) -> Result<()> {
    ds.validate()?;
    write_poses_2d(path_2d, &ds.poses_2d, ds.labels.as_deref())?;
    if let (Some(p), Some(gt)) = (path_3d, &ds.poses_3d) {
        write_skeletons(p, gt, ds.labels.as_deref())?;
    }
    Ok(())
}

/// Splits by group so that every view of one source skeleton lands in the
/// same part. Group counts are rounded; test takes the remainder.
pub fn split(
    ds: &PoseDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(PoseDataset, PoseDataset, PoseDataset)> {
    let (a, b, c) = fractions;
    for f in [a, b, c] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::config(format!("split fraction {f} outside [0, 1]")));
        }
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions sum to {}, not 1", a + b + c)));
    }
    ds.validate()?;
    let groups: Vec<u64> = match &ds.groups {
        Some(g) => g.clone(),
        None => (0..ds.len() as u64).collect(),
    };
    let mut ids: Vec<u64> = groups.clone();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut rng::stream(seed, domain::SPLIT, 0));
    let n = ids.len();
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let part: std::collections::HashMap<u64, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            (
                id,
                if i < n_train {
                    0
                } else if i < n_train + n_val {
                    1
                } else {
                    2
                },
            )
        })
        .collect();
    let mut idx = [Vec::new(), Vec::new(), Vec::new()];
    for (row, g) in groups.iter().enumerate() {
        idx[part[g]].push(row);
    }
    Ok((ds.subset(&idx[0]), ds.subset(&idx[1]), ds.subset(&idx[2])))
}

/// Writes a plain CSV of numbers with a header, for small ad-hoc dumps.
pub fn write_matrix_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let vals: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", vals.join(","))?;
    }
    out.flush()?;
    Ok(())
}
