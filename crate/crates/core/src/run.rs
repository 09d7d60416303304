//! Reproducible runs: the layered configuration file and the commands the
//! `liftgan` binary exposes.
//!
//! Every command writes `config.echo` (the effective configuration) and
//! `inputs.sha256` (content hashes of everything it read) into
//! `runs/<name>/`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{generate_synthetic, PoseDataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::eval::{ensemble_lift, flat_baseline, mpjpe, EvalReport};
use crate::gan::{lift as lift_batch, normalize, poses_to_matrix, train as train_loop, LiftModel, NormStats};
use crate::gan::{TrainConfig, TrainOptions, TrainOutcome, TrainState};
use crate::geometry::{Pose2D, Skeleton3D, SkeletonTopology};
use crate::nn::{GeneratorNet, Mode};

pub const CONFIG_ECHO: &str = "config.echo";
pub const INPUT_HASHES: &str = "inputs.sha256";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const REPORT_FILE: &str = "report.csv";
pub const RESIDUALS_FILE: &str = "residuals.csv";

/// Named starting points for the `[train]` table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Width 256, batch 256, 20k steps: one CPU core.
    #[default]
    Desk,
    /// Width 64, batch 64, 200 steps.
    Smoke,
    /// Width 1024, batch 32768.
    Paper,
}

impl Profile {
    pub fn train_config(self) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::default(),
            Profile::Smoke => TrainConfig::smoke(),
            Profile::Paper => TrainConfig::paper(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Which split of `data_dir` `eval` scores.
    pub split: String,
    /// Validation poses scored at each checkpoint during training; 0 turns
    /// validation off.
    pub validation_samples: usize,
    /// Overrides the dataset's millimetres-per-unit.
    pub unit_scale_mm: Option<f64>,
    pub dump_residuals: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            split: "test".into(),
            validation_samples: 2000,
            unit_scale_mm: None,
            dump_residuals: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run directory name under `runs_dir`.
    pub name: String,
    pub runs_dir: PathBuf,
    /// Where `gen-data` writes and the other commands read
    /// `{train,val,test}_{2d,3d}.csv`.
    pub data_dir: PathBuf,
    pub profile: Profile,
    /// When set, replaces both `data.seed` and `train.seed`.
    pub seed: Option<u64>,
    /// Keep `checkpoints/step_<n>` at every checkpoint, not only `last` and
    /// `best`. These are what an ensemble is built from.
    pub keep_checkpoint_history: bool,
    pub data: SyntheticConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            runs_dir: "runs".into(),
            data_dir: "data".into(),
            profile: Profile::Desk,
            seed: None,
            keep_checkpoint_history: true,
            data: SyntheticConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl RunConfig {
    /// Parses a configuration file on top of the defaults of its profile
    /// (`profile_override` wins over the file's `profile` key). Unknown keys
    /// are errors.
    pub fn from_toml(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let profile = match profile_override {
            Some(p) => p,
            None => match file.get("profile") {
                Some(v) => v
                    .clone()
                    .try_into()
                    .map_err(|e| Error::config(format!("profile: {e}")))?,
                None => Profile::default(),
            },
        };
        let base = RunConfig {
            profile,
            train: profile.train_config(),
            ..Default::default()
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::config(e.to_string()))?;
        merge(&mut merged, file);
        merged.insert(
            "profile".into(),
            toml::Value::try_from(profile).map_err(|e| Error::config(e.to_string()))?,
        );
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile_override: Option<Profile>) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, profile_override).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Propagates the top-level seed and checks every section.
    pub fn finalize(mut self) -> Result<Self> {
        if let Some(seed) = self.seed {
            self.data.seed = seed;
            self.train.seed = seed;
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config(format!("invalid run name '{}'", self.name)));
        }
        self.data.validate()?;
        self.train.validate()?;
        if let Some(u) = self.eval.unit_scale_mm {
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::config("eval.unit_scale_mm must be positive"));
            }
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.runs_dir.join(&self.name)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.run_dir().join(CHECKPOINT_DIR)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Git-style object id of a blob, with SHA-256: the hash of
/// `"blob <len>\0"` followed by the content.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Creates the run directory and records the effective configuration and
/// the hashes of `inputs`.
pub fn record_run(cfg: &RunConfig, command: &str, inputs: &[PathBuf]) -> Result<PathBuf> {
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    let echo = cfg.to_toml()?;
    fs::write(dir.join(CONFIG_ECHO), format!("# command: {command}\n{echo}"))?;
    let mut lines = format!("{}  {CONFIG_ECHO}\n", blob_hash(echo.as_bytes()));
    for p in inputs {
        let bytes = fs::read(p)?;
        lines.push_str(&format!("{}  {}\n", blob_hash(&bytes), p.display()));
    }
    fs::write(dir.join(INPUT_HASHES), lines)?;
    Ok(dir)
}

fn split_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{split}_2d.csv")), dir.join(format!("{split}_3d.csv")))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} not found: {}", path.display())))
    }
}

#[derive(Clone, Debug)]
pub struct GenDataSummary {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Generates the synthetic dataset into `cfg.data_dir`.
pub fn gen_data(cfg: &RunConfig) -> Result<GenDataSummary> {
    let splits = generate_synthetic(&cfg.data, &cfg.train.lift)?;
    fs::create_dir_all(&cfg.data_dir)
        .map_err(|e| Error::config(format!("cannot create {}: {e}", cfg.data_dir.display())))?;
    splits.train.save_split(&cfg.data_dir, "train")?;
    splits.val.save_split(&cfg.data_dir, "val")?;
    splits.test.save_split(&cfg.data_dir, "test")?;
    record_run(cfg, "gen-data", &[])?;
    Ok(GenDataSummary {
        train: splits.train.len(),
        val: splits.val.len(),
        test: splits.test.len(),
    })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub outcome: TrainOutcome,
    pub checkpoint_dir: PathBuf,
    pub seconds: f64,
}

/// Every `n / k`-th index, so validation covers the whole set.
fn spread(n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    (0..k).map(|i| i * n / k).collect()
}

fn read_best(path: &Path) -> Result<Option<(u64, f64)>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    let mut best: Option<(u64, f64)> = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        let parsed = line
            .split_once(',')
            .and_then(|(s, v)| Some((s.parse::<u64>().ok()?, v.parse::<f64>().ok()?)));
        let (s, v) = parsed.ok_or_else(|| Error::Parse {
            source_name: path.display().to_string(),
            line: i + 1,
            message: "expected step,mpjpe_mm".into(),
        })?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((s, v));
        }
    }
    Ok(best)
}

/// Trains on `data_dir/train_2d.csv`, validating against `val_*.csv` when
/// present. With `resume`, continues from `checkpoints/last`.
pub fn train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary> {
    let (train_2d, _) = split_paths(&cfg.data_dir, "train");
    require(&train_2d, "training data")?;
    let (val_2d, val_3d) = split_paths(&cfg.data_dir, "val");
    let validate_on = cfg.eval.validation_samples > 0 && val_2d.exists() && val_3d.exists();
    let mut inputs = vec![train_2d.clone()];
    if validate_on {
        inputs.extend([val_2d.clone(), val_3d.clone()]);
    }
    let ck_dir = cfg.checkpoint_dir();
    let last = ck_dir.join("last");
    if resume {
        require(&last, "checkpoint to resume")?;
    }
    let run_dir = record_run(cfg, "train", &inputs)?;

    let topology = SkeletonTopology::standard();
    let train_ds = PoseDataset::load_split(&cfg.data_dir, "train")?;
    let (train_x, norm) = normalize(&train_ds.poses_2d, &topology, &cfg.train.lift)?;
    let x = poses_to_matrix(&train_x);

    let mut state = if resume {
        let state = TrainState::load(&last)?;
        let saved = &state.config;
        let mut expected = cfg.train.clone();
        expected.steps = saved.steps;
        expected.checkpoint_every = saved.checkpoint_every;
        if &expected != saved {
            return Err(Error::config(format!(
                "{} was trained with a different configuration; only steps and checkpoint_every may change on resume",
                last.display()
            )));
        }
        let mut state = state;
        state.config.steps = cfg.train.steps;
        state.config.checkpoint_every = cfg.train.checkpoint_every;
        state
    } else {
        TrainState::new(cfg.train.clone())?
    };
    state.dump_dir = Some(run_dir.clone());

    let validation_log = run_dir.join(VALIDATION_FILE);
    let opts = TrainOptions {
        checkpoint_dir: Some(ck_dir.clone()),
        keep_history: cfg.keep_checkpoint_history,
        telemetry: Some(run_dir.join(TELEMETRY_FILE)),
        norm: Some(norm.clone()),
        initial_best: if resume { read_best(&validation_log)? } else { None },
    };
    if !resume || !validation_log.exists() {
        fs::write(&validation_log, "step,mpjpe_mm\n")?;
    }

    let started = Instant::now();
    let outcome = if validate_on {
        let val = PoseDataset::load_split(&cfg.data_dir, "val")?;
        let idx = spread(val.len(), cfg.eval.validation_samples);
        let val = val.subset(&idx);
        let unit = cfg.eval.unit_scale_mm.unwrap_or(val.meta.unit_scale_mm);
        let gt = val.poses_3d.clone().expect("val_3d.csv was loaded");
        let m = poses_to_matrix(&norm.apply(&val.poses_2d, &topology)?);
        let lift_cfg = cfg.train.lift;
        let mut validator = |step: u64, g: &mut GeneratorNet| -> Result<f64> {
            let sk = lift_batch(g, &m, Mode::Inference, &lift_cfg)?;
            let score = mpjpe(&sk, &gt, None, unit)?.overall_mpjpe_mm;
            let mut f = fs::OpenOptions::new().append(true).open(&validation_log)?;
            writeln!(f, "{step},{score}")?;
            Ok(score)
        };
        train_loop(&mut state, x.clone(), x, &opts, Some(&mut validator))?
    } else {
        train_loop(&mut state, x.clone(), x, &opts, None)?
    };
    Ok(TrainSummary {
        outcome,
        checkpoint_dir: ck_dir,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// The checkpoint `eval` and `lift` use when none is named: `best`, else
/// `last`.
pub fn default_checkpoint(cfg: &RunConfig) -> PathBuf {
    let best = cfg.checkpoint_dir().join("best");
    if best.exists() {
        best
    } else {
        cfg.checkpoint_dir().join("last")
    }
}

/// Lifts the poses in `input` and writes skeletons to `output`. Inputs are
/// normalized with the checkpoint's statistics unless `normalized` says they
/// already are; outputs are in normalized units either way.
pub fn lift_file(cfg: &RunConfig, checkpoint: &Path, input: &Path, output: &Path, normalized: bool) -> Result<usize> {
    require(checkpoint, "checkpoint")?;
    require(input, "input poses")?;
    record_run(cfg, "lift", &[input.to_path_buf()])?;
    let mut model = LiftModel::load(checkpoint)?;
    let ds = crate::data::load_dataset(input, None)?;
    let lifted = if normalized {
        model.lift_normalized(&ds.poses_2d)?
    } else {
        model.lift_raw(&ds.poses_2d)?
    };
    crate::data::write_skeletons(output, &lifted, ds.labels.as_deref())?;
    Ok(lifted.len())
}

/// Where `eval` gets its predictions.
#[derive(Clone, Debug)]
pub enum Predictions {
    /// A file of 3D skeletons, row-aligned with the test set.
    File(PathBuf),
    Checkpoint(PathBuf),
    /// Average of several checkpoints.
    Ensemble(Vec<PathBuf>),
    /// The constant-depth skeleton.
    Baseline,
}

/// Scores `predictions` on split `cfg.eval.split` and writes `report.csv`
/// (and `residuals.csv` when asked) into the run directory.
pub fn evaluate(cfg: &RunConfig, predictions: &Predictions) -> Result<EvalReport> {
    let (path_2d, path_3d) = split_paths(&cfg.data_dir, &cfg.eval.split);
    require(&path_2d, "evaluation poses")?;
    require(&path_3d, "evaluation ground truth")?;
    let mut inputs = vec![path_2d, path_3d];
    let (pred, id): (Vec<Skeleton3D>, String) = match predictions {
        Predictions::File(p) => {
            require(p, "predictions")?;
            inputs.push(p.clone());
            (crate::data::read_skeletons(p)?.0, p.display().to_string())
        }
        Predictions::Checkpoint(p) => {
            require(p, "checkpoint")?;
            (Vec::new(), p.display().to_string())
        }
        Predictions::Ensemble(ps) => {
            if ps.is_empty() {
                return Err(Error::config("an ensemble needs at least one checkpoint"));
            }
            for p in ps {
                require(p, "checkpoint")?;
            }
            let ids: Vec<String> = ps.iter().map(|p| p.display().to_string()).collect();
            (Vec::new(), format!("ensemble[{}]", ids.join(";")))
        }
        Predictions::Baseline => (Vec::new(), "flat-baseline".into()),
    };
    let run_dir = record_run(cfg, "eval", &inputs)?;
    let ds = PoseDataset::load_split(&cfg.data_dir, &cfg.eval.split)?;
    let gt = ds.poses_3d.as_ref().expect("3D file required above");
    let pred = match predictions {
        Predictions::File(_) => pred,
        Predictions::Checkpoint(p) => LiftModel::load(p)?.lift_raw(&ds.poses_2d)?,
        Predictions::Ensemble(ps) => {
            let mut models = ps.iter().map(|p| LiftModel::load(p)).collect::<Result<Vec<_>>>()?;
            let first = models[0].norm.clone();
            let normalized = raw_to_normalized(&ds.poses_2d, first.as_ref(), &models[0].id)?;
            for m in &models[1..] {
                if m.norm != first || m.lift != models[0].lift {
                    return Err(Error::config(format!(
                        "{} and {} use different normalization or camera settings",
                        models[0].id, m.id
                    )));
                }
            }
            ensemble_lift(&mut models, &normalized)?
        }
        Predictions::Baseline => flat_baseline(&ds.poses_2d, &cfg.train.lift)?,
    };
    let unit = cfg.eval.unit_scale_mm.unwrap_or(ds.meta.unit_scale_mm);
    let mut report = mpjpe(&pred, gt, ds.labels.as_deref(), unit)?;
    report.checkpoint_id = id;
    report.write_csv(&run_dir.join(REPORT_FILE))?;
    if cfg.eval.dump_residuals {
        report.write_residuals(&run_dir.join(RESIDUALS_FILE))?;
    }
    Ok(report)
}

fn raw_to_normalized(poses: &[Pose2D], norm: Option<&NormStats>, id: &str) -> Result<Vec<Pose2D>> {
    let norm = norm.ok_or_else(|| Error::config(format!("{id} has no normalization statistics")))?;
    norm.apply(poses, &SkeletonTopology::standard())
}
