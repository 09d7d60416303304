use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{disc_loss_logits, gen_loss_logits, GeneratorLoss};
use super::normalize::NormStats;
use super::pipeline::{lift_offsets, project_with, random_project, Lifted, Projected, ProjectionConfig};
use crate::error::{Error, Result};
use crate::geometry::{CameraRotation, LiftConfig, POSE_DIM};
use crate::nn::{
    AdamConfig, AdamState, Checkpoint, DiscriminatorNet, GeneratorNet, Matrix, Mode, NetOptions, Parameterized,
};
use crate::rng::{self, domain};

pub const CONFIG_FILE: &str = "config.toml";
pub const NORM_FILE: &str = "norm.toml";
pub const TELEMETRY_HEADER: &str = "step,disc_loss,gen_loss,disc_acc_real,disc_acc_fake,wall_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub width: usize,
    pub generator_blocks: usize,
    pub discriminator_blocks: usize,
    pub steps: u64,
    pub seed: u64,
    pub disc_steps_per_gen_step: usize,
    pub generator_loss: GeneratorLoss,
    pub generator_adam: AdamConfig,
    pub discriminator_adam: AdamConfig,
    pub lift: LiftConfig,
    pub projection: ProjectionConfig,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    /// Start the generator's output layer at zero (flat skeletons).
    pub zero_init_generator_output: bool,
    /// Initial value of every generator output bias; `-1` puts an unbiased
    /// flat skeleton's joints at the rotation pivot.
    pub generator_output_bias: f64,
    /// Run the discriminator on its running statistics while it scores fakes
    /// for the generator update, instead of on the fake batch's statistics.
    pub freeze_disc_stats_for_generator: bool,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    /// The desk profile.
    fn default() -> Self {
        let adam = AdamConfig {
            beta1: 0.5,
            ..AdamConfig::default()
        };
        Self {
            batch_size: 256,
            width: 256,
            generator_blocks: GeneratorNet::DEFAULT_BLOCKS,
            discriminator_blocks: DiscriminatorNet::DEFAULT_BLOCKS,
            steps: 20_000,
            seed: 0,
            disc_steps_per_gen_step: 1,
            generator_loss: GeneratorLoss::NonSaturating,
            generator_adam: adam,
            discriminator_adam: adam,
            lift: LiftConfig::default(),
            projection: ProjectionConfig::default(),
            bn_momentum: crate::nn::BatchNorm::DEFAULT_MOMENTUM,
            bn_epsilon: crate::nn::BatchNorm::DEFAULT_EPSILON,
            zero_init_generator_output: true,
            generator_output_bias: 0.0,
            freeze_disc_stats_for_generator: true,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    /// Full-size networks and batches.
    pub fn paper() -> Self {
        Self {
            batch_size: 32_768,
            width: 1024,
            ..Self::default()
        }
    }

    /// Tiny and fast, for checking that the plumbing works.
    pub fn smoke() -> Self {
        Self {
            batch_size: 64,
            width: 64,
            steps: 200,
            checkpoint_every: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if self.width == 0 || self.disc_steps_per_gen_step == 0 {
            return Err(Error::config("width and disc_steps_per_gen_step must be positive"));
        }
        self.lift.validate().map_err(|e| Error::config(e.to_string()))?;
        self.projection.ranges.validate()?;
        for (name, a) in [
            ("generator", &self.generator_adam),
            ("discriminator", &self.discriminator_adam),
        ] {
            let ok = a.learning_rate >= 0.0
                && (0.0..1.0).contains(&a.beta1)
                && (0.0..1.0).contains(&a.beta2)
                && a.epsilon > 0.0;
            if !ok {
                return Err(Error::config(format!("invalid {name} optimizer settings")));
            }
        }
        if !(self.bn_epsilon > 0.0 && (0.0..1.0).contains(&self.bn_momentum)) {
            return Err(Error::config("invalid batch-norm settings"));
        }
        if !self.generator_output_bias.is_finite() {
            return Err(Error::config("generator_output_bias must be finite"));
        }
        Ok(())
    }

    fn net_options(&self, zero_output: bool) -> NetOptions {
        NetOptions {
            bn_momentum: self.bn_momentum,
            bn_epsilon: self.bn_epsilon,
            zero_output,
        }
    }

    pub fn build_generator(&self) -> GeneratorNet {
        GeneratorNet::new(self.width, self.generator_blocks, &self.net_options(false))
    }

    pub fn build_discriminator(&self) -> DiscriminatorNet {
        DiscriminatorNet::new(self.width, self.discriminator_blocks, &self.net_options(false))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub disc_acc_real: f64,
    pub disc_acc_fake: f64,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    /// Completed steps. The random stream of step `s` is derived from
    /// `(seed, s)`, so this counter is the whole RNG state.
    pub step: u64,
    /// Where to write the offending batches if a loss goes non-finite.
    pub dump_dir: Option<PathBuf>,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut generator = config.build_generator();
        generator.init_parameters(
            rng::derive_seed(config.seed, domain::INIT_GENERATOR),
            &config.net_options(config.zero_init_generator_output),
        );
        generator
            .net
            .output
            .bias
            .iter_mut()
            .for_each(|b| *b = config.generator_output_bias);
        let mut discriminator = config.build_discriminator();
        discriminator.init_parameters(rng::derive_seed(config.seed, domain::INIT_DISCRIMINATOR));
        let adam_g = AdamState::new(config.generator_adam, &mut generator);
        let adam_d = AdamState::new(config.discriminator_adam, &mut discriminator);
        Ok(Self {
            config,
            generator,
            discriminator,
            adam_g,
            adam_d,
            step: 0,
            dump_dir: None,
        })
    }

    /// One discriminator phase and one generator update. `real` and
    /// `gen_input` are unrelated batches and may differ in size.
    pub fn train_step(&mut self, real: &Matrix, gen_input: &Matrix) -> Result<StepStats> {
        let step = self.step + 1;
        self.guarded(step, real, gen_input, |s| s.step_inner(step, real, gen_input))
    }

    fn guarded(
        &mut self,
        step: u64,
        real: &Matrix,
        gen_input: &Matrix,
        f: impl FnOnce(&mut Self) -> Result<StepStats>,
    ) -> Result<StepStats> {
        match f(self) {
            Err(Error::NonFinite(detail)) => {
                let dump = self
                    .dump_dir
                    .as_ref()
                    .and_then(|dir| dump_batches(dir, step, real, gen_input).ok());
                Err(Error::Diverged { step, detail, dump })
            }
            other => other,
        }
    }

    fn step_inner(&mut self, step: u64, real: &Matrix, gen_input: &Matrix) -> Result<StepStats> {
        let cfg = &self.config;
        for (name, m) in [("real", real), ("generator input", gen_input)] {
            if m.cols() != POSE_DIM || m.rows() < 2 {
                return Err(Error::shape(format!("{name} batch is {:?}", m.shape())));
            }
        }
        let mut rng = rng::stream(cfg.seed, domain::STEP, step);
        let n_real = real.rows();

        // One generator forward serves both updates: its parameters do not
        // change in between.
        let offsets = self.generator.apply(gen_input, Mode::Train)?;
        let lifted = lift_offsets(gen_input, &offsets, &cfg.lift)?;

        let mut disc_loss = 0.0;
        let (mut acc_real, mut acc_fake) = (0.0, 0.0);
        for _ in 0..cfg.disc_steps_per_gen_step {
            let fake = random_project(&lifted.skeletons, &mut rng, &cfg.lift, &cfg.projection)?;
            let batch = real.vstack(&fake.poses);
            let logits = self.discriminator.logits(&batch, Mode::Train)?;
            let (loss, grad) = disc_loss_logits(&logits, n_real);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("discriminator loss {loss}")));
            }
            disc_loss = loss;
            let says_real = |r: &[f64]| r[DiscriminatorNet::REAL] > r[DiscriminatorNet::FAKE];
            let rows: Vec<bool> = logits.iter_rows().map(says_real).collect();
            acc_real = rows[..n_real].iter().filter(|&&b| b).count() as f64 / n_real as f64;
            acc_fake = rows[n_real..].iter().filter(|&&b| !b).count() as f64 / (rows.len() - n_real) as f64;
            self.discriminator.zero_grad();
            self.discriminator.backward(&grad, true, false);
            self.adam_d.step(&mut self.discriminator)?;
        }

        let fake = random_project(&lifted.skeletons, &mut rng, &cfg.lift, &cfg.projection)?;
        let gen_loss = self.generator_gradient(&lifted, &fake)?;
        self.adam_g.step(&mut self.generator)?;
        self.generator.net.clear_cache();
        self.discriminator.net.clear_cache();

        self.step = step;
        Ok(StepStats {
            step,
            disc_loss,
            gen_loss,
            disc_acc_real: acc_real,
            disc_acc_fake: acc_fake,
        })
    }

    /// Generator loss on `fake`, the projections of `lifted`, with its
    /// gradient left in the generator's gradient buffers. The generator's
    /// forward caches must still hold the pass that produced `lifted`.
    pub fn generator_gradient(&mut self, lifted: &Lifted, fake: &Projected) -> Result<f64> {
        let cfg = &self.config;
        let mode = if cfg.freeze_disc_stats_for_generator {
            Mode::Inference
        } else {
            Mode::TrainFrozen
        };
        let logits = self.discriminator.logits(&fake.poses, mode)?;
        let (gen_loss, grad) = gen_loss_logits(&logits, cfg.generator_loss);
        if !gen_loss.is_finite() {
            return Err(Error::NonFinite(format!("generator loss {gen_loss}")));
        }
        let grad_fake = self.discriminator.backward(&grad, false, true).expect("input gradient");
        let grad_skeletons = fake.backward(&grad_fake)?;
        let grad_offsets = lifted.backward(&grad_skeletons);
        self.generator.zero_grad();
        self.generator.backward(&grad_offsets, true, false);
        Ok(gen_loss)
    }

    /// The generator objective for fixed viewpoints: lift `gen_input` in
    /// training mode, image each skeleton through its rotation, score. With
    /// `gradient`, also fills the generator's gradient buffers. Batch-norm
    /// running statistics are updated as in a training step.
    pub fn generator_objective(
        &mut self,
        gen_input: &Matrix,
        rotations: Vec<CameraRotation>,
        gradient: bool,
    ) -> Result<f64> {
        let offsets = self.generator.apply(gen_input, Mode::Train)?;
        let lifted = lift_offsets(gen_input, &offsets, &self.config.lift)?;
        let fake = project_with(
            &lifted.skeletons,
            rotations,
            &self.config.lift,
            self.config.projection.center_fakes,
        )?;
        let loss = if gradient {
            self.generator_gradient(&lifted, &fake)?
        } else {
            let mode = if self.config.freeze_disc_stats_for_generator {
                Mode::Inference
            } else {
                Mode::TrainFrozen
            };
            let logits = self.discriminator.logits(&fake.poses, mode)?;
            gen_loss_logits(&logits, self.config.generator_loss).0
        };
        self.generator.net.clear_cache();
        self.discriminator.net.clear_cache();
        Ok(loss)
    }

    pub fn to_checkpoint(&mut self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        let c = &self.config;
        ck.set_meta("step", self.step);
        ck.set_meta("seed", c.seed);
        ck.set_meta("width", c.width);
        ck.set_meta("generator_blocks", c.generator_blocks);
        ck.set_meta("discriminator_blocks", c.discriminator_blocks);
        ck.set_meta("batch_size", c.batch_size);
        ck.set_meta("distance", c.lift.distance);
        ck.set_meta("generator_learning_rate", c.generator_adam.learning_rate);
        ck.set_meta("discriminator_learning_rate", c.discriminator_adam.learning_rate);
        ck.push_params("generator", &mut self.generator);
        ck.push_params("discriminator", &mut self.discriminator);
        ck.push_adam("adam_generator", &self.adam_g, &mut self.generator);
        ck.push_adam("adam_discriminator", &self.adam_d, &mut self.discriminator);
        ck
    }

    /// Writes the checkpoint, the configuration and, when given, the
    /// normalization into `dir`.
    pub fn save(&mut self, dir: &Path, norm: Option<&NormStats>) -> Result<()> {
        self.to_checkpoint().save(dir)?;
        let text = toml::to_string(&self.config).map_err(|e| Error::config(e.to_string()))?;
        fs::write(dir.join(CONFIG_FILE), text)?;
        if let Some(n) = norm {
            n.save(&dir.join(NORM_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = load_config(dir)?;
        let ck = Checkpoint::load(dir)?;
        let mut state = Self::new(config)?;
        ck.restore_params("generator", &mut state.generator)?;
        ck.restore_params("discriminator", &mut state.discriminator)?;
        ck.restore_adam("adam_generator", &mut state.adam_g, &mut state.generator)?;
        ck.restore_adam("adam_discriminator", &mut state.adam_d, &mut state.discriminator)?;
        state.step = ck.meta_parsed("step")?;
        Ok(state)
    }
}

pub fn load_config(dir: &Path) -> Result<TrainConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path)?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn dump_batches(dir: &Path, step: u64, real: &Matrix, gen_input: &Matrix) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("diverged_step{step}.csv"));
    let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
    writeln!(out, "batch,{}", crate::data::pose_header(POSE_DIM / 2, 2).join(","))?;
    for (name, m) in [("real", real), ("generator_input", gen_input)] {
        for row in m.iter_rows() {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{name},{}", vals.join(","))?;
        }
    }
    out.flush()?;
    Ok(path)
}

/// Serves fixed-size minibatches, reshuffling without replacement every
/// epoch. The batch for a step depends only on `(seed, stream, step)`.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    data: Matrix,
    batch: usize,
    seed: u64,
    stream: u64,
    epoch: Option<u64>,
    order: Vec<usize>,
}

impl EpochSampler {
    pub fn new(data: Matrix, batch: usize, seed: u64, stream: u64) -> Result<Self> {
        if data.rows() < batch {
            return Err(Error::config(format!(
                "dataset has {} poses but batch_size is {batch}; lower batch_size",
                data.rows()
            )));
        }
        Ok(Self {
            data,
            batch,
            seed,
            stream,
            epoch: None,
            order: Vec::new(),
        })
    }

    pub fn batches_per_epoch(&self) -> u64 {
        (self.data.rows() / self.batch) as u64
    }

    /// The minibatch consumed by 1-based training step `step`.
    pub fn batch_for_step(&mut self, step: u64) -> Matrix {
        let i = step - 1;
        let epoch = i / self.batches_per_epoch();
        if self.epoch != Some(epoch) {
            self.order = (0..self.data.rows()).collect();
            let mut rng = rng::stream(self.seed, domain::SHUFFLE, (epoch << 8) | self.stream);
            self.order.shuffle(&mut rng);
            self.epoch = Some(epoch);
        }
        let start = (i % self.batches_per_epoch()) as usize * self.batch;
        let mut out = Matrix::zeros(self.batch, self.data.cols());
        for (r, &src) in self.order[start..start + self.batch].iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.data.row(src));
        }
        out
    }
}

/// Scores a generator on held-out data; lower is better.
pub type Validator<'a> = dyn FnMut(u64, &mut GeneratorNet) -> Result<f64> + 'a;

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Checkpoints go to `<dir>/last`, `<dir>/best` and, with
    /// `keep_history`, `<dir>/step_<n>`.
    pub checkpoint_dir: Option<PathBuf>,
    pub keep_history: bool,
    pub telemetry: Option<PathBuf>,
    pub norm: Option<NormStats>,
    /// Best `(step, score)` of an earlier run being resumed, so `best` is
    /// only replaced by an improvement.
    pub initial_best: Option<(u64, f64)>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub telemetry: Vec<StepStats>,
    /// `(step, score)` of every validation run.
    pub validation: Vec<(u64, f64)>,
    pub best: Option<(u64, f64)>,
    /// The generator with the best validation score, if validation ran.
    pub best_generator: Option<GeneratorNet>,
}

/// Runs `state` up to `state.config.steps`. Resuming from a loaded state
/// continues exactly where the saved run stopped.
pub fn train(
    state: &mut TrainState,
    real: Matrix,
    gen_input: Matrix,
    opts: &TrainOptions,
    mut validate: Option<&mut Validator<'_>>,
) -> Result<TrainOutcome> {
    let cfg = state.config.clone();
    let mut real = EpochSampler::new(real, cfg.batch_size, cfg.seed, 0)?;
    let mut gen = EpochSampler::new(gen_input, cfg.batch_size, cfg.seed, 1)?;
    let mut telemetry_out = match &opts.telemetry {
        Some(path) => {
            let fresh = state.step == 0 || !path.exists();
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(path)?;
            if fresh {
                writeln!(f, "{TELEMETRY_HEADER}")?;
            }
            Some(std::io::BufWriter::new(f))
        }
        None => None,
    };
    let mut outcome = TrainOutcome {
        telemetry: Vec::new(),
        validation: Vec::new(),
        best: opts.initial_best,
        best_generator: None,
    };
    let started = Instant::now();
    while state.step < cfg.steps {
        let step = state.step + 1;
        let r = real.batch_for_step(step);
        let g = gen.batch_for_step(step);
        let stats = state.train_step(&r, &g)?;
        if let Some(out) = telemetry_out.as_mut() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                stats.step,
                stats.disc_loss,
                stats.gen_loss,
                stats.disc_acc_real,
                stats.disc_acc_fake,
                started.elapsed().as_millis()
            )?;
        }
        outcome.telemetry.push(stats);

        let at_checkpoint = cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every);
        if at_checkpoint || step == cfg.steps {
            if let Some(out) = telemetry_out.as_mut() {
                out.flush()?;
            }
            let mut improved = false;
            if let Some(v) = validate.as_deref_mut() {
                let score = v(step, &mut state.generator)?;
                outcome.validation.push((step, score));
                if outcome.best.is_none_or(|(_, b)| score < b) {
                    outcome.best = Some((step, score));
                    outcome.best_generator = Some(state.generator.clone());
                    improved = true;
                }
            }
            if let Some(dir) = &opts.checkpoint_dir {
                state.save(&dir.join("last"), opts.norm.as_ref())?;
                if opts.keep_history {
                    state.save(&dir.join(format!("step_{step:08}")), opts.norm.as_ref())?;
                }
                if improved {
                    state.save(&dir.join("best"), opts.norm.as_ref())?;
                }
            }
        }
    }
    if let Some(mut out) = telemetry_out {
        out.flush()?;
    }
    Ok(outcome)
}
