use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use liftgan::run::{self, Predictions, Profile, RunConfig};
use liftgan::Error;

/// Lift 2D human poses to 3D skeletons with an adversarially trained
/// depth generator.
#[derive(Parser, Debug)]
#[command(name = "liftgan", version)]
struct Cli {
    /// TOML run configuration. Every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for data generation and training; overrides the file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Training preset the `[train]` table starts from.
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,

    /// Run name; outputs go to `<runs-dir>/<name>/`.
    #[arg(long, global = true)]
    name: Option<String>,

    #[arg(long, global = true)]
    runs_dir: Option<PathBuf>,

    /// Dataset directory holding `{train,val,test}_{2d,3d}.csv`.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Smoke,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Smoke => Profile::Smoke,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic train/val/test dataset.
    GenData {
        /// Number of skeletons before the split.
        #[arg(long)]
        skeletons: Option<usize>,
        /// Train, validation and test fractions, e.g. `0.8,0.1,0.1`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        fractions: Option<Vec<f64>>,
    },
    /// Train a generator on the training split.
    Train {
        /// Continue from `checkpoints/last` of this run.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
    },
    /// Lift a CSV of 2D poses to 3D skeletons.
    Lift {
        /// Checkpoint directory; defaults to this run's best, else last.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// The input is already normalized; skip centering and scaling.
        #[arg(long)]
        normalized: bool,
    },
    /// Score predictions against a split's ground truth.
    Eval(EvalArgs),
    /// Score the constant-depth skeleton (same as `eval --baseline`).
    Baseline {
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        dump_residuals: bool,
    },
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// 3D predictions, row-aligned with the split.
    #[arg(long, conflicts_with_all = ["checkpoint", "ensemble", "baseline"])]
    predictions: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["ensemble", "baseline"])]
    checkpoint: Option<PathBuf>,
    /// Average the skeletons of several checkpoints.
    #[arg(long, num_args = 1.., conflicts_with = "baseline")]
    ensemble: Option<Vec<PathBuf>>,
    #[arg(long)]
    baseline: bool,
    /// Split to score (default `test`).
    #[arg(long)]
    split: Option<String>,
    /// Also write per-sample residuals.
    #[arg(long)]
    dump_residuals: bool,
}

fn config(cli: &Cli) -> liftgan::Result<RunConfig> {
    let profile = cli.profile.map(Profile::from);
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, profile)?,
        None => RunConfig::from_toml("", profile)?,
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(n) = &cli.name {
        cfg.name = n.clone();
    }
    if let Some(d) = &cli.runs_dir {
        cfg.runs_dir = d.clone();
    }
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    match &cli.command {
        Command::GenData { skeletons, fractions } => {
            if let Some(n) = skeletons {
                cfg.data.num_skeletons = *n;
            }
            if let Some(f) = fractions {
                cfg.data.fractions = (f[0], f[1], f[2]);
            }
        }
        Command::Train {
            steps,
            batch_size,
            checkpoint_every,
            ..
        } => {
            if let Some(s) = steps {
                cfg.train.steps = *s;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = *b;
            }
            if let Some(c) = checkpoint_every {
                cfg.train.checkpoint_every = *c;
            }
        }
        Command::Eval(EvalArgs {
            split, dump_residuals, ..
        })
        | Command::Baseline { split, dump_residuals } => {
            if let Some(s) = split {
                cfg.eval.split = s.clone();
            }
            cfg.eval.dump_residuals |= *dump_residuals;
        }
        Command::Lift { .. } => {}
    }
    cfg.finalize()
}

fn print_report(report: &liftgan::eval::EvalReport) {
    println!(
        "{}: {} samples, MPJPE {:.3} mm",
        report.checkpoint_id, report.count, report.overall_mpjpe_mm
    );
    for (class, s) in &report.per_class {
        println!("  {class:<12} {:>7}  {:.3} mm", s.count, s.mpjpe_mm);
    }
}

fn execute(cli: &Cli) -> liftgan::Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::GenData { .. } => {
            let s = run::gen_data(&cfg)?;
            println!(
                "wrote {} train, {} val, {} test poses to {}",
                s.train,
                s.val,
                s.test,
                cfg.data_dir.display()
            );
        }
        Command::Train { resume, .. } => {
            let s = run::train(&cfg, *resume)?;
            let last = s.outcome.telemetry.last();
            if let Some(t) = last {
                println!(
                    "step {}: disc loss {:.4}, gen loss {:.4} ({:.1} s)",
                    t.step, t.disc_loss, t.gen_loss, s.seconds
                );
            }
            if let Some((step, score)) = s.outcome.best {
                println!("best validation MPJPE {score:.3} mm at step {step}");
            }
            println!("checkpoints in {}", s.checkpoint_dir.display());
        }
        Command::Lift {
            checkpoint,
            input,
            output,
            normalized,
        } => {
            let ck = checkpoint.clone().unwrap_or_else(|| run::default_checkpoint(&cfg));
            let n = run::lift_file(&cfg, &ck, input, output, *normalized)?;
            println!("lifted {n} poses to {}", output.display());
        }
        Command::Eval(a) => {
            let source = if let Some(p) = &a.predictions {
                Predictions::File(p.clone())
            } else if let Some(e) = &a.ensemble {
                Predictions::Ensemble(e.clone())
            } else if a.baseline {
                Predictions::Baseline
            } else {
                Predictions::Checkpoint(a.checkpoint.clone().unwrap_or_else(|| run::default_checkpoint(&cfg)))
            };
            print_report(&run::evaluate(&cfg, &source)?);
        }
        Command::Baseline { .. } => print_report(&run::evaluate(&cfg, &Predictions::Baseline)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Diverged { dump: Some(p), .. } = &e {
                eprintln!("offending batches written to {}", p.display());
            }
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
