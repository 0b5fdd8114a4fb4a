use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drgrade::cli::{
    cmd_evaluate, cmd_predict, cmd_preprocess, cmd_synth, cmd_train, cmd_verify, CliConfig, CliError, Outcome,
    PredictInput, TrainPaths,
};
use drgrade::verify::VerifyOptions;

#[derive(Parser)]
#[command(name = "drgrade", version, about = "Fundus preprocessing, grade regression and QWK evaluation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthesis, splitting and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic graded dataset (images/ + manifest.csv).
    Synth {
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        side: Option<usize>,
        #[arg(long)]
        noise_sd: Option<f64>,
    },
    /// Turn manifest images into 3x224x224 tensor files.
    Preprocess {
        #[arg(long)]
        images: Option<PathBuf>,
        /// Also write post-CLAHE grayscale previews.
        #[arg(long)]
        previews: bool,
    },
    /// Train the reference model on preprocessed tensors.
    Train {
        #[arg(long)]
        tensors: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Write id_code,score,grade predictions.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "images")]
        tensors: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Compare predictions with the ground-truth manifest.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Run the built-in oracle suites.
    Verify {
        /// Test hook: kappa weight exponent used by the library side.
        #[arg(long, default_value_t = 2.0)]
        qwk_exponent: f64,
    },
}

fn need(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = CliConfig::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        cfg.set_seed(seed);
    }
    if cli.common.out.is_some() {
        cfg.paths.out_dir = cli.common.out.clone();
    }
    if cli.common.manifest.is_some() {
        cfg.paths.manifest = cli.common.manifest.clone();
    }
    let out = || need(None, &cfg.paths.out_dir, "out");
    let manifest = || need(None, &cfg.paths.manifest, "manifest");

    match cli.command {
        Command::Synth { n_per_class, side, noise_sd } => {
            cfg.synth.n_per_class = n_per_class.unwrap_or(cfg.synth.n_per_class);
            cfg.synth.side = side.unwrap_or(cfg.synth.side);
            cfg.synth.noise_sd = noise_sd.unwrap_or(cfg.synth.noise_sd);
            cmd_synth(&cfg, &out()?)
        }
        Command::Preprocess { images, previews } => {
            let images = need(images, &cfg.paths.input_dir, "images")?;
            cfg.paths.input_dir = Some(images.clone());
            cmd_preprocess(&manifest()?, &images, &out()?, &cfg, previews)
        }
        Command::Train { tensors, checkpoint, epochs, learning_rate, batch_size } => {
            let tensor_dir = need(tensors, &cfg.paths.input_dir, "tensors")?;
            cfg.paths.input_dir = Some(tensor_dir.clone());
            if checkpoint.is_some() {
                cfg.paths.checkpoint = checkpoint;
            }
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train.learning_rate = learning_rate.unwrap_or(cfg.train.learning_rate);
            cfg.train.batch_size = batch_size.unwrap_or(cfg.train.batch_size);
            let paths = TrainPaths {
                tensor_dir,
                manifest: manifest()?,
                out_dir: out()?,
                checkpoint: cfg.paths.checkpoint.clone(),
            };
            cmd_train(&paths, &cfg)
        }
        Command::Predict { checkpoint, tensors, images } => {
            let checkpoint = need(checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
            let input = match (tensors, images) {
                (Some(t), _) => PredictInput::Tensors(t),
                (None, Some(i)) => PredictInput::Images(i),
                (None, None) => PredictInput::Tensors(need(None, &cfg.paths.input_dir, "tensors or --images")?),
            };
            let manifest = cfg.paths.manifest.clone();
            cmd_predict(&checkpoint, &input, manifest.as_deref(), &out()?, &cfg)
        }
        Command::Evaluate { predictions } => {
            let out = cfg.paths.out_dir.clone();
            cmd_evaluate(&manifest()?, &predictions, out.as_deref(), &cfg)
        }
        Command::Verify { qwk_exponent } => {
            let opts = VerifyOptions { seed: cli.common.seed.unwrap_or(42), qwk_exponent };
            let outcome = cmd_verify(&opts, &cfg)?;
            print!("{}", outcome.summary["table"].as_str().unwrap_or_default());
            if let Some(p) = &cfg.paths.out_dir {
                write_summary(p, &outcome)?;
            }
            return Ok(outcome);
        }
    }
    .inspect(|o| println!("{}", serde_json::to_string_pretty(&o.summary).expect("json")))
}

fn write_summary(path: &Path, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(&outcome.summary)? + "\n")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("drgrade: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
