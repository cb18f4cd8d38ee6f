use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgae::cli::{
    cmd_encode, cmd_metrics, cmd_pca, cmd_pipeline, cmd_synth, cmd_train, load_specimen,
    ExportOptions, MetricImage, MetricsRequest, PipelineConfig,
};
use pgae::metrics::Normalization;
use pgae::pca::DEFAULT_COMPONENTS;
use pgae::synth::SpecimenSpec;
use pgae::{Error, Result};

/// PCA-guided autoencoder toolkit for active infrared thermography.
///
/// Set PGAE_LOG (error, warn, info, debug, trace) to control logging.
#[derive(Parser)]
#[command(name = "pgae", version)]
struct Cli {
    /// Worker threads; 0 picks automatically, 1 is the single-threaded
    /// reference mode. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainOverrides {
    /// Pipeline config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides both the network and the shuffling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the distillation weight; 0 trains a plain autoencoder.
    #[arg(long)]
    alpha: Option<f64>,
    /// Overrides the number of components.
    #[arg(long)]
    d: Option<usize>,
}

impl TrainOverrides {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(alpha) = self.alpha {
            cfg.train.alpha = alpha;
        }
        if let Some(d) = self.d {
            cfg.d = d;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic specimen (the standard one without --config).
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit principal components and export the leading component images.
    Pca {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
        d: usize,
    },
    /// Train the autoencoder against PCA targets.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Encode a sequence with a trained model.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Contrast and SNR of an image, optionally IoU of two masks.
    Metrics {
        /// PGM image, or a TSF sequence together with --frame.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        frame: Option<usize>,
        /// Defect mask (PGM or JSON rectangles); repeatable.
        #[arg(long = "defect", required = true)]
        defects: Vec<PathBuf>,
        #[arg(long)]
        sound: PathBuf,
        #[arg(long, requires = "truth")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        truth: Option<PathBuf>,
        /// Score raw values instead of min-max normalized ones.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// synth, pca, train and metrics in one go.
    Pipeline {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;

    match cli.command {
        Command::Synth {
            config,
            output,
            seed,
        } => {
            let mut spec = match config {
                Some(path) => load_specimen(&path)?,
                None => SpecimenSpec::standard(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            cmd_synth(&spec, &output)?;
        }
        Command::Pca { input, output, d } => {
            let model = cmd_pca(&input, d, &output, &ExportOptions::default())?;
            println!("fitted {} components", model.d());
        }
        Command::Train {
            input,
            output,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            let (_, summary) = cmd_train(&input, &cfg, &output)?;
            println!(
                "{}: {} epochs, final loss {:.6}, mean cosine {:.4}",
                summary.label,
                summary.epochs,
                summary
                    .report
                    .total_loss
                    .last()
                    .copied()
                    .unwrap_or(f64::NAN),
                summary.report.final_mean_cosine
            );
        }
        Command::Encode {
            input,
            model,
            output,
        } => {
            let imgs = cmd_encode(&input, &model, &output)?;
            println!("encoded {} latent images", imgs.len());
        }
        Command::Metrics {
            input,
            frame,
            defects,
            sound,
            pred,
            truth,
            raw,
            output,
        } => {
            let image = match frame {
                Some(index) => MetricImage::Frame {
                    sequence: input,
                    index,
                },
                None => MetricImage::Pgm(input),
            };
            let req = MetricsRequest {
                image,
                defects,
                sound,
                iou: pred.zip(truth),
                normalization: if raw {
                    Normalization::Raw
                } else {
                    Normalization::MinMax
                },
            };
            let report = cmd_metrics(&req, output.as_deref())?;
            if output.is_none() {
                let text = serde_json::to_string_pretty(&report).map_err(|source| Error::Json {
                    context: "metric report".into(),
                    source,
                })?;
                println!("{text}");
            }
        }
        Command::Pipeline {
            input,
            output,
            overrides,
        } => {
            let mut cfg = overrides.resolve()?;
            if input.is_some() {
                cfg.input = input;
            }
            let out = output
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::InvalidInput("no output directory given".into()))?;
            let run = cmd_pipeline(&cfg, &out)?;
            println!(
                "{}: {} epochs, mean cosine {:.4}",
                run.train.label, run.train.epochs, run.train.report.final_mean_cosine
            );
            for (name, m) in &run.metrics {
                println!("{name}: mean contrast {:.4}", m.mean_contrast);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PGAE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
