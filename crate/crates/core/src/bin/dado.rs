use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dado::config::Config;
use dado::pipeline;
use dado::synth::SuiteKind;

#[derive(Parser)]
#[command(name = "dado", version, about = "Depth-attention object discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover objects in a dataset directory and write predictions.jsonl.
    Discover {
        input_dir: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score predictions against VOC annotations.
    Eval {
        predictions: PathBuf,
        ann_dir: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render prediction and ground-truth overlays.
    Viz {
        input_dir: PathBuf,
        predictions: PathBuf,
        out_dir: PathBuf,
    },
    /// Generate a seeded synthetic suite.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "standard")]
        kind: SuiteKind,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    overlap_frac: Option<f64>,
    #[arg(long)]
    min_prominence_frac: Option<f64>,
    #[arg(long)]
    n_discard: Option<usize>,
    #[arg(long)]
    cc_threshold: Option<f64>,
    #[arg(long)]
    combine_mode: Option<String>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    min_area_frac: Option<f64>,
    #[arg(long)]
    nms_sigma: Option<f64>,
    #[arg(long)]
    score_floor: Option<f64>,
    #[arg(long)]
    lambda_consistency: Option<f64>,
    #[arg(long)]
    tau_on_support: Option<bool>,
    #[arg(long)]
    iou_thresh: Option<f64>,
    #[arg(long)]
    sparsity: Option<String>,
    #[arg(long)]
    morph_order: Option<String>,
    #[arg(long)]
    corloc_mode: Option<String>,
    #[arg(long)]
    use_depth: Option<bool>,
    #[arg(long)]
    use_weights: Option<bool>,
    #[arg(long)]
    isolate_layers: Option<bool>,
    #[arg(long)]
    dynamic_bins: Option<bool>,
    #[arg(long)]
    fixed_layers: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Config::default(),
        };
        let overrides: [(&str, Option<String>); 21] = [
            ("bins", self.bins.map(|v| v.to_string())),
            ("overlap_frac", self.overlap_frac.map(|v| v.to_string())),
            (
                "min_prominence_frac",
                self.min_prominence_frac.map(|v| v.to_string()),
            ),
            ("n_discard", self.n_discard.map(|v| v.to_string())),
            ("cc_threshold", self.cc_threshold.map(|v| v.to_string())),
            ("combine_mode", self.combine_mode.clone()),
            ("kernel", self.kernel.map(|v| v.to_string())),
            ("min_area_frac", self.min_area_frac.map(|v| v.to_string())),
            ("nms_sigma", self.nms_sigma.map(|v| v.to_string())),
            ("score_floor", self.score_floor.map(|v| v.to_string())),
            (
                "lambda_consistency",
                self.lambda_consistency.map(|v| v.to_string()),
            ),
            ("tau_on_support", self.tau_on_support.map(|v| v.to_string())),
            ("iou_thresh", self.iou_thresh.map(|v| v.to_string())),
            ("sparsity", self.sparsity.clone()),
            ("morph_order", self.morph_order.clone()),
            ("corloc_mode", self.corloc_mode.clone()),
            ("use_depth", self.use_depth.map(|v| v.to_string())),
            ("use_weights", self.use_weights.map(|v| v.to_string())),
            ("isolate_layers", self.isolate_layers.map(|v| v.to_string())),
            ("dynamic_bins", self.dynamic_bins.map(|v| v.to_string())),
            ("fixed_layers", self.fixed_layers.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Discover {
            input_dir,
            out_dir,
            config,
        } => {
            let cfg = config.resolve()?;
            let threads = dado::par::threads_from_env();
            let summary = pipeline::cmd_discover(&input_dir, &out_dir, &cfg, threads)?;
            for s in &summary.skipped {
                eprintln!("skipped {}: {}", s.stem, s.reason);
            }
            println!(
                "processed {} images, skipped {}, {} detections",
                summary.processed.len(),
                summary.skipped.len(),
                summary.detection_count()
            );
            if summary.processed.is_empty() {
                eprintln!("error: no images processed in {}", input_dir.display());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Eval {
            predictions,
            ann_dir,
            out_dir,
            config,
        } => {
            let cfg = config.resolve()?;
            let report = pipeline::cmd_eval(&predictions, &ann_dir, &out_dir, &cfg)?;
            print!("{}", pipeline::headline(&report));
            if !report.missing_images.is_empty() {
                eprintln!(
                    "{} annotated images had no predictions",
                    report.missing_images.len()
                );
            }
        }
        Command::Viz {
            input_dir,
            predictions,
            out_dir,
        } => {
            let written = dado::viz::cmd_viz(&input_dir, &predictions, &out_dir)?;
            println!("wrote {} overlays", written.len());
        }
        Command::Synth {
            out_dir,
            n,
            seed,
            kind,
            noise,
        } => {
            let stems = pipeline::cmd_synth(n, seed, kind, noise, &out_dir)?;
            println!("wrote {} scenes to {}", stems.len(), out_dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
