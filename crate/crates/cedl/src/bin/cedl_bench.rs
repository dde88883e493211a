//! Benchmark CLI: drives the library's experiment runners from the command
//! line. All logic lives in the `cedl` library; this binary only parses
//! flags, merges them over an optional config file, and prints records.
//!
//! Precedence for every setting: explicit flag > `CEDL_OUT_DIR` (output
//! directory only) > config file > built-in default.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cedl::bench::{
    eval_checkpoint, export_embeddings, load_checkpoint, load_dataset_arg, parse_kv_file,
    resolve_out_dir, run_proportion_sweep, run_rotation, run_single, ExperimentConfig,
};
use cedl::error::Result;

#[derive(Parser)]
#[command(
    name = "cedl-bench",
    about = "Supervised anomaly-detection benchmarks with centre-enhanced discriminative learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring the experiment-config keys; any flag set here overrides
/// the same key from `--config`.
#[derive(Args, Clone, Default)]
struct ConfigFlags {
    /// Flat key = value config file (see README for the key set).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment id used in records and checkpoint names.
    #[arg(long)]
    id: Option<String>,
    /// Data source: csv:PATH, svmlight:PATH, or synthetic (config file only).
    #[arg(long)]
    data: Option<String>,
    /// Modality: tabular, series, or classes.
    #[arg(long)]
    modality: Option<String>,
    /// Zero-based label column for CSV input ("last" selects the last).
    #[arg(long)]
    label_column: Option<String>,
    /// CSV input has a header line.
    #[arg(long)]
    header: bool,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    /// Latent dimension.
    #[arg(long)]
    latent: Option<usize>,
    /// Objective: cedl, bce, svdd, or sad.
    #[arg(long)]
    objective: Option<String>,
    /// Radial scale.
    #[arg(long)]
    alpha: Option<f64>,
    /// Centre mode: fixed or learnable.
    #[arg(long)]
    centre_mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train fraction for the stratified (tabular) or chronological
    /// (series) split.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    window_length: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Window standardization: train or window.
    #[arg(long)]
    standardize: Option<String>,
    /// Proportions for the sweep protocol, comma separated.
    #[arg(long)]
    proportions: Option<String>,
    /// Output directory for records and checkpoints.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: load, split, train, score, persist.
    Run(ConfigFlags),
    /// Class-rotation protocol over class-labelled data.
    Rotate(ConfigFlags),
    /// Anomaly-proportion sweep comparing cedl against bce.
    Sweep(ConfigFlags),
    /// Export per-sample embeddings from a checkpoint.
    ExportEmbeddings {
        /// Checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset: csv:PATH or svmlight:PATH.
        #[arg(long)]
        data: String,
        #[arg(long)]
        label_column: Option<usize>,
        #[arg(long)]
        header: bool,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset with a checkpoint and print the metric report.
    EvalCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long)]
        label_column: Option<usize>,
        #[arg(long)]
        header: bool,
    },
}

impl ConfigFlags {
    /// Merge file keys with flag overrides into one resolved config.
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut map: BTreeMap<String, String> = match &self.config {
            Some(path) => parse_kv_file(path)?,
            None => BTreeMap::new(),
        };
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        set("id", self.id.clone());
        set("source", self.data.clone());
        set("modality", self.modality.clone());
        set("label_column", self.label_column.clone());
        if self.header {
            set("header", Some("true".into()));
        }
        set("hidden", self.hidden.clone());
        set("latent", self.latent.map(|v| v.to_string()));
        set("objective", self.objective.clone());
        set("alpha", self.alpha.map(|v| v.to_string()));
        set("centre_mode", self.centre_mode.clone());
        set("epochs", self.epochs.map(|v| v.to_string()));
        set("batch", self.batch.map(|v| v.to_string()));
        set("lr", self.lr.map(|v| v.to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        set("train_fraction", self.train_fraction.map(|v| v.to_string()));
        set("window_length", self.window_length.map(|v| v.to_string()));
        set("stride", self.stride.map(|v| v.to_string()));
        set("standardize", self.standardize.clone());
        set("proportions", self.proportions.clone());

        let mut cfg = ExperimentConfig::from_map(&map)?;
        cfg.out_dir = match &self.out_dir {
            Some(dir) => dir.clone(),
            None => resolve_out_dir(&cfg.out_dir),
        };
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(flags) => {
            let cfg = flags.resolve()?;
            let record = run_single(&cfg)?;
            println!("{}", serde_json::to_string(&record)?);
        }
        Command::Rotate(flags) => {
            let cfg = flags.resolve()?;
            for record in run_rotation(&cfg)? {
                println!("{}", serde_json::to_string(&record)?);
            }
        }
        Command::Sweep(flags) => {
            let cfg = flags.resolve()?;
            let proportions = cfg.proportions.clone();
            for record in run_proportion_sweep(&cfg, &proportions)? {
                println!("{}", serde_json::to_string(&record)?);
            }
        }
        Command::ExportEmbeddings {
            checkpoint,
            data,
            label_column,
            header,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = load_dataset_arg(&data, label_column, header)?;
            export_embeddings(&ckpt, &ds, &out)?;
            eprintln!("wrote {} rows to {}", ds.len(), out.display());
        }
        Command::EvalCheckpoint {
            checkpoint,
            data,
            label_column,
            header,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = load_dataset_arg(&data, label_column, header)?;
            let metrics = eval_checkpoint(&ckpt, &ds)?;
            println!("{}", serde_json::to_string(&metrics)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
