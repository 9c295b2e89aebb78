//! `taskforge` command-line interface.
//!
//! Every subcommand reads an optional TOML config (`--config` or
//! `TASKFORGE_CONFIG`), applies flag overrides, validates the result and
//! writes it as `run_config.toml` into its output directory. Exit status is
//! 0 on success, 1 on validation or runtime errors and 2 on usage errors.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{CodecKind, LayoutKind, RunConfig, StrategyKind, ValidationError, CONFIG_ENV};

#[derive(Parser, Debug)]
#[command(name = "taskforge", version, about = "Compositional visual in-context learning data engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct DatasetArgs {
    /// Dataset manifest or directory containing `manifest.json`; repeatable.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    /// Canonical side records are resized to.
    #[arg(long)]
    image_side: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct CodecArgs {
    #[arg(long, value_enum)]
    codec: Option<CodecKind>,
    /// Codebook file written by `train-codebook`.
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic image + segmentation dataset.
    Fixtures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        side: Option<usize>,
        #[arg(long, value_enum)]
        layout: Option<LayoutKind>,
    },
    /// Render every enrichment variant of one or all records.
    Enrich {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArgs,
        /// Record id; all records when omitted.
        #[arg(long)]
        record: Option<String>,
    },
    /// Sample context/query/output bundles.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArgs,
        /// Maximum images per bundle.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        t_max: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        n_context_min: Option<usize>,
        #[arg(long)]
        n_context_max: Option<usize>,
    },
    /// Train a k-means patch codebook on a balanced sample stream.
    TrainCodebook {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        patch_side: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Stream samples used for training.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        task_balance: Option<bool>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        dataset_balance: Option<bool>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        recolor: Option<bool>,
    },
    /// Tokenize bundles into a token file.
    Tokenize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[arg(long)]
        image_side: Option<usize>,
        /// Special tokens per marker.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Apply a masking objective to a token file.
    Mask {
        #[command(flatten)]
        common: Common,
        /// Token file or directory holding `tokens.tfts`.
        #[arg(long)]
        tokens: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyKind>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        n_images: Option<usize>,
    },
    /// Codebook upper bounds under fixed and random color protocols.
    EvalCodebook {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Score predicted output chains, or the copy baseline, on bundles.
    EvalPreds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundles: Option<PathBuf>,
        /// Directory mirroring the bundles with `pred_XX.png` files.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Render one bundle as a horizontal image strip.
    Preview {
        #[command(flatten)]
        common: Common,
        /// Bundle directory.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

/// Runs the CLI on `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            if let Some(v) = e.downcast_ref::<ValidationError>() {
                eprintln!("error: {v}");
            } else {
                eprintln!("error: {e:#}");
            }
            1
        }
    }
}

fn base_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.paths.out = Some(out.clone());
    }
    Ok(config)
}

fn apply_data(config: &mut RunConfig, data: &DatasetArgs) {
    if !data.datasets.is_empty() {
        config.paths.datasets = data.datasets.clone();
    }
    if let Some(s) = data.image_side {
        config.codec.image_side = s;
    }
}

fn apply_codec(config: &mut RunConfig, codec: &CodecArgs) {
    if let Some(k) = codec.codec {
        config.codec.kind = k;
    }
    if let Some(p) = &codec.codebook {
        config.paths.codebook = Some(p.clone());
    }
    if let Some(g) = codec.grid {
        config.codec.grid = g;
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
