use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use attnscore::data::SynthConfig;
use attnscore::model::Hyperparams;
use attnscore::optim::RAdamConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "attnscore",
    version,
    about = "Attention-pooled video anomaly scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic weakly-labelled dataset.
    GenSynthetic(GenArgs),
    /// Train a scorer on a manifest.
    Train(TrainArgs),
    /// Frame-level AUC/AP of a checkpoint on a test manifest.
    Evaluate(EvalArgs),
    /// Frame scores for one feature file.
    Predict(PredictArgs),
    /// Export the attention map of one video.
    InspectAttention(InspectArgs),
    /// Train with and without segment reordering and compare.
    ShuffleExperiment(ShuffleArgs),
    /// Grid over d_a, r and split size.
    Sweep(SweepArgs),
    /// Print the parameter count of a configuration.
    CountParams(CountArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Attention hidden size d_a.
    #[arg(long = "da", default_value_t = 64)]
    pub attn_hidden: usize,
    /// Attention rows r.
    #[arg(long = "r", default_value_t = 3)]
    pub attn_rows: usize,
    /// Segments per training video.
    #[arg(long = "T", default_value_t = 32)]
    pub segments: usize,
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f64,
    /// Put a bidirectional LSTM in front of the attention.
    #[arg(long)]
    pub bilstm: bool,
    #[arg(long, default_value_t = 256)]
    pub lstm_hidden: usize,
}

impl ModelArgs {
    pub fn hyperparams(&self, dim: usize) -> Result<Hyperparams> {
        let mut hp = Hyperparams::new(dim, self.attn_hidden, self.attn_rows);
        hp.segments = self.segments;
        hp.dropout = self.dropout;
        if self.bilstm {
            hp = hp.with_bilstm(self.lstm_hidden);
        }
        hp.validate()?;
        Ok(hp)
    }

    /// Checks everything except the feature dimension, which comes from data.
    pub fn validate(&self) -> Result<()> {
        self.hyperparams(1).map(|_| ())
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainOptions {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fuse audio features listed in the manifest.
    #[arg(long)]
    pub audio: bool,
    /// Share of each class held out for model selection.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Validation interval in iterations.
    #[arg(long, default_value_t = 50)]
    pub eval_every: u64,
}

impl TrainOptions {
    pub fn optimizer(&self) -> RAdamConfig {
        RAdamConfig {
            lr: self.lr,
            ..RAdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!("--lr must be positive, got {}", self.lr);
        }
        if self.iters == 0 {
            bail!("--iters must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            bail!(
                "--val-fraction must be in [0, 1), got {}",
                self.val_fraction
            );
        }
        if self.eval_every == 0 {
            bail!("--eval-every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4.0)]
    pub gap: f64,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 50)]
    pub normal: usize,
    #[arg(long, default_value_t = 50)]
    pub abnormal: usize,
    #[arg(long, default_value_t = 50)]
    pub test_normal: usize,
    #[arg(long, default_value_t = 50)]
    pub test_abnormal: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 1)]
    pub crops: usize,
    #[arg(long, default_value_t = 128)]
    pub min_segments: usize,
    #[arg(long, default_value_t = 256)]
    pub max_segments: usize,
    /// Share of an abnormal video's segments inside the anomaly window.
    #[arg(long, default_value_t = 0.3)]
    pub fraction: f64,
}

impl GenArgs {
    pub fn config(&self) -> Result<SynthConfig> {
        let cfg = SynthConfig {
            n_normal: self.normal,
            n_abnormal: self.abnormal,
            n_test_normal: self.test_normal,
            n_test_abnormal: self.test_abnormal,
            dim: self.dim,
            clip_range: (self.min_segments, self.max_segments),
            anomaly_fraction: self.fraction,
            gap: self.gap,
            classes: self.classes,
            crops: self.crops,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainOptions,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Test manifest with frame ground truth.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report directory; the report is only printed when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Segments per inference bag.
    #[arg(long = "l", default_value_t = 16)]
    pub split: usize,
    /// Also report average precision.
    #[arg(long)]
    pub ap: bool,
    #[arg(long)]
    pub audio: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Feature file (`.svf` or single-crop `.csv`).
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub audio_features: Option<PathBuf>,
    /// Frame count; defaults to 16 per segment.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long = "l", default_value_t = 16)]
    pub split: usize,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub audio_features: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub crop: usize,
    /// Output directory for `attention.csv` and `attention.pgm`.
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels per heatmap cell.
    #[arg(long, default_value_t = 8)]
    pub cell: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ShuffleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "l", default_value_t = 16)]
    pub split: usize,
    #[command(flatten)]
    pub train: TrainOptions,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Grid axis, e.g. `da=32,64,128`, `r=1,3,5,7` or `l=4..64`; repeatable.
    #[arg(long = "sweep", value_parser = parse_axis)]
    pub axes: Vec<SweepAxis>,
    #[arg(long = "l", default_value_t = 16)]
    pub split: usize,
    #[command(flatten)]
    pub train: TrainOptions,
}

#[derive(Debug, Clone, Args)]
pub struct CountArgs {
    #[arg(long, default_value_t = 2048)]
    pub dim: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<usize>,
}

/// `name=v1,v2,...` or `name=a..b` (inclusive) or `name=a..b:step`.
pub fn parse_axis(s: &str) -> Result<SweepAxis> {
    let (name, spec) = s
        .split_once('=')
        .with_context(|| format!("sweep axis {s:?} is not name=values"))?;
    if !matches!(name, "da" | "r" | "l") {
        bail!("unknown sweep axis {name:?}; expected da, r or l");
    }
    let num = |v: &str| -> Result<usize> {
        v.trim()
            .parse()
            .with_context(|| format!("bad sweep value {v:?}"))
    };
    let values = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1),
        };
        let lo = num(lo)?;
        if step == 0 || lo > hi {
            bail!("empty sweep range {spec:?}");
        }
        (lo..=hi).step_by(step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() || values.contains(&0) {
        bail!("sweep axis {name} needs positive values");
    }
    Ok(SweepAxis {
        name: name.to_string(),
        values,
    })
}
