use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dipfuse", version, about = "Two-source image fusion with an untrained convolutional prior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse two source images.
    Fuse(FuseArgs),
    /// Write the per-pixel gain maps of two sources.
    Gains(GainsArgs),
    /// Score a fused image against its sources.
    Metrics(MetricsArgs),
    /// Fuse every listed pair at several channel counts and tabulate the metrics.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fuse(_) => "fuse",
            Command::Gains(_) => "gains",
            Command::Metrics(_) => "metrics",
            Command::Sweep(_) => "sweep",
        }
    }
}

/// Target size given as `WxH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resize {
    pub width: usize,
    pub height: usize,
}

impl FromStr for Resize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let parse = |v: &str| match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("invalid dimension {v:?} in {s:?}")),
        };
        Ok(Resize { width: parse(w)?, height: parse(h)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Source image (given exactly twice).
    #[arg(long = "src", required = true, num_args = 1, value_name = "PATH")]
    pub src: Vec<PathBuf>,
    /// Fused image, `.pgm` or `.png`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub channels: usize,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub gain_window: usize,
    /// Write the per-iteration loss as CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Resize both sources to `WxH` before fusing.
    #[arg(long, value_name = "WxH")]
    pub resize: Option<Resize>,
    /// Sample depth of the output image (16 only for PGM).
    #[arg(long, value_enum, default_value = "8")]
    pub bit_depth: Depth,
}

#[derive(Debug, Args)]
pub struct GainsArgs {
    #[arg(long = "src", required = true, num_args = 1, value_name = "PATH")]
    pub src: Vec<PathBuf>,
    /// Maps are written to `<prefix>_b1.pgm` and `<prefix>_b2.pgm`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub gain_window: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub fused: PathBuf,
    #[arg(long = "src", required = true, num_args = 1, value_name = "PATH")]
    pub src: Vec<PathBuf>,
    /// Output path, or `-` for stdout.
    #[arg(long, default_value = "-")]
    pub json: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Text file with one pair of whitespace-separated source paths per line.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Comma-separated channel counts.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1,2,5,10,30")]
    pub channels: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub gain_window: usize,
    #[arg(long, value_name = "WxH")]
    pub resize: Option<Resize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Fill the `seconds` column with wall-clock times (makes the CSV non-reproducible).
    #[arg(long)]
    pub timing: bool,
}
