mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nnnf_core::{Preset, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "nnnf", version, about = "Non-neighboring and neighboring feature pedestrian detector")]
pub struct Cli {
    /// key = value configuration file, applied before command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for pool generation, training and synthesis.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Named configuration: nnnf-l2, nnnf-l4, nf-only or nnnf-no-norm.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a feature pool.
    Pool {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train a boosted model with hard-negative mining.
    Train(TrainArgs),
    /// Run the sliding-window detector over images or directories.
    Detect(DetectArgs),
    /// Score detections against annotations.
    Eval(EvalArgs),
    /// Write a synthetic pedestrian dataset.
    Synth(SynthArgs),
    /// Break a model's SIDF features down into CI, BP and O classes.
    AnalyzeSidf(AnalyzeArgs),
    /// Measure detection throughput and cascade rejection depth.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of images with annotations.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of pedestrian-free images used as additional negatives.
    #[arg(long)]
    pub negatives: Option<PathBuf>,
    /// Use this pool instead of generating one.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-round trace CSV; defaults to the model path with a .trace.csv suffix.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Comma-separated tree counts of the training rounds.
    #[arg(long)]
    pub rounds: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScanFlags {
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub scales_per_octave: Option<usize>,
    #[arg(long)]
    pub upsample_octaves: Option<usize>,
    /// Minimum boosted score of a reported window.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Image files or directories of images.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Detections CSV; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub scan: ScanFlags,
    #[arg(long)]
    pub nms_overlap: Option<f64>,
    /// Write every channel plane of each input as PGM into this directory.
    #[arg(long)]
    pub dump_channels: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, short)]
    pub detections: PathBuf,
    #[arg(long, short)]
    pub annotations: PathBuf,
    /// Curve CSV (threshold,fppi,miss_rate).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Log-log sampled points for plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    /// Ignore ground truth and drop detections shorter than this.
    #[arg(long)]
    pub min_height: Option<f64>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// Directory whose images all count toward FPPI, annotated or not.
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Each scene holds between 1 and this many pedestrians.
    #[arg(long, default_value_t = 2)]
    pub max_targets: usize,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Annotated directory the average positive window is computed from.
    #[arg(long)]
    pub data: PathBuf,
    /// Classify every SIDF of the pool instead of only the selected ones.
    #[arg(long)]
    pub all_candidates: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Score every tree of every window.
    #[arg(long)]
    pub no_cascade: bool,
    #[command(flatten)]
    pub scan: ScanFlags,
}

/// Defaults, then the config file, then the global preset and seed flags.
/// A `--preset` flag replaces the file's preset but keeps its other keys.
pub fn base_config(cli: &Cli) -> nnnf_core::Result<RunConfig> {
    let mut text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| data::io_error(p, e))?,
        None => String::new(),
    };
    if let Some(p) = &cli.preset {
        Preset::parse(p)?;
        text = text
            .lines()
            .filter(|l| l.split('#').next().and_then(|l| l.split_once('=')).map_or(true, |(k, _)| k.trim() != "preset"))
            .chain([format!("preset = {p}").as_str()])
            .collect::<Vec<_>>()
            .join("\n");
    }
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error: kind={kind} message={flat}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail("UsageError", first);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return fail("InvalidArgument", "--jobs must be positive");
        }
        pool = pool.num_threads(n);
    }
    if let Err(e) = pool.build_global() {
        return fail("InvalidArgument", &e.to_string());
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
