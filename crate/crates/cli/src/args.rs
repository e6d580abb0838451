use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use etld::classifier::{DEFAULT_EPOCHS, DEFAULT_LAMBDA, DEFAULT_MAP_ORDER, DEFAULT_MAP_PERIOD, DEFAULT_ONLINE_STEPS};
use etld::codebook::DEFAULT_CODEBOOK_SIZE;
use etld::descriptor::{DEFAULT_RECENT_CAPACITY, DEFAULT_RINGS, DEFAULT_R_MAX, DEFAULT_R_MIN, DEFAULT_WEDGES};
use etld::eval::DEFAULT_OVERLAP_THRESHOLD;
use etld::event_io::{DAVIS_HEIGHT, DAVIS_WIDTH};
use etld::tracker::{DEFAULT_PADDING, DEFAULT_TAU, DEFAULT_TAU_T};
use etld::{EtldConfig, Roi};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "etld", version, about = "Long-term object tracking on event-camera streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a codebook on the training window of an event file.
    Codebook(CodebookArgs),
    /// Train on the first window, track through the rest, optionally evaluate.
    Track(TrackArgs),
    /// Evaluate an existing track log against annotations.
    Eval(EvalArgs),
    /// Generate a synthetic event sequence with ground truth.
    Synth(SynthArgs),
    /// Repeat `track` over a list of values for one parameter.
    Sweep(SweepArgs),
    /// Measure per-event step latency.
    Bench(BenchArgs),
}

fn parse_roi(s: &str) -> std::result::Result<Roi, String> {
    let roi = Roi::parse(s).map_err(|e| e.to_string())?;
    if roi.w == 0 || roi.h == 0 {
        return Err(format!("roi {s:?} has zero width or height"));
    }
    Ok(roi)
}

/// Tracker and model parameters shared by every command that trains.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Codebook size K.
    #[arg(long, default_value_t = DEFAULT_CODEBOOK_SIZE)]
    pub codebook_size: usize,
    /// Trigger fraction shared by tracker and detector.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Tracker confidence as a fraction of the mean score.
    #[arg(long, default_value_t = DEFAULT_TAU_T)]
    pub tau_t: f64,
    /// Candidate offsets in pixels around the current box.
    #[arg(long, default_value_t = DEFAULT_PADDING)]
    pub padding: u32,
    /// Training window length in milliseconds.
    #[arg(long, default_value_t = 500)]
    pub train_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RINGS)]
    pub rings: usize,
    #[arg(long, default_value_t = DEFAULT_WEDGES)]
    pub wedges: usize,
    #[arg(long, default_value_t = DEFAULT_R_MIN)]
    pub r_min: f64,
    #[arg(long, default_value_t = DEFAULT_R_MAX)]
    pub r_max: f64,
    /// Events kept for descriptor context.
    #[arg(long, default_value_t = DEFAULT_RECENT_CAPACITY)]
    pub recent_capacity: usize,
    /// Frequencies per side in the chi-square feature map.
    #[arg(long, default_value_t = DEFAULT_MAP_ORDER)]
    pub map_order: usize,
    #[arg(long, default_value_t = DEFAULT_MAP_PERIOD)]
    pub map_period: f64,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub svm_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub svm_lambda: f64,
    /// Subgradient steps per online update.
    #[arg(long, default_value_t = DEFAULT_ONLINE_STEPS)]
    pub online_steps: usize,
    #[arg(long, default_value_t = DAVIS_WIDTH)]
    pub sensor_width: u32,
    #[arg(long, default_value_t = DAVIS_HEIGHT)]
    pub sensor_height: u32,
}

impl Default for ModelArgs {
    fn default() -> Self {
        ModelArgs::from_config(&EtldConfig::default())
    }
}

impl ModelArgs {
    pub fn from_config(cfg: &EtldConfig) -> Self {
        Self {
            codebook_size: cfg.codebook_size,
            tau: cfg.tau,
            tau_t: cfg.tau_t,
            padding: cfg.padding,
            train_ms: cfg.train_us / 1000,
            seed: cfg.seed,
            rings: cfg.rings,
            wedges: cfg.wedges,
            r_min: cfg.r_min,
            r_max: cfg.r_max,
            recent_capacity: cfg.recent_capacity,
            map_order: cfg.map_order,
            map_period: cfg.map_period,
            svm_epochs: cfg.svm_epochs,
            svm_lambda: cfg.svm_lambda,
            online_steps: cfg.online_steps,
            sensor_width: cfg.sensor_width,
            sensor_height: cfg.sensor_height,
        }
    }

    /// Builds and range-checks the pipeline configuration.
    pub fn config(&self) -> Result<EtldConfig> {
        let cfg = EtldConfig {
            codebook_size: self.codebook_size,
            tau: self.tau,
            tau_t: self.tau_t,
            padding: self.padding,
            train_us: self.train_ms.saturating_mul(1000),
            rings: self.rings,
            wedges: self.wedges,
            r_min: self.r_min,
            r_max: self.r_max,
            recent_capacity: self.recent_capacity,
            map_order: self.map_order,
            map_period: self.map_period,
            svm_epochs: self.svm_epochs,
            svm_lambda: self.svm_lambda,
            online_steps: self.online_steps,
            sensor_width: self.sensor_width,
            sensor_height: self.sensor_height,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CodebookArgs {
    /// Event file, one "t x y p" line per event (t in seconds).
    #[arg(long)]
    pub events: PathBuf,
    /// Output codebook file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    /// Event file, one "t x y p" line per event.
    #[arg(long)]
    pub events: PathBuf,
    /// Initial box as x,y,w,h, drawn over the training window.
    #[arg(long, value_parser = parse_roi)]
    pub roi: Roi,
    /// Ground-truth CSV; enables evaluation.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, default_value = "etld-out")]
    pub out_dir: PathBuf,
    /// IoU needed for an overlap success.
    #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
    pub overlap_threshold: f64,
    /// Write the detection matrix as PGM at every global search.
    #[arg(long)]
    pub dump_detection: bool,
    /// Also write the trained codebook and classifier.
    #[arg(long)]
    pub save_models: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Track log written by `track`.
    #[arg(long)]
    pub track: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
    pub overlap_threshold: f64,
    /// Where to write report.json and intervals.csv; prints only when absent.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DAVIS_WIDTH)]
    pub sensor_width: u32,
    #[arg(long, default_value_t = DAVIS_HEIGHT)]
    pub sensor_height: u32,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Scene description (key = value lines); the translation fixture when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub duration_ms: u64,
    /// Overrides the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Occlusion window START-END in milliseconds; repeatable.
    #[arg(long = "occlude")]
    pub occlusions: Vec<String>,
    #[arg(long, default_value = "synth-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "codebook_size", alias = "codebook-size")]
    CodebookSize,
    #[value(name = "tau")]
    Tau,
    #[value(name = "tau_t", alias = "tau-t")]
    TauT,
    #[value(name = "init_offset_percent", alias = "init-offset-percent")]
    InitOffsetPercent,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::CodebookSize => "codebook_size",
            SweepParam::Tau => "tau",
            SweepParam::TauT => "tau_t",
            SweepParam::InitOffsetPercent => "init_offset_percent",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, value_parser = parse_roi)]
    pub roi: Roi,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "etld-sweep")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
    pub overlap_threshold: f64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, value_parser = parse_roi)]
    pub roi: Roi,
    #[arg(long, default_value = "etld-bench")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}
