use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use layervec::adapt::{self, PruneStrategy};
use layervec::optimize;
use layervec::pipeline::{self, AlvConfig};
use layervec::raster::DEFAULT_SMOOTHING;
use layervec::scene::{DEFAULT_SEED_RADIUS, DEFAULT_SEGMENTS};

#[derive(Debug, Parser)]
#[command(name = "layervec", version, about = "Vectorize layered rasters into z-ordered SVG paths")]
pub struct Cli {
    /// Print the default hyperparameters as JSON and exit.
    #[arg(long)]
    pub print_defaults: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit every layer of a manifest and write an SVG, a run trace and a metrics report.
    Vectorize(VectorizeArgs),
    /// Rasterize an SVG to PNG.
    Render(RenderArgs),
    /// Compare pruning strategies on an SVG at fixed removal ratios.
    PruneBench(PruneBenchArgs),
    /// MSE, PSNR and SSIM between two PNGs.
    Metrics(MetricsArgs),
    /// Per-primitive visible contribution of every path in an SVG.
    Inspect(InspectArgs),
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Args)]
pub struct Hyperparameters {
    /// Initial primitive budget shared among layers by mask area.
    #[arg(long, default_value_t = pipeline::DEFAULT_BUDGET)]
    pub budget: usize,
    /// Optimizer steps per layer.
    #[arg(long, default_value_t = pipeline::DEFAULT_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = adapt::DEFAULT_ADAPT_START)]
    pub adapt_start: usize,
    #[arg(long, default_value_t = adapt::DEFAULT_ADAPT_INTERVAL)]
    pub adapt_interval: usize,
    /// Pruning threshold on visible alpha area, in pixels.
    #[arg(long, default_value_t = adapt::DEFAULT_TAU_P)]
    pub tau_p: f64,
    /// Sampling temperature for new primitive locations.
    #[arg(long, default_value_t = adapt::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long, default_value_t = adapt::DEFAULT_TARGET_LOSS)]
    pub target_loss: f64,
    /// Addition events averaged for the per-primitive gain.
    #[arg(long, default_value_t = adapt::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = adapt::DEFAULT_N_MIN)]
    pub n_min: usize,
    #[arg(long, default_value_t = adapt::DEFAULT_N_MAX)]
    pub n_max: usize,
    /// Per-primitive gain assumed before any addition has been measured.
    #[arg(long, default_value_t = adapt::DEFAULT_SEED_DELTA)]
    pub seed_delta: f64,
    #[arg(long, default_value_t = optimize::DEFAULT_LAMBDA_MASK)]
    pub lambda_mask: f64,
    /// Weight of the in-mask alpha mismatch term; 0 compares color only.
    #[arg(long, default_value_t = optimize::DEFAULT_ALPHA_WEIGHT)]
    pub alpha_weight: f64,
    #[arg(long, default_value_t = optimize::DEFAULT_LR_POINTS)]
    pub lr_points: f64,
    #[arg(long, default_value_t = optimize::DEFAULT_LR_COLORS)]
    pub lr_colors: f64,
    /// Final learning rate as a fraction of the initial one.
    #[arg(long, default_value_t = optimize::DEFAULT_DECAY_RATIO)]
    pub decay_ratio: f64,
    /// Antialiasing band width in pixels.
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    pub smoothing: f64,
    /// Cubic segments per path.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    pub segments: usize,
    /// Radius of newly seeded paths, in pixels.
    #[arg(long, default_value_t = DEFAULT_SEED_RADIUS)]
    pub seed_radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Layers fitted concurrently [default: available cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Pruning score used during fitting.
    #[arg(long, default_value_t = PruneStrategy::OcclusionAware)]
    pub strategy: PruneStrategy,
    /// Prune this fraction at each checkpoint instead of thresholding.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long)]
    pub no_add: bool,
}

impl Hyperparameters {
    pub fn config(&self) -> AlvConfig {
        let mut cfg = AlvConfig {
            budget: self.budget,
            iterations: self.iters,
            smoothing: self.smoothing,
            segments: self.segments,
            seed_radius: self.seed_radius,
            seed: self.seed,
            enable_prune: !self.no_prune,
            enable_add: !self.no_add,
            jobs: self.jobs.unwrap_or_else(default_jobs),
            ..AlvConfig::default()
        };
        cfg.prune.strategy = self.strategy;
        cfg.prune.tau_p = self.tau_p;
        cfg.prune.ratio = self.ratio;
        cfg.add.temperature = self.temperature;
        cfg.add.target_loss = self.target_loss;
        cfg.add.window = self.window;
        cfg.add.seed_delta = self.seed_delta;
        cfg.add.n_min = self.n_min;
        cfg.add.n_max = self.n_max;
        cfg.add.start = self.adapt_start;
        cfg.add.interval = self.adapt_interval;
        cfg.loss.lambda_mask = self.lambda_mask;
        cfg.loss.alpha_weight = self.alpha_weight;
        cfg.optimizer.lr_points = self.lr_points;
        cfg.optimizer.lr_colors = self.lr_colors;
        cfg.optimizer.decay_ratio = self.decay_ratio;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct VectorizeArgs {
    /// Layer manifest (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
    /// Run trace, one JSON record per line [default: <out>.trace.jsonl].
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Metrics report [default: <out>.metrics.json].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the full-precision document as JSON.
    #[arg(long)]
    pub document: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyperparameters,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Resolution multiplier relative to the SVG canvas.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    pub smoothing: f64,
}

#[derive(Debug, Args)]
pub struct PruneBenchArgs {
    /// SVG whose paths, all layers stacked, are pruned.
    #[arg(long)]
    pub input: PathBuf,
    /// PNG the pruned renders are scored against.
    #[arg(long)]
    pub reference: PathBuf,
    /// Strategies to compare (comma-separated) [default: all].
    #[arg(long, value_delimiter = ',')]
    pub strategy: Vec<PruneStrategy>,
    /// Removal fractions (comma-separated).
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3])]
    pub ratio: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    pub smoothing: f64,
    /// Write the rows as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Rendered PNG.
    #[arg(long)]
    pub input: PathBuf,
    /// Reference PNG.
    #[arg(long)]
    pub reference: PathBuf,
    /// Restrict the comparison to this binary mask.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    pub smoothing: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
