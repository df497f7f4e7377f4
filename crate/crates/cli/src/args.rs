use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evflow::Vec3;

#[derive(Debug, Parser)]
#[command(name = "evflow", version, about = "Per-event normal flow from event clouds")]
pub struct Cli {
    /// Print the effective configuration of the subcommand and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate events from a scene of straight edges under rigid motion.
    Simulate(SimulateArgs),
    /// Train a normal-flow head on simulated ground truth.
    Train(TrainArgs),
    /// Predict per-event normal flow with rotation-ensemble uncertainty.
    Infer(InferArgs),
    /// Dump the local encodings of an event file.
    Encode(EncodeArgs),
    /// Score predictions against ground-truth optical flow.
    EvalFlow(EvalFlowArgs),
    /// Estimate the translation direction from predictions and a known rotation.
    Egomotion(EgomotionArgs),
    /// Render predictions as an HSV flow image (binary PPM).
    Plot(PlotArgs),
}

/// Comma-separated 3-vector, e.g. `0,0,1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple(pub Vec3);

impl FromStr for Triple {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected three comma-separated numbers, got `{s}`"));
        }
        let mut v = [0.0f64; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
            if !slot.is_finite() {
                return Err(format!("`{p}` is not finite"));
            }
        }
        Ok(Triple(Vec3::new(v[0], v[1], v[2])))
    }
}

impl std::fmt::Display for Triple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.0.x, self.0.y, self.0.z)
    }
}

/// Neighborhood radii shared by training, inference and encoding.
#[derive(Debug, Clone, Copy, Args)]
pub struct NeighborhoodArgs {
    /// Temporal radius, seconds.
    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,
    /// Spatial radius along x, normalized pixels.
    #[arg(long, default_value_t = 0.02)]
    pub dx: f64,
    /// Spatial radius along y, normalized pixels.
    #[arg(long, default_value_t = 0.02)]
    pub dy: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene file (`x0 y0 x1 y1 depth density` per line). Without it a random
    /// scene is generated from the seed.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Translation velocity. Defaults to the generated motion, or zero with --scene.
    #[arg(long)]
    pub v: Option<Triple>,
    /// Angular velocity, rad/s. Defaults like --v.
    #[arg(long)]
    pub w: Option<Triple>,
    /// Start of the simulated window, seconds.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Duration of the simulated window, seconds.
    #[arg(long, default_value_t = 0.1)]
    pub t: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output event file (EVT1).
    #[arg(long, default_value = "events.evt")]
    pub out: PathBuf,
    /// Ground-truth sidecar `t,x,y,ux,uy,nx,ny,Z`.
    #[arg(long, default_value = "gt.csv")]
    pub gt: PathBuf,
    /// Also write the angular velocity as a two-sample IMU file.
    #[arg(long)]
    pub imu: Option<PathBuf>,
    /// Also write the (possibly generated) scene.
    #[arg(long)]
    pub save_scene: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    /// Radial plus angular motion-field loss.
    MotionField,
    /// Baseline: squared norm error plus cosine direction error.
    NormDirection,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Ground-truth files (`t,x,y,ux,uy,nx,ny,Z` or `t,x,y,ux,uy`), one per recording.
    #[arg(long = "gt", default_value = "gt.csv", num_args = 1..)]
    pub gt: Vec<PathBuf>,
    #[arg(long, default_value = "model.nfm")]
    pub out: PathBuf,
    /// Per-epoch CSV log `epoch,mean_loss,mean_pee_train`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Maximum supervised events per step.
    #[arg(long, default_value_t = 2048)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    /// Shape constant of the angular loss.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Number of random features.
    #[arg(long, default_value_t = 384)]
    pub dim: usize,
    #[command(flatten)]
    pub nbhd: NeighborhoodArgs,
    #[arg(long, value_enum, default_value_t = LossArg::MotionField)]
    pub loss: LossArg,
    /// Disable rotation, scaling and subsampling augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the random projection (stored in the model file).
    #[arg(long, default_value_t = 0)]
    pub projection_seed: u64,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, default_value = "events.evt")]
    pub events: PathBuf,
    #[arg(long, default_value = "model.nfm")]
    pub model: PathBuf,
    /// Camera file; when given, event coordinates are pixels and are undistorted first.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, default_value = "pred.csv")]
    pub out: PathBuf,
    /// Rotation-ensemble size; 1 disables uncertainty.
    #[arg(long, default_value_t = 5)]
    pub ensembles: usize,
    /// Circular-std threshold (radians) above which predictions are invalid.
    #[arg(long, default_value_t = 0.3)]
    pub unc_thresh: f64,
    /// Slice length, seconds.
    #[arg(long, default_value_t = 0.02)]
    pub slice: f64,
    /// Maximum events per slice before subsampling.
    #[arg(long, default_value_t = 80_000)]
    pub max_events: usize,
    #[command(flatten)]
    pub nbhd: NeighborhoodArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long, default_value = "events.evt")]
    pub events: PathBuf,
    /// Output encoding file (VKM1).
    #[arg(long, default_value = "encoding.vkm")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 384)]
    pub dim: usize,
    #[arg(long, default_value_t = 25.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0)]
    pub projection_seed: u64,
    #[command(flatten)]
    pub nbhd: NeighborhoodArgs,
}

#[derive(Debug, Args)]
pub struct EvalFlowArgs {
    /// Prediction file `t,x,y,nx,ny,sigma,valid`.
    #[arg(long, default_value = "pred.csv")]
    pub pred: PathBuf,
    #[arg(long, default_value = "gt.csv")]
    pub gt: PathBuf,
    /// Score the ground-truth normal flow instead of a prediction file.
    #[arg(long)]
    pub use_gt_normal: bool,
    /// Per-window breakdown CSV.
    #[arg(long)]
    pub windows: Option<PathBuf>,
    /// Window length for the breakdown, seconds.
    #[arg(long, default_value_t = 0.02)]
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Svm,
    Negdepth,
}

#[derive(Debug, Args)]
pub struct EgomotionArgs {
    #[arg(long, default_value = "pred.csv")]
    pub pred: PathBuf,
    /// IMU file `t,wx,wy,wz`.
    #[arg(long, conflicts_with = "omega")]
    pub imu: Option<PathBuf>,
    /// Constant angular velocity instead of an IMU file.
    #[arg(long)]
    pub omega: Option<Triple>,
    #[arg(long, value_enum, default_value_t = SolverArg::Svm)]
    pub solver: SolverArg,
    /// Window length, seconds.
    #[arg(long, default_value_t = 0.1)]
    pub window: f64,
    /// SVM regularization.
    #[arg(long, default_value_t = 1e-7)]
    pub lambda: f64,
    #[arg(long, default_value = "ego.csv")]
    pub out: PathBuf,
    /// Ground-truth velocity: scale the unit estimates by its speed and report the RMS error.
    #[arg(long)]
    pub scale_gt: Option<Triple>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, default_value = "pred.csv")]
    pub pred: PathBuf,
    #[arg(long, default_value = "flow.ppm")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    /// Normalized-coordinate extent `xmin,xmax,ymin,ymax`; defaults to the
    /// bounding box of the events.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub extent: Option<Vec<f64>>,
}
