use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dirdet", version, about = "Direction-aware rotated box detection utilities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print IoU, DirCorr and DirIoU of two boxes.
    Iou(IouArgs),
    /// Tabulate IoU, DirCorr and DirIoU of two same-center boxes against their angle difference.
    Curve(CurveArgs),
    /// Direction-aware non-maximum suppression of a detection file.
    Nms(NmsArgs),
    /// Evaluate detections against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene and perturbed detections.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct IouArgs {
    /// First box as cx,cy,w,h[,theta]; theta in radians, omitted for direction-free boxes.
    #[arg(long, value_name = "CX,CY,W,H[,THETA]", allow_hyphen_values = true)]
    pub box_a: String,
    /// Second box, same format.
    #[arg(long, value_name = "CX,CY,W,H[,THETA]", allow_hyphen_values = true)]
    pub box_b: String,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, default_value_t = 40.0)]
    pub w: f64,
    #[arg(long, default_value_t = 70.0)]
    pub h: f64,
    /// Angle step in degrees; must divide 360.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    /// Detections JSONL.
    pub detections: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub dir_iou_thresh: f64,
    #[arg(long, default_value_t = 0.0)]
    pub score_thresh: f64,
    #[command(flatten)]
    pub common: CommonArgs,
    /// JSONL destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth JSONL.
    pub ground_truth: PathBuf,
    /// Detections JSONL.
    pub detections: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub dir_iou_thresh: f64,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON class table replacing the built-in bee/abdomen classes.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Drop theta on direction-free classes with a warning instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of images; image i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub images: u64,
    /// Objects per class for every class; overrides --bees and --abdomens.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 40)]
    pub bees: usize,
    #[arg(long, default_value_t = 10)]
    pub abdomens: usize,
    /// Minimum center distance in pixels.
    #[arg(long, default_value_t = 40.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 512)]
    pub image_size: u32,
    #[arg(long, default_value_t = 10_000)]
    pub max_attempts: usize,
    /// Center noise sigma in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub center_noise: f64,
    /// Angle noise sigma in radians.
    #[arg(long, default_value_t = 0.0)]
    pub angle_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fp_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fn_rate: f64,
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Directory receiving gt.jsonl and det.jsonl.
    #[arg(long)]
    pub output: PathBuf,
}
