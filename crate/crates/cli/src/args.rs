use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsnet_core::ingest::ShapeFamily;
use lsnet_core::optimize::{Initialization, LossKind, OptimizerKind};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lsnet", version, about = "Cross-coordinate landmark geometry experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a loss on explicit cross offsets.
    Loss(LossArgs),
    /// Fit a prediction to a seeded target, or sweep target scales.
    Fit(FitArgs),
    /// Compare losses on a shared seeded corpus of box targets.
    Compare(CompareArgs),
    /// Landmark-count fidelity study on polygon masks.
    Quantize(QuantizeArgs),
    /// Keypoint similarity between two annotation files.
    Oks(OksArgs),
    /// Write a seeded synthetic COCO-format corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the report rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_quad(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 comma-separated numbers, got {}", parts.len()));
    }
    let mut out = [0.0; 4];
    for (slot, p) in out.iter_mut().zip(parts) {
        let v: f64 = p.trim().parse().map_err(|_| format!("not a number: {p:?}"))?;
        if !v.is_finite() {
            return Err(format!("not finite: {p:?}"));
        }
        *slot = v;
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Predicted offset as x_neg,x_pos,y_neg,y_pos; repeat per landmark.
    #[arg(long, required = true, value_parser = parse_quad, allow_hyphen_values = true)]
    pub pred: Vec<[f64; 4]>,
    /// Target offset, same layout as --pred.
    #[arg(long, required = true, value_parser = parse_quad, allow_hyphen_values = true)]
    pub target: Vec<[f64; 4]>,
    #[arg(long, default_value = "cross-iou")]
    pub kind: LossKind,
    /// Soften the target before a cross-iou evaluation.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Transition point of smooth-l1.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRole {
    /// Extreme points of a convex shape.
    Extreme,
    /// Edge midpoints of the same shape's box.
    Rectangle,
    /// Contour samples of a star shape.
    Contour,
}

#[derive(Debug, Args)]
pub struct FitSettings {
    #[arg(long, default_value = "adaptive")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    pub convergence_iou: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value = "seeded")]
    pub init: Initialization,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value = "cross-iou")]
    pub loss: LossKind,
    #[command(flatten)]
    pub settings: FitSettings,
    /// Seeds both the target shape and the initial prediction.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TargetRole::Extreme)]
    pub role: TargetRole,
    /// Diagonal of the target's landmark box.
    #[arg(long, default_value_t = 10.0)]
    pub scale: f64,
    /// Landmark count for the contour role.
    #[arg(long, default_value_t = 36)]
    pub landmarks: usize,
    /// Comma-separated scales; switches to a sweep over the same geometry.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 100)]
    pub corpus_size: usize,
    /// Seeds the target corpus.
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Base seed for initial predictions; target i uses base + i.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    #[command(flatten)]
    pub settings: FitSettings,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// COCO-format annotation file; without it a synthetic corpus is used.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, default_value_t = 500, conflicts_with = "annotations")]
    pub synth_count: usize,
    #[arg(long, default_value_t = 0, conflicts_with = "annotations")]
    pub synth_seed: u64,
    #[arg(long, default_value = "convex", conflicts_with = "annotations")]
    pub synth_family: ShapeFamily,
    /// Comma-separated landmark counts.
    #[arg(long, value_delimiter = ',', default_value = "18,36,72")]
    pub n: Vec<usize>,
    /// Cells along the longer side of each instance's raster.
    #[arg(long, default_value_t = 512)]
    pub max_dim: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OksArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "convex")]
    pub family: ShapeFamily,
    /// Destination of the COCO-format corpus.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
}
