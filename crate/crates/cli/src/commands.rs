use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use lsnet_core::ingest::{self, max_ray_crossings, synth_shapes, Dataset};
use lsnet_core::loss::{cross_iou, giou, giou_loss, smooth_l1_loss};
use lsnet_core::metrics::{oks, quantization_report, QuantizationRow};
use lsnet_core::optimize::{
    compare_losses, fit_offsets, initial_loss, unit_box_target, unit_contour_target, BoxStyle,
    CompareRow, FitConfig, LossKind, LossSetup,
};
use lsnet_core::{decode_offset, soften_target, BoundingBox, CrossOffset, Error, LandmarkSet};
use serde::Serialize;

use crate::args::{
    CompareArgs, FitArgs, FitSettings, LossArgs, OksArgs, QuantizeArgs, SynthArgs, TargetRole,
};
use crate::report::{render, Rendered};

/// Why a command stopped, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

type Outcome = Result<Rendered, Failure>;

pub const LOSS_HEADERS: &[&str] = &["landmark", "loss", "similarity"];

#[derive(Serialize)]
struct LossRow {
    landmark: usize,
    loss: f64,
    similarity: Option<f64>,
}

#[derive(Serialize)]
struct LossEcho<'a> {
    kind: LossKind,
    pred: &'a [[f64; 4]],
    target: &'a [[f64; 4]],
    alpha: Option<f64>,
    beta: f64,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct LossSummary {
    value: f64,
    landmarks: usize,
}

/// Box spanned by [top, left, bottom, right] offsets that each point
/// straight along one axis.
fn rectangle_box(q: &[CrossOffset]) -> Result<BoundingBox, Error> {
    let axis_aligned = q.len() == 4
        && q[0].x_neg == 0.0 && q[0].x_pos == 0.0 && q[0].y_pos == 0.0
        && q[1].x_pos == 0.0 && q[1].y_neg == 0.0 && q[1].y_pos == 0.0
        && q[2].x_neg == 0.0 && q[2].x_pos == 0.0 && q[2].y_neg == 0.0
        && q[3].x_neg == 0.0 && q[3].y_neg == 0.0 && q[3].y_pos == 0.0;
    if !axis_aligned {
        return Err(Error::RectangleOnly(
            "expected 4 axis-aligned offsets ordered top, left, bottom, right".into(),
        ));
    }
    BoundingBox::new(-q[1].x_neg, -q[0].y_neg, q[3].x_pos, q[2].y_pos)
}

pub fn loss(a: &LossArgs) -> Outcome {
    if a.pred.len() != a.target.len() {
        return Err(usage(format!(
            "--pred given {} times but --target {} times",
            a.pred.len(),
            a.target.len()
        )));
    }
    let to_offsets = |v: &[[f64; 4]]| -> Result<Vec<CrossOffset>, Failure> {
        v.iter()
            .map(|c| CrossOffset::new(c[0], c[1], c[2], c[3]).map_err(usage))
            .collect()
    };
    let pred = to_offsets(&a.pred)?;
    let mut target = to_offsets(&a.target)?;
    if a.kind != LossKind::CrossIou && a.alpha.is_some() {
        return Err(usage("--alpha applies to cross-iou only"));
    }
    if let Some(alpha) = a.alpha {
        target = target
            .into_iter()
            .map(|q| soften_target(q, alpha))
            .collect::<Result<_, _>>()
            .map_err(usage)?;
    }

    let rows: Vec<LossRow> = match a.kind {
        LossKind::CrossIou => pred
            .iter()
            .zip(&target)
            .enumerate()
            .map(|(landmark, (p, t))| {
                let c = cross_iou(p, t).map_err(usage)?;
                Ok(LossRow { landmark, loss: 1.0 - c, similarity: Some(c) })
            })
            .collect::<Result<_, Failure>>()?,
        LossKind::SmoothL1 => {
            if !(a.beta > 0.0) {
                return Err(usage(format!("--beta must be > 0, got {}", a.beta)));
            }
            pred.iter()
                .zip(&target)
                .enumerate()
                .map(|(landmark, (p, t))| {
                    let (dp, dt) = (decode_offset(*p).map_err(usage)?, decode_offset(*t).map_err(usage)?);
                    let loss = smooth_l1_loss(&[dp.dx, dp.dy], &[dt.dx, dt.dy], a.beta).map_err(usage)?;
                    Ok(LossRow { landmark, loss, similarity: None })
                })
                .collect::<Result<_, Failure>>()?
        }
        LossKind::Giou => {
            let p = rectangle_box(&pred).map_err(runtime)?;
            let t = rectangle_box(&target).map_err(runtime)?;
            vec![LossRow {
                landmark: 0,
                loss: giou_loss(&p, &t).map_err(runtime)?,
                similarity: Some(giou(&p, &t).map_err(runtime)?),
            }]
        }
    };
    let value = rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
    let echo = LossEcho {
        kind: a.kind,
        pred: &a.pred,
        target: &a.target,
        alpha: a.alpha,
        beta: a.beta,
        seed: None,
    };
    let summary = LossSummary { value, landmarks: pred.len() };
    render("loss", &echo, &summary, &rows, LOSS_HEADERS).map_err(runtime)
}

fn fit_config(loss_kind: LossKind, seed: u64, s: &FitSettings) -> Result<FitConfig, Failure> {
    let config = FitConfig {
        loss_kind,
        optimizer: s.optimizer,
        step_size: s.step_size,
        max_steps: s.max_steps,
        alpha: s.alpha,
        seed,
        convergence_iou: s.convergence_iou,
        smooth_l1_beta: s.beta,
        init: s.init,
    };
    config.validate().map_err(usage)?;
    Ok(config)
}

fn unit_target(role: TargetRole, seed: u64, landmarks: usize) -> Result<LandmarkSet, Failure> {
    match role {
        TargetRole::Extreme => unit_box_target(seed, BoxStyle::Extreme).map_err(runtime),
        TargetRole::Rectangle => unit_box_target(seed, BoxStyle::Rectangle).map_err(runtime),
        TargetRole::Contour => {
            if landmarks < 3 {
                return Err(usage(format!("--landmarks must be >= 3, got {landmarks}")));
            }
            unit_contour_target(seed, landmarks).map_err(runtime)
        }
    }
}

pub const FIT_HEADERS: &[&str] = &["step", "loss"];
pub const SWEEP_HEADERS: &[&str] =
    &["scale", "initial_loss", "final_loss", "steps_taken", "final_decoded_iou", "converged"];

#[derive(Serialize)]
struct FitEcho<'a> {
    mode: &'static str,
    #[serde(flatten)]
    config: &'a FitConfig,
    role: TargetRole,
    scale: Option<f64>,
    scales: Option<&'a [f64]>,
    landmarks: usize,
}

#[derive(Serialize)]
struct TrajectoryRow {
    step: usize,
    loss: f64,
}

#[derive(Serialize)]
struct FitSummary {
    initial_loss: f64,
    final_loss: f64,
    steps_taken: usize,
    final_decoded_iou: f64,
    converged: bool,
    target_scale: f64,
}

#[derive(Serialize)]
struct SweepRow {
    scale: f64,
    initial_loss: f64,
    final_loss: f64,
    steps_taken: usize,
    final_decoded_iou: f64,
    converged: bool,
}

#[derive(Serialize)]
struct SweepSummary {
    /// Initial loss at the last scale over that at the first.
    initial_loss_ratio: f64,
    loss_trajectories: Vec<Vec<f64>>,
}

fn check_scale(s: f64) -> Result<(), Failure> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("scale must be > 0, got {s}")))
    }
}

pub fn fit(a: &FitArgs) -> Outcome {
    let config = fit_config(a.loss, a.seed, &a.settings)?;
    let unit = unit_target(a.role, a.seed, a.landmarks)?;
    let mut echo = FitEcho {
        mode: "single",
        config: &config,
        role: a.role,
        scale: Some(a.scale),
        scales: None,
        landmarks: unit.len(),
    };

    if let Some(scales) = &a.scales {
        if scales.is_empty() {
            return Err(usage("--scales needs at least one value"));
        }
        for &s in scales {
            check_scale(s)?;
        }
        echo.mode = "sweep";
        echo.scale = None;
        echo.scales = Some(scales);
        let mut rows = Vec::with_capacity(scales.len());
        let mut trajectories = Vec::with_capacity(scales.len());
        for &scale in scales {
            let target = unit.scaled(scale);
            let start = initial_loss(&target, &config).map_err(runtime)?;
            let r = fit_offsets(&target, &config).map_err(runtime)?;
            rows.push(SweepRow {
                scale,
                initial_loss: start,
                final_loss: *r.loss_trajectory.last().expect("trajectory holds the start"),
                steps_taken: r.steps_taken,
                final_decoded_iou: r.final_decoded_iou,
                converged: r.converged,
            });
            trajectories.push(r.loss_trajectory);
        }
        let summary = SweepSummary {
            initial_loss_ratio: rows[rows.len() - 1].initial_loss / rows[0].initial_loss,
            loss_trajectories: trajectories,
        };
        return render("fit", &echo, &summary, &rows, SWEEP_HEADERS).map_err(runtime);
    }

    check_scale(a.scale)?;
    let r = fit_offsets(&unit.scaled(a.scale), &config).map_err(runtime)?;
    let rows: Vec<TrajectoryRow> = r
        .loss_trajectory
        .iter()
        .enumerate()
        .map(|(step, &loss)| TrajectoryRow { step, loss })
        .collect();
    let summary = FitSummary {
        initial_loss: r.loss_trajectory[0],
        final_loss: *r.loss_trajectory.last().expect("trajectory holds the start"),
        steps_taken: r.steps_taken,
        final_decoded_iou: r.final_decoded_iou,
        converged: r.converged,
        target_scale: r.target_scale,
    };
    render("fit", &echo, &summary, &rows, FIT_HEADERS).map_err(runtime)
}

pub const COMPARE_HEADERS: &[&str] =
    &["loss_kind", "box_style", "optimizer", "runs", "convergence_rate", "mean_final_iou"];

#[derive(Serialize)]
struct CompareEcho<'a> {
    corpus_size: usize,
    seed: u64,
    init_seed: u64,
    #[serde(flatten)]
    config: &'a FitConfig,
    setups: Vec<String>,
}

#[derive(Serialize)]
struct CompareSummary {
    /// Cross-IoU (extreme) convergence rate minus smooth-l1 (extreme).
    cross_iou_margin: f64,
}

pub fn compare(a: &CompareArgs) -> Outcome {
    if a.corpus_size == 0 {
        return Err(usage("--corpus-size must be >= 1"));
    }
    let base = fit_config(LossKind::CrossIou, a.init_seed, &a.settings)?;
    let setups: Vec<LossSetup> = [
        (LossKind::CrossIou, BoxStyle::Extreme),
        (LossKind::CrossIou, BoxStyle::Rectangle),
        (LossKind::SmoothL1, BoxStyle::Extreme),
        (LossKind::SmoothL1, BoxStyle::Rectangle),
        (LossKind::Giou, BoxStyle::Rectangle),
    ]
    .into_iter()
    .map(|(loss_kind, box_style)| LossSetup {
        box_style,
        config: FitConfig { loss_kind, ..base },
    })
    .collect();
    let rows: Vec<CompareRow> = compare_losses(a.corpus_size, a.seed, &setups).map_err(runtime)?;
    let rate = |k: LossKind| {
        rows.iter()
            .find(|r| r.loss_kind == k && r.box_style == BoxStyle::Extreme)
            .map_or(0.0, |r| r.convergence_rate)
    };
    let echo = CompareEcho {
        corpus_size: a.corpus_size,
        seed: a.seed,
        init_seed: a.init_seed,
        config: &base,
        setups: setups
            .iter()
            .map(|s| format!("{}/{}", s.config.loss_kind, s.box_style))
            .collect(),
    };
    let summary = CompareSummary {
        cross_iou_margin: rate(LossKind::CrossIou) - rate(LossKind::SmoothL1),
    };
    render("compare", &echo, &summary, &rows, COMPARE_HEADERS).map_err(runtime)
}

pub const QUANTIZE_HEADERS: &[&str] = &["n", "ap", "mean_iou", "instances", "skipped"];

#[derive(Serialize)]
struct QuantizeEcho<'a> {
    annotations: Option<&'a Path>,
    synth_count: Option<usize>,
    synth_family: Option<String>,
    seed: Option<u64>,
    n: &'a [usize],
    max_dim: usize,
}

#[derive(Serialize)]
struct QuantizeSummary {
    source: String,
    records: usize,
    skipped_annotations: usize,
    dropped_parts: usize,
    skipped_ids: Vec<u64>,
}

fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    ingest::read_coco_file(path).map_err(runtime)
}

pub fn quantize(a: &QuantizeArgs) -> Outcome {
    if a.n.is_empty() {
        return Err(usage("--n needs at least one landmark count"));
    }
    if let Some(n) = a.n.iter().find(|&&n| n < 3) {
        return Err(usage(format!("landmark counts must be >= 3, got {n}")));
    }
    if a.max_dim < 8 {
        return Err(usage(format!("--max-dim must be >= 8, got {}", a.max_dim)));
    }
    let ds = match &a.annotations {
        Some(path) => read_dataset(path)?,
        None => {
            if a.synth_count == 0 {
                return Err(usage("--synth-count must be >= 1"));
            }
            synth_shapes(a.synth_count, a.synth_seed, a.synth_family).map_err(runtime)?
        }
    };
    let corpus = ds.instance_parts();
    if corpus.is_empty() {
        return Err(runtime(format!("{} holds no polygon instances", ds.source)));
    }
    let report = quantization_report(&corpus, &a.n, a.max_dim).map_err(runtime)?;
    let synth = a.annotations.is_none();
    let echo = QuantizeEcho {
        annotations: a.annotations.as_deref(),
        synth_count: synth.then_some(a.synth_count),
        synth_family: synth.then(|| a.synth_family.to_string()),
        seed: synth.then_some(a.synth_seed),
        n: &a.n,
        max_dim: a.max_dim,
    };
    let summary = QuantizeSummary {
        source: ds.source.clone(),
        records: ds.len(),
        skipped_annotations: ds.skipped,
        dropped_parts: ds.dropped_parts,
        skipped_ids: report.skipped_ids,
    };
    let rows: &[QuantizationRow] = &report.rows;
    render("quantize", &echo, &summary, rows, QUANTIZE_HEADERS).map_err(runtime)
}

pub const OKS_HEADERS: &[&str] = &["instance_id", "oks", "visible"];

#[derive(Serialize)]
struct OksEcho<'a> {
    pred: &'a Path,
    gt: &'a Path,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct OksRow {
    instance_id: u64,
    oks: Option<f64>,
    visible: usize,
}

#[derive(Serialize)]
struct OksSummary {
    mean_oks: Option<f64>,
    instances: usize,
    /// Ground truths without a labeled keypoint.
    unscored: usize,
}

pub fn oks_cmd(a: &OksArgs) -> Outcome {
    let pred = read_dataset(&a.pred)?;
    let gt = read_dataset(&a.gt)?;
    let keyed = |d: &Dataset| -> BTreeSet<u64> {
        d.records
            .iter()
            .filter(|r| r.keypoints.is_some())
            .map(|r| r.instance_id)
            .collect()
    };
    let (pred_ids, gt_ids) = (keyed(&pred), keyed(&gt));
    let unmatched: Vec<String> = pred_ids
        .symmetric_difference(&gt_ids)
        .map(u64::to_string)
        .collect();
    if !unmatched.is_empty() {
        return Err(runtime(format!("unmatched instance ids: {}", unmatched.join(", "))));
    }
    if gt_ids.is_empty() {
        return Err(runtime("no keypoint annotations found"));
    }
    let rows: Vec<OksRow> = gt_ids
        .iter()
        .map(|&id| {
            let kp = |d: &Dataset| d.find(id).and_then(|r| r.keypoints.clone()).expect("keyed id");
            let (p, g) = (kp(&pred), kp(&gt));
            let value = match oks(&p, &g) {
                Ok(v) => Some(v),
                Err(Error::NoVisibleKeypoints) => None,
                Err(e) => return Err(runtime(e)),
            };
            Ok(OksRow { instance_id: id, oks: value, visible: g.visible_count() })
        })
        .collect::<Result<_, Failure>>()?;
    let scored: Vec<f64> = rows.iter().filter_map(|r| r.oks).collect();
    let summary = OksSummary {
        mean_oks: (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64),
        instances: rows.len(),
        unscored: rows.len() - scored.len(),
    };
    let echo = OksEcho { pred: &a.pred, gt: &a.gt, seed: None };
    render("oks", &echo, &summary, &rows, OKS_HEADERS).map_err(runtime)
}

pub const SYNTH_HEADERS: &[&str] = &["instance_id", "parts", "vertices", "max_ray_crossings"];
const RAY_DIRECTIONS: usize = 720;

#[derive(Serialize)]
struct SynthEcho<'a> {
    count: usize,
    seed: u64,
    family: String,
    output: &'a PathBuf,
    ray_directions: usize,
}

#[derive(Serialize)]
struct SynthRow {
    instance_id: u64,
    parts: usize,
    vertices: usize,
    max_ray_crossings: usize,
}

#[derive(Serialize)]
struct SynthSummary {
    source: String,
    instances: usize,
    /// Instances with some center ray crossing the boundary 3 or more times.
    multi_crossing_instances: usize,
    note: String,
}

pub fn synth(a: &SynthArgs) -> Outcome {
    if a.count == 0 {
        return Err(usage("--count must be >= 1"));
    }
    let ds = synth_shapes(a.count, a.seed, a.family).map_err(runtime)?;
    std::fs::write(&a.output, ingest::write_dataset(&ds))
        .map_err(|e| runtime(format!("cannot write {}: {e}", a.output.display())))?;
    let rows: Vec<SynthRow> = ds
        .records
        .iter()
        .map(|r| {
            Ok(SynthRow {
                instance_id: r.instance_id,
                parts: r.parts.len(),
                vertices: r.parts.iter().map(|p| p.len()).sum(),
                max_ray_crossings: max_ray_crossings(&r.parts, RAY_DIRECTIONS).map_err(runtime)?,
            })
        })
        .collect::<Result<_, Failure>>()?;
    let multi = rows.iter().filter(|r| r.max_ray_crossings >= 3).count();
    let note = if multi > 0 {
        format!("multi-crossing instances present: {multi} of {}", rows.len())
    } else {
        "no multi-crossing instances".to_string()
    };
    let echo = SynthEcho {
        count: a.count,
        seed: a.seed,
        family: a.family.to_string(),
        output: &a.output,
        ray_directions: RAY_DIRECTIONS,
    };
    let summary = SynthSummary {
        source: ds.source.clone(),
        instances: rows.len(),
        multi_crossing_instances: multi,
        note,
    };
    render("synth", &echo, &summary, &rows, SYNTH_HEADERS).map_err(runtime)
}
