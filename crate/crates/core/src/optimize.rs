//! Gradient-descent harness that fits predicted offsets to a landmark target
//! under the cross-IoU, smooth-L1 or GIoU loss.
//!
//! Each loss optimizes its natural parameterization:
//! - cross-IoU: the four non-negative components of every landmark, against
//!   the softened target encoding;
//! - smooth-L1: the signed `(dx, dy)` of every landmark;
//! - GIoU: the four anchor-to-edge distances of a rectangle.
//!
//! Fit quality is always judged on decoded geometry: the box spanned by the
//! decoded extreme landmarks, or the mean hard-encoded cross-IoU for contour
//! and keypoint sets.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cross_coord::{
    decode_offset, encode_offset, landmarks_to_cross, soften_target, AnchorPoint, CrossOffset,
    LandmarkRole, LandmarkSet, OffsetVector, DEFAULT_ALPHA,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point};
use crate::ingest::{synth_shapes, ShapeFamily};
use crate::landmarks::extreme_landmarks;
use crate::loss::{
    box_iou, cross_iou, cross_iou_loss, cross_iou_loss_grad, giou, giou_grad, smooth_l1_grad,
    smooth_l1_loss,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossIou,
    SmoothL1,
    Giou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent with a constant step.
    FixedStep,
    /// Adam-style normalized direction, scaled by each landmark's current
    /// parameter norm so that step sizes carry no units.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Components drawn from the seed.
    Seeded,
    /// Start exactly at the loss's optimum.
    AtTarget,
}

/// How the four box landmarks are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxStyle {
    /// Edge midpoints: every landmark offset is axis-aligned.
    Rectangle,
    /// The instance's extreme points.
    Extreme,
}

macro_rules! named_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(&self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.replace('-', "_").as_str() {
                    $($name => Ok($variant),)+
                    other => Err(Error::InvalidParameter(format!(
                        "unknown {} {other:?}", stringify!($ty)
                    ))),
                }
            }
        }
    };
}

named_enum!(LossKind {
    LossKind::CrossIou => "cross_iou",
    LossKind::SmoothL1 => "smooth_l1",
    LossKind::Giou => "giou",
});

named_enum!(OptimizerKind {
    OptimizerKind::FixedStep => "fixed_step",
    OptimizerKind::Adaptive => "adaptive",
});

named_enum!(BoxStyle {
    BoxStyle::Rectangle => "rectangle",
    BoxStyle::Extreme => "extreme",
});

named_enum!(Initialization {
    Initialization::Seeded => "seeded",
    Initialization::AtTarget => "at_target",
});

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss_kind: LossKind,
    pub optimizer: OptimizerKind,
    pub step_size: f64,
    pub max_steps: usize,
    /// Target softening for the cross-IoU loss.
    pub alpha: f64,
    pub seed: u64,
    pub convergence_iou: f64,
    pub smooth_l1_beta: f64,
    pub init: Initialization,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::CrossIou,
            optimizer: OptimizerKind::Adaptive,
            step_size: 0.05,
            max_steps: 1000,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            convergence_iou: 0.99,
            smooth_l1_beta: 1.0,
            init: Initialization::Seeded,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if !(self.convergence_iou > 0.0 && self.convergence_iou <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "convergence_iou must lie in (0, 1], got {}",
                self.convergence_iou
            )));
        }
        if !(self.smooth_l1_beta > 0.0 && self.smooth_l1_beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "smooth_l1_beta must be > 0, got {}",
                self.smooth_l1_beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub loss_trajectory: Vec<f64>,
    pub steps_taken: usize,
    pub final_decoded_iou: f64,
    pub converged: bool,
    /// Diagonal of the box spanned by the target landmarks.
    pub target_scale: f64,
}

/// Landmark set of a box in the given style. Rectangle style ignores the
/// extreme points and uses the edge midpoints of their box.
pub fn box_target(extremes: &LandmarkSet, style: BoxStyle) -> Result<LandmarkSet> {
    if extremes.role() != LandmarkRole::Extreme {
        return Err(Error::InvalidParameter("box targets need an extreme landmark set".into()));
    }
    match style {
        BoxStyle::Extreme => Ok(extremes.clone()),
        BoxStyle::Rectangle => {
            let b = landmark_box(extremes.landmarks()).ok_or_else(|| {
                Error::InvalidParameter("extreme landmarks do not span a box".into())
            })?;
            let c = b.center();
            LandmarkSet::new(
                AnchorPoint::from(c),
                vec![
                    Point::new(c.x, b.y_min),
                    Point::new(b.x_min, c.y),
                    Point::new(c.x, b.y_max),
                    Point::new(b.x_max, c.y),
                ],
                LandmarkRole::Extreme,
            )
        }
    }
}

/// Box read off landmarks ordered top, left, bottom, right; `None` when
/// the order is inverted.
fn landmark_box(p: &[Point]) -> Option<BoundingBox> {
    BoundingBox::new(p[1].x, p[0].y, p[3].x, p[2].y).ok()
}

fn is_rectangle(set: &LandmarkSet) -> bool {
    let a = set.anchor();
    let p = set.landmarks();
    set.role() == LandmarkRole::Extreme
        && p[0].x == a.x
        && p[2].x == a.x
        && p[1].y == a.y
        && p[3].y == a.y
}

/// One loss in its own parameterization.
trait Problem: Sync {
    fn loss(&self, params: &[f64]) -> f64;
    fn grad(&self, params: &[f64]) -> Vec<f64>;
    fn decoded_iou(&self, params: &[f64]) -> f64;
    /// Parameters that share one trust scale in the adaptive optimizer.
    fn group(&self) -> usize;
    fn non_negative(&self) -> bool;
}

struct Evaluator {
    anchor: AnchorPoint,
    role: LandmarkRole,
    target_box: Option<BoundingBox>,
    target_hard: Vec<CrossOffset>,
}

impl Evaluator {
    fn new(target: &LandmarkSet) -> Self {
        let role = target.role();
        Self {
            anchor: target.anchor(),
            role,
            target_box: (role == LandmarkRole::Extreme)
                .then(|| landmark_box(target.landmarks()))
                .flatten(),
            target_hard: landmarks_to_cross(target),
        }
    }

    fn iou_of_points(&self, pts: &[Point]) -> f64 {
        match self.role {
            LandmarkRole::Extreme => match (landmark_box(pts), self.target_box) {
                (Some(p), Some(t)) => box_iou(&p, &t).unwrap_or(0.0),
                _ => 0.0,
            },
            _ => {
                let total: f64 = pts
                    .iter()
                    .zip(&self.target_hard)
                    .map(|(p, t)| {
                        let q = encode_offset(OffsetVector::between(&self.anchor, p))
                            .expect("finite prediction");
                        cross_iou(&q, t).unwrap_or(0.0)
                    })
                    .sum();
                total / pts.len() as f64
            }
        }
    }
}

fn to_cross(params: &[f64]) -> Vec<CrossOffset> {
    params
        .chunks_exact(4)
        .map(|c| CrossOffset::from_array([c[0], c[1], c[2], c[3]]))
        .collect()
}

struct CrossIouProblem {
    eval: Evaluator,
    soft_target: Vec<CrossOffset>,
}

impl Problem for CrossIouProblem {
    fn loss(&self, params: &[f64]) -> f64 {
        cross_iou_loss(&to_cross(params), &self.soft_target)
            .expect("non-negative parameters")
            .value
    }

    fn grad(&self, params: &[f64]) -> Vec<f64> {
        cross_iou_loss_grad(&to_cross(params), &self.soft_target)
            .expect("non-negative parameters")
            .into_iter()
            .flatten()
            .collect()
    }

    fn decoded_iou(&self, params: &[f64]) -> f64 {
        let pts: Vec<Point> = to_cross(params)
            .into_iter()
            .map(|q| self.eval.anchor.offset(decode_offset(q).expect("non-negative")))
            .collect();
        self.eval.iou_of_points(&pts)
    }

    fn group(&self) -> usize {
        4
    }

    fn non_negative(&self) -> bool {
        true
    }
}

struct SmoothL1Problem {
    eval: Evaluator,
    target: Vec<f64>,
    beta: f64,
}

impl Problem for SmoothL1Problem {
    fn loss(&self, params: &[f64]) -> f64 {
        smooth_l1_loss(params, &self.target, self.beta).expect("matching lengths")
    }

    fn grad(&self, params: &[f64]) -> Vec<f64> {
        smooth_l1_grad(params, &self.target, self.beta).expect("matching lengths")
    }

    fn decoded_iou(&self, params: &[f64]) -> f64 {
        let pts: Vec<Point> = params
            .chunks_exact(2)
            .map(|d| self.eval.anchor.offset(OffsetVector::new(d[0], d[1])))
            .collect();
        self.eval.iou_of_points(&pts)
    }

    fn group(&self) -> usize {
        2
    }

    fn non_negative(&self) -> bool {
        false
    }
}

/// Parameters are `[top, left, bottom, right]` distances from the anchor.
struct GiouProblem {
    anchor: AnchorPoint,
    target_box: BoundingBox,
}

impl GiouProblem {
    fn boxed(&self, d: &[f64]) -> BoundingBox {
        BoundingBox {
            x_min: self.anchor.x - d[1],
            y_min: self.anchor.y - d[0],
            x_max: self.anchor.x + d[3],
            y_max: self.anchor.y + d[2],
        }
    }
}

impl Problem for GiouProblem {
    fn loss(&self, params: &[f64]) -> f64 {
        1.0 - giou(&self.boxed(params), &self.target_box).expect("non-negative distances")
    }

    fn grad(&self, params: &[f64]) -> Vec<f64> {
        let g = giou_grad(&self.boxed(params), &self.target_box).expect("non-negative distances");
        // loss = 1 - giou; x_min = ax - left, y_min = ay - top, ...
        vec![g[1], g[0], -g[3], -g[2]]
    }

    fn decoded_iou(&self, params: &[f64]) -> f64 {
        box_iou(&self.boxed(params), &self.target_box).unwrap_or(0.0)
    }

    fn group(&self) -> usize {
        4
    }

    fn non_negative(&self) -> bool {
        true
    }
}

/// Seeded cross-offset initialization: every component uniform in
/// `[0.1, 1.0] * scale / 10`.
pub fn seeded_prediction(n: usize, scale: f64, seed: u64) -> Vec<CrossOffset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = scale / 10.0;
    (0..n)
        .map(|_| CrossOffset::from_array(std::array::from_fn(|_| rng.gen_range(0.1..=1.0) * unit)))
        .collect()
}

fn target_scale(target: &LandmarkSet) -> Result<f64> {
    let b = BoundingBox::enclosing(target.landmarks())?;
    let d = b.diagonal();
    if !(d > 0.0) {
        return Err(Error::InvalidParameter("target landmarks span no area".into()));
    }
    Ok(d)
}

fn build_problem(target: &LandmarkSet, config: &FitConfig) -> Result<(Box<dyn Problem>, Vec<f64>)> {
    let scale = target_scale(target)?;
    let seeded = seeded_prediction(target.len(), scale, config.seed);
    let eval = Evaluator::new(target);
    let at_target = config.init == Initialization::AtTarget;
    match config.loss_kind {
        LossKind::CrossIou => {
            let soft_target = landmarks_to_cross(target)
                .into_iter()
                .map(|q| soften_target(q, config.alpha))
                .collect::<Result<Vec<_>>>()?;
            let init = if at_target { &soft_target } else { &seeded };
            let params = init.iter().flat_map(|q| q.to_array()).collect();
            Ok((Box::new(CrossIouProblem { eval, soft_target }), params))
        }
        LossKind::SmoothL1 => {
            let target_flat: Vec<f64> = target.offsets().iter().flat_map(|d| [d.dx, d.dy]).collect();
            let params = if at_target {
                target_flat.clone()
            } else {
                seeded
                    .iter()
                    .flat_map(|q| {
                        let d = decode_offset(*q).expect("non-negative");
                        [d.dx, d.dy]
                    })
                    .collect()
            };
            Ok((
                Box::new(SmoothL1Problem {
                    eval,
                    target: target_flat,
                    beta: config.smooth_l1_beta,
                }),
                params,
            ))
        }
        LossKind::Giou => {
            if !is_rectangle(target) {
                return Err(Error::RectangleOnly(format!(
                    "{} target with non-axis-aligned landmarks",
                    target.role().name()
                )));
            }
            let target_box = eval.target_box.ok_or_else(|| {
                Error::InvalidParameter("target landmarks do not span a box".into())
            })?;
            let a = target.anchor();
            let params = if at_target {
                vec![
                    a.y - target_box.y_min,
                    a.x - target_box.x_min,
                    target_box.y_max - a.y,
                    target_box.x_max - a.x,
                ]
            } else {
                let d: Vec<OffsetVector> =
                    seeded.iter().map(|q| decode_offset(*q).expect("non-negative")).collect();
                vec![d[0].dy.abs(), d[1].dx.abs(), d[2].dy.abs(), d[3].dx.abs()]
            };
            Ok((Box::new(GiouProblem { anchor: a, target_box }), params))
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
/// Floor on a group's trust scale, relative to the mean group norm.
const TRUST_FLOOR: f64 = 0.1;

struct AdaptiveState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdaptiveState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], step_size: f64, group: usize) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let norms: Vec<f64> = params
            .chunks(group)
            .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
        for (i, p) in params.iter_mut().enumerate() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let denom = (self.v[i] / c2).sqrt();
            if denom == 0.0 {
                continue;
            }
            let direction = (self.m[i] / c1) / denom;
            let trust = norms[i / group].max(TRUST_FLOOR * mean_norm);
            *p -= step_size * trust * direction;
        }
    }
}

fn run(problem: &dyn Problem, mut params: Vec<f64>, config: &FitConfig, scale: f64) -> FitReport {
    let mut trajectory = vec![problem.loss(&params)];
    let mut adaptive = AdaptiveState::new(params.len());
    for _ in 0..config.max_steps {
        if problem.decoded_iou(&params) >= config.convergence_iou {
            break;
        }
        let grad = problem.grad(&params);
        match config.optimizer {
            OptimizerKind::FixedStep => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= config.step_size * g;
                }
            }
            OptimizerKind::Adaptive => {
                adaptive.step(&mut params, &grad, config.step_size, problem.group());
            }
        }
        if problem.non_negative() {
            for p in params.iter_mut() {
                *p = p.max(0.0);
            }
        }
        trajectory.push(problem.loss(&params));
    }
    let final_decoded_iou = problem.decoded_iou(&params);
    FitReport {
        steps_taken: trajectory.len() - 1,
        loss_trajectory: trajectory,
        final_decoded_iou,
        converged: final_decoded_iou >= config.convergence_iou,
        target_scale: scale,
    }
}

/// Fits a prediction to `target` under `config`. Deterministic for a given
/// target and config.
pub fn fit_offsets(target: &LandmarkSet, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let (problem, params) = build_problem(target, config)?;
    Ok(run(problem.as_ref(), params, config, target_scale(target)?))
}

/// Loss value at the starting point, before any step.
pub fn initial_loss(target: &LandmarkSet, config: &FitConfig) -> Result<f64> {
    config.validate()?;
    let (problem, params) = build_problem(target, config)?;
    Ok(problem.loss(&params))
}

/// Box landmarks of one seeded convex shape, normalized so the box diagonal
/// is 1 and centered on the origin.
pub fn unit_box_target(seed: u64, style: BoxStyle) -> Result<LandmarkSet> {
    let ds = synth_shapes(1, seed, ShapeFamily::Convex)?;
    let mut set = extreme_landmarks(&ds.records[0].parts)?;
    let a = set.anchor();
    let shifted: Vec<Point> = set
        .landmarks()
        .iter()
        .map(|p| Point::new(p.x - a.x, p.y - a.y))
        .collect();
    set = LandmarkSet::new(AnchorPoint::new(0.0, 0.0), shifted, LandmarkRole::Extreme)?;
    let set = set.scaled(1.0 / target_scale(&set)?);
    box_target(&set, style)
}

/// `n` contour landmarks of one seeded star shape, normalized like
/// [`unit_box_target`].
pub fn unit_contour_target(seed: u64, n: usize) -> Result<LandmarkSet> {
    let ds = synth_shapes(1, seed, ShapeFamily::Star)?;
    let set = crate::landmarks::resample_contour(&ds.records[0].parts[0], n)?;
    let a = set.anchor();
    let shifted: Vec<Point> = set
        .landmarks()
        .iter()
        .map(|p| Point::new(p.x - a.x, p.y - a.y))
        .collect();
    let set = LandmarkSet::new(AnchorPoint::new(0.0, 0.0), shifted, set.role())?;
    Ok(set.scaled(1.0 / target_scale(&set)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub scale: f64,
    pub initial_loss: f64,
    pub report: FitReport,
}

/// Fits the same unit target geometry at every scale. GIoU runs use the
/// rectangle style, everything else the extreme style.
pub fn scale_sweep(loss_kind: LossKind, scales: &[f64], config: &FitConfig) -> Result<Vec<SweepEntry>> {
    if scales.is_empty() {
        return Err(Error::Empty("scales"));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!("scale must be > 0, got {s}")));
    }
    let config = FitConfig { loss_kind, ..*config };
    let style = if loss_kind == LossKind::Giou { BoxStyle::Rectangle } else { BoxStyle::Extreme };
    let unit = unit_box_target(config.seed, style)?;
    scales
        .iter()
        .map(|&scale| {
            let target = unit.scaled(scale);
            Ok(SweepEntry {
                scale,
                initial_loss: initial_loss(&target, &config)?,
                report: fit_offsets(&target, &config)?,
            })
        })
        .collect()
}

/// One configuration of the loss comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSetup {
    pub box_style: BoxStyle,
    pub config: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub loss_kind: LossKind,
    pub box_style: BoxStyle,
    pub optimizer: OptimizerKind,
    pub runs: usize,
    pub convergence_rate: f64,
    pub mean_final_iou: f64,
}

pub const COMPARE_MIN_SCALE: f64 = 1.0;
pub const COMPARE_MAX_SCALE: f64 = 1000.0;

/// Seeded box targets with log-uniform scale in `[1, 1000]`, returned as
/// `(unit target seed, scale)`.
pub fn compare_corpus(corpus_size: usize, seed: u64) -> Vec<(u64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..corpus_size)
        .map(|_| {
            let shape_seed: u64 = rng.gen();
            let log_s = rng.gen_range(COMPARE_MIN_SCALE.ln()..=COMPARE_MAX_SCALE.ln());
            (shape_seed, log_s.exp())
        })
        .collect()
}

/// Fits every setup on a shared seeded corpus. Each target `i` is fitted
/// with initialization seed `config.seed + i`.
pub fn compare_losses(corpus_size: usize, seed: u64, setups: &[LossSetup]) -> Result<Vec<CompareRow>> {
    if corpus_size == 0 {
        return Err(Error::InvalidParameter("corpus_size must be >= 1".into()));
    }
    for s in setups {
        s.config.validate()?;
        if s.config.loss_kind == LossKind::Giou && s.box_style != BoxStyle::Rectangle {
            return Err(Error::RectangleOnly(format!("{} box style", s.box_style)));
        }
    }
    let corpus = compare_corpus(corpus_size, seed);
    setups
        .iter()
        .map(|setup| {
            let reports = corpus
                .par_iter()
                .enumerate()
                .map(|(i, &(shape_seed, scale))| {
                    let target = unit_box_target(shape_seed, setup.box_style)?.scaled(scale);
                    let config = FitConfig {
                        seed: setup.config.seed.wrapping_add(i as u64),
                        ..setup.config
                    };
                    fit_offsets(&target, &config)
                })
                .collect::<Result<Vec<_>>>()?;
            let runs = reports.len();
            let converged = reports.iter().filter(|r| r.converged).count();
            Ok(CompareRow {
                loss_kind: setup.config.loss_kind,
                box_style: setup.box_style,
                optimizer: setup.config.optimizer,
                runs,
                convergence_rate: converged as f64 / runs as f64,
                mean_final_iou: reports.iter().map(|r| r.final_decoded_iou).sum::<f64>() / runs as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_fixture(scale: f64, style: BoxStyle) -> LandmarkSet {
        unit_box_target(42, style).unwrap().scaled(scale)
    }

    #[test]
    fn starts_converged_at_target() {
        for (loss_kind, style) in [
            (LossKind::CrossIou, BoxStyle::Extreme),
            (LossKind::SmoothL1, BoxStyle::Extreme),
            (LossKind::Giou, BoxStyle::Rectangle),
        ] {
            let config = FitConfig {
                loss_kind,
                init: Initialization::AtTarget,
                ..FitConfig::default()
            };
            let r = fit_offsets(&box_fixture(10.0, style), &config).unwrap();
            assert_eq!(r.steps_taken, 0, "{loss_kind}");
            assert_eq!(r.loss_trajectory.len(), 1);
            assert!(r.converged);
            assert!(r.final_decoded_iou >= 1.0 - 1e-12);
            assert!(r.loss_trajectory[0].abs() <= 1e-12, "{loss_kind}: {}", r.loss_trajectory[0]);
        }
    }

    #[test]
    fn cross_iou_adaptive_converges_at_scale_ten() {
        let r = fit_offsets(&box_fixture(10.0, BoxStyle::Extreme), &FitConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.final_decoded_iou >= 0.99);
        assert_eq!(r.loss_trajectory.len(), r.steps_taken + 1);
    }

    #[test]
    fn cross_iou_trajectory_is_scale_invariant() {
        let config = FitConfig::default();
        let small = fit_offsets(&box_fixture(10.0, BoxStyle::Extreme), &config).unwrap();
        let large = fit_offsets(&box_fixture(1000.0, BoxStyle::Extreme), &config).unwrap();
        assert_eq!(small.steps_taken, large.steps_taken);
        for (a, b) in small.loss_trajectory.iter().zip(&large.loss_trajectory) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn giou_rejects_extreme_targets() {
        let config = FitConfig { loss_kind: LossKind::Giou, ..FitConfig::default() };
        assert!(matches!(
            fit_offsets(&box_fixture(10.0, BoxStyle::Extreme), &config),
            Err(Error::RectangleOnly(_))
        ));
        let setups = [LossSetup { box_style: BoxStyle::Extreme, config }];
        assert!(matches!(compare_losses(3, 1, &setups), Err(Error::RectangleOnly(_))));
    }

    #[test]
    fn fits_are_deterministic() {
        for loss_kind in [LossKind::CrossIou, LossKind::SmoothL1] {
            let config = FitConfig { loss_kind, seed: 9, ..FitConfig::default() };
            let t = box_fixture(37.0, BoxStyle::Extreme);
            assert_eq!(fit_offsets(&t, &config).unwrap(), fit_offsets(&t, &config).unwrap());
        }
    }

    #[test]
    fn rectangle_target_is_axis_aligned() {
        let t = box_fixture(5.0, BoxStyle::Rectangle);
        assert!(is_rectangle(&t));
        assert!(!is_rectangle(&box_fixture(5.0, BoxStyle::Extreme)));
    }

    #[test]
    fn sweep_initial_loss_ratios() {
        let config = FitConfig::default();
        let s = scale_sweep(LossKind::CrossIou, &[1.0, 1000.0], &config).unwrap();
        let ratio = s[1].initial_loss / s[0].initial_loss;
        assert!((ratio - 1.0).abs() <= 1e-6, "{ratio}");
        let s = scale_sweep(LossKind::SmoothL1, &[1.0, 1000.0], &config).unwrap();
        assert!(s[1].initial_loss / s[0].initial_loss >= 100.0);
        assert!(scale_sweep(LossKind::CrossIou, &[], &config).is_err());
    }

    #[test]
    fn smooth_l1_fixed_step_monotone_below_stability_bound() {
        // smooth-L1 averaged over n elements has a 1/(n * beta)-Lipschitz
        // gradient, so any step below 2 * n * beta descends
        let t = box_fixture(10.0, BoxStyle::Extreme);
        let bound = 2.0 * 8.0 * FitConfig::default().smooth_l1_beta;
        for step_size in [0.1, 1.0, 0.5 * bound, 0.99 * bound] {
            let config = FitConfig {
                loss_kind: LossKind::SmoothL1,
                optimizer: OptimizerKind::FixedStep,
                step_size,
                max_steps: 5000,
                ..FitConfig::default()
            };
            let r = fit_offsets(&t, &config).unwrap();
            assert!(r.converged, "step {step_size}");
            assert!(
                r.loss_trajectory.windows(2).all(|w| w[1] <= w[0]),
                "step {step_size} increased the loss"
            );
        }
    }

    #[test]
    fn cross_iou_fixed_step_excursions_stay_within_lipschitz_bound() {
        // Cross-IoU is only piecewise smooth: fixed steps oscillate across
        // the kinks at q_i = q*_i. Each step moves a component by at most
        // step / (N * S_max) and the loss is 1 / (N * S_max)-Lipschitz per
        // component, so an increase is at most 4 * step / (N * S_max^2).
        let t = box_fixture(10.0, BoxStyle::Extreme);
        let soft: Vec<CrossOffset> = landmarks_to_cross(&t)
            .into_iter()
            .map(|q| soften_target(q, DEFAULT_ALPHA).unwrap())
            .collect();
        let s_max_floor = soft.iter().map(|q| q.l1()).fold(f64::INFINITY, f64::min);
        for step_size in [0.01, 0.1, 1.0] {
            let config = FitConfig {
                optimizer: OptimizerKind::FixedStep,
                step_size,
                max_steps: 20_000,
                ..FitConfig::default()
            };
            let r = fit_offsets(&t, &config).unwrap();
            assert!(r.converged);
            let bound = 4.0 * step_size / (4.0 * s_max_floor * s_max_floor);
            let worst = r
                .loss_trajectory
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= bound, "step {step_size}: increase {worst} > {bound}");
        }
    }

    #[test]
    fn softened_optimum_has_zero_loss_and_known_hard_residual() {
        let t = box_fixture(10.0, BoxStyle::Extreme);
        let config = FitConfig { init: Initialization::AtTarget, ..FitConfig::default() };
        let r = fit_offsets(&t, &config).unwrap();
        assert!(r.final_decoded_iou >= 1.0 - 1e-12);
        assert!(r.loss_trajectory[0] <= 1e-6);
        // the same prediction scored against the unsoftened target: every
        // landmark has both axes occupied, giving cIoU = 1 / (1 + alpha)
        let hard = landmarks_to_cross(&t);
        let soft: Vec<CrossOffset> =
            hard.iter().map(|q| soften_target(*q, config.alpha).unwrap()).collect();
        let residual = cross_iou_loss(&soft, &hard).unwrap().value;
        let analytic = config.alpha / (1.0 + config.alpha);
        assert!((residual - analytic).abs() < 1e-12, "{residual} vs {analytic}");
    }

    #[test]
    fn unit_contour_target_is_normalized() {
        let t = unit_contour_target(4, 18).unwrap();
        assert_eq!(t.role(), LandmarkRole::Contour(18));
        assert!((target_scale(&t).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(t.anchor(), AnchorPoint::new(0.0, 0.0));
    }

    #[test]
    fn contour_targets_fit_on_mean_cross_iou() {
        let ds = synth_shapes(1, 4, ShapeFamily::Star).unwrap();
        let target = crate::landmarks::resample_contour(&ds.records[0].parts[0], 36).unwrap();
        let r = fit_offsets(&target, &FitConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        let config = FitConfig { loss_kind: LossKind::Giou, ..FitConfig::default() };
        assert!(fit_offsets(&target, &config).is_err());
    }
}
