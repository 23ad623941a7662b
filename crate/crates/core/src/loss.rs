//! Cross-IoU loss with analytic subgradients, and the baseline losses it is
//! compared against (smooth-L1, box IoU, GIoU).

use serde::{Deserialize, Serialize};

use crate::cross_coord::CrossOffset;
use crate::error::{Error, Result};
pub use crate::geometry::BoundingBox;

/// Floor applied to the cross-IoU denominator.
pub const CIOU_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub per_landmark: Option<Vec<f64>>,
}

fn min_max_sums(q: &CrossOffset, q_star: &CrossOffset) -> (f64, f64) {
    let (a, b) = (q.to_array(), q_star.to_array());
    let mut s_min = 0.0;
    let mut s_max = 0.0;
    for i in 0..4 {
        s_min += a[i].min(b[i]);
        s_max += a[i].max(b[i]);
    }
    (s_min, s_max)
}

/// Ratio of the L1 norms of the elementwise minimum and maximum of the pair.
///
/// Two all-zero offsets are a perfect match and score 1.
pub fn cross_iou(q: &CrossOffset, q_star: &CrossOffset) -> Result<f64> {
    q.validate()?;
    q_star.validate()?;
    let (s_min, s_max) = min_max_sums(q, q_star);
    if s_max == 0.0 {
        return Ok(1.0);
    }
    Ok(s_min / s_max.max(CIOU_EPSILON))
}

/// `1 - mean(cIoU)` over landmark pairs, with the per-landmark values kept.
pub fn cross_iou_loss(pred: &[CrossOffset], target: &[CrossOffset]) -> Result<LossValue> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("cross-iou loss input"));
    }
    let per = pred
        .iter()
        .zip(target)
        .map(|(q, t)| cross_iou(q, t))
        .collect::<Result<Vec<_>>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok(LossValue {
        value: 1.0 - mean,
        per_landmark: Some(per),
    })
}

/// Subgradient of `cross_iou(q, q_star)` with respect to `q`.
///
/// Components where `q_i == q*_i` get the midpoint of the two one-sided
/// derivatives. Two all-zero offsets yield a zero gradient.
pub fn cross_iou_grad(q: &CrossOffset, q_star: &CrossOffset) -> Result<[f64; 4]> {
    q.validate()?;
    q_star.validate()?;
    let (s_min, s_max) = min_max_sums(q, q_star);
    if s_max == 0.0 {
        return Ok([0.0; 4]);
    }
    let s_max = s_max.max(CIOU_EPSILON);
    let below = 1.0 / s_max;
    let above = -s_min / (s_max * s_max);
    let (a, b) = (q.to_array(), q_star.to_array());
    let mut g = [0.0; 4];
    for i in 0..4 {
        g[i] = if a[i] < b[i] {
            below
        } else if a[i] > b[i] {
            above
        } else {
            0.5 * (below + above)
        };
    }
    Ok(g)
}

/// Gradient of [`cross_iou_loss`] with respect to every predicted component.
pub fn cross_iou_loss_grad(pred: &[CrossOffset], target: &[CrossOffset]) -> Result<Vec<[f64; 4]>> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("cross-iou loss input"));
    }
    let scale = -1.0 / pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(q, t)| cross_iou_grad(q, t).map(|g| g.map(|v| v * scale)))
        .collect()
}

fn check_smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("smooth-l1 input"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("smooth-l1 beta must be > 0, got {beta}")));
    }
    Ok(())
}

/// Mean elementwise smooth-L1.
pub fn smooth_l1_loss(pred: &[f64], target: &[f64], beta: f64) -> Result<f64> {
    check_smooth_l1(pred, target, beta)?;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = (p - t).abs();
            if d < beta {
                0.5 * d * d / beta
            } else {
                d - 0.5 * beta
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

pub fn smooth_l1_grad(pred: &[f64], target: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_smooth_l1(pred, target, beta)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            let g = if d.abs() < beta { d / beta } else { d.signum() };
            g / n
        })
        .collect())
}

struct Overlap {
    inter_w: f64,
    inter_h: f64,
    inter: f64,
    union: f64,
}

fn overlap(a: &BoundingBox, b: &BoundingBox) -> Overlap {
    let inter_w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let inter_h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = inter_w * inter_h;
    Overlap {
        inter_w,
        inter_h,
        inter,
        union: a.area() + b.area() - inter,
    }
}

pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let o = overlap(a, b);
    if o.union <= 0.0 {
        return Ok(0.0);
    }
    Ok(o.inter / o.union)
}

pub fn giou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let o = overlap(a, b);
    let c = a.union(b).area();
    if c <= 0.0 {
        // both boxes collapse onto the same point or line
        return Ok(if o.union > 0.0 { o.inter / o.union } else { 0.0 });
    }
    let iou = if o.union > 0.0 { o.inter / o.union } else { 0.0 };
    Ok(iou - (c - o.union) / c)
}

pub fn giou_loss(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    Ok(1.0 - giou(a, b)?)
}

/// Gradient of `giou(pred, target)` with respect to
/// `[pred.x_min, pred.y_min, pred.x_max, pred.y_max]`.
pub fn giou_grad(pred: &BoundingBox, target: &BoundingBox) -> Result<[f64; 4]> {
    pred.validate()?;
    target.validate()?;
    let o = overlap(pred, target);
    let enc = pred.union(target);
    let (cw, ch) = (enc.width(), enc.height());
    let c = cw * ch;
    if o.union <= 0.0 || c <= 0.0 {
        return Ok([0.0; 4]);
    }
    let (pw, ph) = (pred.width(), pred.height());

    // d(area of pred) per coordinate
    let d_area = [-ph, -pw, ph, pw];
    // d(intersection): only when pred's edge is the binding one
    let d_inter = [
        if o.inter_w > 0.0 && pred.x_min > target.x_min { -o.inter_h } else { 0.0 },
        if o.inter_h > 0.0 && pred.y_min > target.y_min { -o.inter_w } else { 0.0 },
        if o.inter_w > 0.0 && pred.x_max < target.x_max { o.inter_h } else { 0.0 },
        if o.inter_h > 0.0 && pred.y_max < target.y_max { o.inter_w } else { 0.0 },
    ];
    // d(enclosing area): only when pred's edge is outermost
    let d_enc = [
        if pred.x_min < target.x_min { -ch } else { 0.0 },
        if pred.y_min < target.y_min { -cw } else { 0.0 },
        if pred.x_max > target.x_max { ch } else { 0.0 },
        if pred.y_max > target.y_max { cw } else { 0.0 },
    ];
    let (i, u) = (o.inter, o.union);
    let mut g = [0.0; 4];
    for k in 0..4 {
        let du = d_area[k] - d_inter[k];
        // giou = I/U - 1 + U/C
        g[k] = d_inter[k] / u - i * du / (u * u) + du / c - u * d_enc[k] / (c * c);
    }
    Ok(g)
}
