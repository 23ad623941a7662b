//! Keypoint similarity, multi-threshold recall, and the landmark-count
//! fidelity study over polygon corpora.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parts_bounding_box, Point, PolygonContour};
use crate::landmarks::{rasterize_on, resample_contour, RasterGrid, RasterMask};

/// Per-keypoint sigmas of the COCO person keypoint protocol (nose, eyes,
/// ears, shoulders, elbows, wrists, hips, knees, ankles).
pub const COCO_KEYPOINT_SIGMAS: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107,
    0.087, 0.087, 0.089, 0.089,
];

/// Falloff constant for keypoint `i`; the protocol uses twice the sigma.
pub fn keypoint_kappa(i: usize) -> f64 {
    2.0 * COCO_KEYPOINT_SIGMAS[i]
}

/// Object keypoint similarity of `pred` against `gt`, averaged over the
/// ground-truth keypoints with visibility > 0.
pub fn oks(pred: &crate::landmarks::KeypointInstance, gt: &crate::landmarks::KeypointInstance) -> Result<f64> {
    let s = gt.scale();
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be > 0, got {s}")));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (p, g)) in pred.points().iter().zip(gt.points()).enumerate() {
        if !g.is_labeled() {
            continue;
        }
        let d2 = (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
        let k = keypoint_kappa(i);
        total += (-d2 / (2.0 * s * s * k * k)).exp();
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoVisibleKeypoints);
    }
    Ok(total / count as f64)
}

pub const THRESHOLD_COUNT: usize = 10;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; THRESHOLD_COUNT] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub thresholds: [f64; THRESHOLD_COUNT],
    pub per_threshold_recall: [f64; THRESHOLD_COUNT],
    pub ap: f64,
}

/// Fraction of matched pairs clearing each threshold, and its mean.
pub fn ap_over_thresholds(ious: &[f64]) -> Result<ThresholdSweep> {
    if ious.is_empty() {
        return Err(Error::Empty("iou list"));
    }
    let thresholds = iou_thresholds();
    let n = ious.len() as f64;
    let per_threshold_recall =
        thresholds.map(|t| ious.iter().filter(|&&v| v >= t).count() as f64 / n);
    let ap = per_threshold_recall.iter().sum::<f64>() / THRESHOLD_COUNT as f64;
    Ok(ThresholdSweep {
        thresholds,
        per_threshold_recall,
        ap,
    })
}

/// One row of the landmark-count study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationRow {
    pub n: usize,
    pub ap: f64,
    pub mean_iou: f64,
    pub instances: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationReport {
    pub max_dim: usize,
    pub rows: Vec<QuantizationRow>,
    /// Ids of instances whose geometry could not be rasterized.
    pub skipped_ids: Vec<u64>,
}

/// A corpus entry: instance id plus its polygon parts.
pub type InstanceParts<'a> = (u64, &'a [PolygonContour]);

fn landmark_polygon_ious(parts: &[PolygonContour], n_values: &[usize], max_dim: usize) -> Result<Vec<f64>> {
    let grid = RasterGrid::covering(&parts_bounding_box(parts)?, max_dim)?;
    let original = rasterize_on(grid, parts);
    n_values
        .iter()
        .map(|&n| {
            let mut quantized = RasterMask::empty(grid);
            for part in parts {
                let set = resample_contour(part, n)?;
                let ring: Vec<Point> = set.landmarks().to_vec();
                quantized.fill_ring(&ring);
            }
            crate::landmarks::mask_iou(&quantized, &original)
        })
        .collect()
}

/// Quantizes every instance to `n` contour landmarks per part and scores the
/// landmark polygon's mask against the source mask, for each `n`.
///
/// Instances without parts or with unrasterizable geometry are skipped and
/// counted. Results do not depend on thread scheduling.
pub fn quantization_report(
    instances: &[InstanceParts<'_>],
    n_values: &[usize],
    max_dim: usize,
) -> Result<QuantizationReport> {
    if instances.is_empty() {
        return Err(Error::Empty("quantization corpus"));
    }
    if n_values.is_empty() {
        return Err(Error::Empty("landmark counts"));
    }
    if let Some(n) = n_values.iter().find(|&&n| n < 3) {
        return Err(Error::InvalidParameter(format!("landmark count {n} < 3")));
    }
    // validates max_dim before fanning out
    RasterGrid::covering(
        &crate::geometry::BoundingBox::new(0.0, 0.0, 1.0, 1.0)?,
        max_dim,
    )?;

    let mut order: Vec<&InstanceParts<'_>> = instances.iter().collect();
    order.sort_by_key(|(id, _)| *id);
    let results: Vec<(u64, Option<Vec<f64>>)> = order
        .par_iter()
        .map(|(id, parts)| {
            let r = if parts.is_empty() {
                None
            } else {
                landmark_polygon_ious(parts, n_values, max_dim).ok()
            };
            (*id, r)
        })
        .collect();

    let skipped_ids: Vec<u64> = results
        .iter()
        .filter(|(_, r)| r.is_none())
        .map(|(id, _)| *id)
        .collect();
    let scored: Vec<&Vec<f64>> = results.iter().filter_map(|(_, r)| r.as_ref()).collect();
    if scored.is_empty() {
        return Err(Error::Empty("no instance could be scored"));
    }
    let rows = n_values
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let ious: Vec<f64> = scored.iter().map(|r| r[j]).collect();
            let sweep = ap_over_thresholds(&ious)?;
            Ok(QuantizationRow {
                n,
                ap: sweep.ap,
                mean_iou: ious.iter().sum::<f64>() / ious.len() as f64,
                instances: ious.len(),
                skipped: skipped_ids.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizationReport {
        max_dim,
        rows,
        skipped_ids,
    })
}
