//! Landmark representations derived from instance geometry.

mod raster;

pub use raster::{mask_iou, rasterize, rasterize_on, RasterGrid, RasterMask, DEFAULT_MAX_DIM};

use serde::{Deserialize, Serialize};

use crate::cross_coord::{AnchorPoint, LandmarkRole, LandmarkSet, KEYPOINT_COUNT};
use crate::error::{Error, Result};
use crate::geometry::{parts_bounding_box, BoundingBox, Point, PolygonContour};

/// The four extreme points of a contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeSet {
    pub top: Point,
    pub left: Point,
    pub bottom: Point,
    pub right: Point,
}

impl ExtremeSet {
    /// In landmark order: top, left, bottom, right.
    pub fn to_vec(&self) -> Vec<Point> {
        vec![self.top, self.left, self.bottom, self.right]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// 0 = not labeled, 1 = labeled but occluded, 2 = visible.
    pub visibility: u8,
}

impl Keypoint {
    pub fn is_labeled(&self) -> bool {
        self.visibility > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointInstance {
    points: Vec<Keypoint>,
    scale: f64,
}

impl KeypointInstance {
    pub fn new(points: Vec<Keypoint>, scale: f64) -> Result<Self> {
        if points.len() != KEYPOINT_COUNT {
            return Err(Error::RoleCount {
                role: "keypoints",
                expected: KEYPOINT_COUNT,
                got: points.len(),
            });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("keypoint scale must be > 0, got {scale}")));
        }
        if let Some(k) = points.iter().find(|k| k.visibility > 2) {
            return Err(Error::InvalidParameter(format!("visibility {} not in {{0,1,2}}", k.visibility)));
        }
        if !points.iter().all(|k| k.x.is_finite() && k.y.is_finite()) {
            return Err(Error::NonFinite("keypoint"));
        }
        Ok(Self { points, scale })
    }

    /// Parses COCO's flat `[x, y, v] * 17` layout.
    pub fn from_flat(values: &[f64], scale: f64) -> Result<Self> {
        if values.len() != 3 * KEYPOINT_COUNT {
            return Err(Error::RoleCount {
                role: "keypoints",
                expected: 3 * KEYPOINT_COUNT,
                got: values.len(),
            });
        }
        let mut points = Vec::with_capacity(KEYPOINT_COUNT);
        for t in values.chunks_exact(3) {
            let v = t[2];
            if !(v == 0.0 || v == 1.0 || v == 2.0) {
                return Err(Error::InvalidParameter(format!("visibility {v} not in {{0,1,2}}")));
            }
            points.push(Keypoint {
                x: t[0],
                y: t[1],
                visibility: v as u8,
            });
        }
        Self::new(points, scale)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points
            .iter()
            .flat_map(|k| [k.x, k.y, f64::from(k.visibility)])
            .collect()
    }

    pub fn points(&self) -> &[Keypoint] {
        &self.points
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn visible_count(&self) -> usize {
        self.points.iter().filter(|k| k.is_labeled()).count()
    }

    /// Translates every keypoint, labeled or not.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|k| Keypoint {
                    x: k.x + dx,
                    y: k.y + dy,
                    visibility: k.visibility,
                })
                .collect(),
            scale: self.scale,
        }
    }

    /// Landmark view of the keypoints around the kps-box center. Unlabeled
    /// keypoints keep their stored coordinates.
    pub fn to_landmark_set(&self) -> Result<LandmarkSet> {
        let anchor = AnchorPoint::from(kps_box(self)?.center());
        LandmarkSet::new(
            anchor,
            self.points.iter().map(|k| Point::new(k.x, k.y)).collect(),
            LandmarkRole::Keypoints,
        )
    }
}

/// Arc-length bookkeeping over a closed polygon.
struct ArcTable<'a> {
    vertices: &'a [Point],
    /// `cum[i]` = arc length from vertex 0 to vertex i; `cum[n]` = perimeter.
    cum: Vec<f64>,
}

impl<'a> ArcTable<'a> {
    fn new(vertices: &'a [Point]) -> Self {
        let n = vertices.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let d = vertices[i].distance(&vertices[(i + 1) % n]);
            cum.push(cum[i] + d);
        }
        Self { vertices, cum }
    }

    fn perimeter(&self) -> f64 {
        self.cum[self.vertices.len()]
    }

    fn edge_len(&self, i: usize) -> f64 {
        self.cum[i + 1] - self.cum[i]
    }

    /// Point at arc position `s`, taken modulo the perimeter.
    fn point_at(&self, s: f64) -> Point {
        let n = self.vertices.len();
        let p = self.perimeter();
        let mut s = s % p;
        if s < 0.0 {
            s += p;
        }
        // last edge whose start is <= s
        let i = match self.cum[..n].binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        // skip zero-length edges so t stays finite
        let mut i = i;
        while self.edge_len(i) == 0.0 {
            i = (i + 1) % n;
        }
        let t = ((s - self.cum[i]) / self.edge_len(i)).clamp(0.0, 1.0);
        self.vertices[i].lerp(&self.vertices[(i + 1) % n], t)
    }
}

#[derive(Clone, Copy)]
enum Side {
    Top,
    Left,
    Bottom,
    Right,
}

impl Side {
    fn key(self, p: &Point) -> f64 {
        match self {
            Side::Top => -p.y,
            Side::Left => -p.x,
            Side::Bottom => p.y,
            Side::Right => p.x,
        }
    }
}

/// Arc position of the chosen extreme point on a side: the midpoint of the
/// longest run of vertices attaining the extremal coordinate, earliest run
/// start winning ties.
fn extreme_arc(arc: &ArcTable<'_>, side: Side) -> f64 {
    let v = arc.vertices;
    let n = v.len();
    let best = v
        .iter()
        .map(|p| side.key(p))
        .fold(f64::NEG_INFINITY, f64::max);
    let on = |i: usize| side.key(&v[i]) == best;

    // Start scanning right after an off-extreme vertex so no run wraps the
    // scan boundary. Valid polygons always have one.
    let first_off = (0..n).find(|&i| !on(i)).expect("polygon with nonzero area");
    let mut best_run: Option<(f64, f64)> = None; // (length, start arc)
    let mut k = 1;
    while k <= n {
        let i = (first_off + k) % n;
        if !on(i) {
            k += 1;
            continue;
        }
        let start = i;
        let mut len = 0.0;
        let mut j = i;
        while on((j + 1) % n) && (j + 1) % n != first_off {
            len += arc.edge_len(j);
            j = (j + 1) % n;
            k += 1;
        }
        k += 1;
        let start_arc = arc.cum[start];
        let better = match best_run {
            None => true,
            Some((bl, bs)) => len > bl || (len == bl && start_arc < bs),
        };
        if better {
            best_run = Some((len, start_arc));
        }
    }
    let (len, start_arc) = best_run.expect("at least one extremal vertex");
    let mid = start_arc + 0.5 * len;
    if mid >= arc.perimeter() {
        mid - arc.perimeter()
    } else {
        mid
    }
}

fn extreme_point(arc: &ArcTable<'_>, side: Side) -> (Point, f64) {
    let s = extreme_arc(arc, side);
    let mut p = arc.point_at(s);
    // pin the extremal coordinate so the extreme box is exact
    let bb = BoundingBox::enclosing(arc.vertices).expect("non-empty");
    match side {
        Side::Top => p.y = bb.y_min,
        Side::Left => p.x = bb.x_min,
        Side::Bottom => p.y = bb.y_max,
        Side::Right => p.x = bb.x_max,
    }
    (p, s)
}

/// Extreme points of a contour. Ties along a flat run resolve to the run's
/// midpoint; the run scan follows the clockwise traversal.
pub fn extreme_points(poly: &PolygonContour) -> ExtremeSet {
    let cw = poly.to_clockwise();
    let arc = ArcTable::new(cw.vertices());
    ExtremeSet {
        top: extreme_point(&arc, Side::Top).0,
        left: extreme_point(&arc, Side::Left).0,
        bottom: extreme_point(&arc, Side::Bottom).0,
        right: extreme_point(&arc, Side::Right).0,
    }
}

/// Extreme points of a multi-part instance: each side taken from the part
/// reaching furthest, earliest part winning ties.
pub fn extreme_points_of_parts(parts: &[PolygonContour]) -> Result<ExtremeSet> {
    let mut it = parts.iter().map(extreme_points);
    let mut acc = it.next().ok_or(Error::Empty("polygon parts"))?;
    for e in it {
        if e.top.y < acc.top.y {
            acc.top = e.top;
        }
        if e.left.x < acc.left.x {
            acc.left = e.left;
        }
        if e.bottom.y > acc.bottom.y {
            acc.bottom = e.bottom;
        }
        if e.right.x > acc.right.x {
            acc.right = e.right;
        }
    }
    Ok(acc)
}

pub fn extreme_box(e: &ExtremeSet) -> BoundingBox {
    BoundingBox {
        x_min: e.left.x,
        y_min: e.top.y,
        x_max: e.right.x,
        y_max: e.bottom.y,
    }
}

/// `n` landmarks at equal arc-length spacing, starting from the top extreme
/// point and running clockwise on screen. The anchor is the extreme-box
/// center.
pub fn resample_contour(poly: &PolygonContour, n: usize) -> Result<LandmarkSet> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 landmarks, got {n}")));
    }
    let cw = poly.to_clockwise();
    let arc = ArcTable::new(cw.vertices());
    let (_, start) = extreme_point(&arc, Side::Top);
    let step = arc.perimeter() / n as f64;
    let points = (0..n)
        .map(|k| arc.point_at(start + k as f64 * step))
        .collect();
    let anchor = AnchorPoint::from(extreme_box(&extreme_points(poly)).center());
    LandmarkSet::new(anchor, points, LandmarkRole::Contour(n))
}

/// Tight box of the labeled keypoints.
pub fn kps_box(k: &KeypointInstance) -> Result<BoundingBox> {
    let visible: Vec<Point> = k
        .points()
        .iter()
        .filter(|p| p.is_labeled())
        .map(|p| Point::new(p.x, p.y))
        .collect();
    if visible.is_empty() {
        return Err(Error::NoVisibleKeypoints);
    }
    BoundingBox::enclosing(&visible)
}

/// Center of the extreme box spanning all parts.
pub fn anchor_from_polygon(parts: &[PolygonContour]) -> Result<AnchorPoint> {
    let bb = parts_bounding_box(parts)?;
    Ok(AnchorPoint::from(bb.center()))
}

/// Extreme-point landmark set of an instance, anchored at its box center.
pub fn extreme_landmarks(parts: &[PolygonContour]) -> Result<LandmarkSet> {
    let e = extreme_points_of_parts(parts)?;
    let anchor = AnchorPoint::from(extreme_box(&e).center());
    LandmarkSet::new(anchor, e.to_vec(), LandmarkRole::Extreme)
}
