//! Cross-coordinate encoding of anchor-to-landmark offsets.
//!
//! A planar offset `(dx, dy)` is stored as four non-negative lengths
//! `[x_neg, x_pos, y_neg, y_pos]`, one per half-axis. Under image coordinates
//! the top/left/bottom/right naming maps to `y_neg`/`x_neg`/`y_pos`/`x_pos`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Default softening factor for ground-truth encodings.
pub const DEFAULT_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OffsetVector {
    pub dx: f64,
    pub dy: f64,
}

impl OffsetVector {
    pub const fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    pub fn between(anchor: &AnchorPoint, p: &Point) -> Self {
        Self::new(p.x - anchor.x, p.y - anchor.y)
    }
}

/// Four-component non-negative offset, ordered `[x_neg, x_pos, y_neg, y_pos]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossOffset {
    pub x_neg: f64,
    pub x_pos: f64,
    pub y_neg: f64,
    pub y_pos: f64,
}

impl CrossOffset {
    pub const ZERO: CrossOffset = CrossOffset::from_array([0.0; 4]);

    /// Validating constructor: every component finite and `>= 0`.
    pub fn new(x_neg: f64, x_pos: f64, y_neg: f64, y_pos: f64) -> Result<Self> {
        let c = Self::from_array([x_neg, x_pos, y_neg, y_pos]);
        c.validate()?;
        Ok(c)
    }

    pub const fn from_array(a: [f64; 4]) -> Self {
        Self {
            x_neg: a[0],
            x_pos: a[1],
            y_neg: a[2],
            y_pos: a[3],
        }
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.x_neg, self.x_pos, self.y_neg, self.y_pos]
    }

    pub fn validate(&self) -> Result<()> {
        for (index, value) in self.to_array().into_iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite("cross offset"));
            }
            if value < 0.0 {
                return Err(Error::NegativeComponent { index, value });
            }
        }
        Ok(())
    }

    /// At most one side per axis is nonzero.
    pub fn is_hard(&self) -> bool {
        self.x_neg * self.x_pos == 0.0 && self.y_neg * self.y_pos == 0.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * s))
    }

    pub fn l1(&self) -> f64 {
        self.to_array().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub x: f64,
    pub y: f64,
}

impl AnchorPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn offset(&self, d: OffsetVector) -> Point {
        Point::new(self.x + d.dx, self.y + d.dy)
    }
}

impl From<Point> for AnchorPoint {
    fn from(p: Point) -> Self {
        Self::new(p.x, p.y)
    }
}

pub const EXTREME_COUNT: usize = 4;
pub const DEFAULT_CONTOUR_COUNT: usize = 36;
pub const KEYPOINT_COUNT: usize = 17;

/// What the landmarks of a set stand for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkRole {
    /// top, left, bottom, right in that order.
    Extreme,
    Contour(usize),
    Keypoints,
}

impl LandmarkRole {
    pub fn count(&self) -> usize {
        match self {
            LandmarkRole::Extreme => EXTREME_COUNT,
            LandmarkRole::Contour(n) => *n,
            LandmarkRole::Keypoints => KEYPOINT_COUNT,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LandmarkRole::Extreme => "extreme",
            LandmarkRole::Contour(_) => "contour",
            LandmarkRole::Keypoints => "keypoints",
        }
    }
}

/// An anchor plus its role-tagged landmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    anchor: AnchorPoint,
    landmarks: Vec<Point>,
    role: LandmarkRole,
}

impl LandmarkSet {
    pub fn new(anchor: AnchorPoint, landmarks: Vec<Point>, role: LandmarkRole) -> Result<Self> {
        if landmarks.len() != role.count() {
            return Err(Error::RoleCount {
                role: role.name(),
                expected: role.count(),
                got: landmarks.len(),
            });
        }
        if !(anchor.x.is_finite() && anchor.y.is_finite())
            || !landmarks.iter().all(Point::is_finite)
        {
            return Err(Error::NonFinite("landmark set"));
        }
        if role == LandmarkRole::Extreme {
            let [top, left, bottom, right] = [landmarks[0], landmarks[1], landmarks[2], landmarks[3]];
            if top.y > bottom.y || left.x > right.x {
                return Err(Error::InvalidParameter(
                    "extreme landmarks must be ordered top, left, bottom, right".into(),
                ));
            }
        }
        Ok(Self {
            anchor,
            landmarks,
            role,
        })
    }

    pub fn anchor(&self) -> AnchorPoint {
        self.anchor
    }

    pub fn landmarks(&self) -> &[Point] {
        &self.landmarks
    }

    pub fn role(&self) -> LandmarkRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn offsets(&self) -> Vec<OffsetVector> {
        self.landmarks
            .iter()
            .map(|p| OffsetVector::between(&self.anchor, p))
            .collect()
    }

    /// Scales every offset about the anchor, which itself is scaled about the
    /// origin.
    pub fn scaled(&self, s: f64) -> Self {
        let anchor = AnchorPoint::new(self.anchor.x * s, self.anchor.y * s);
        let landmarks = self
            .landmarks
            .iter()
            .map(|p| Point::new(p.x * s, p.y * s))
            .collect();
        Self {
            anchor,
            landmarks,
            role: self.role,
        }
    }
}

pub fn encode_offset(delta: OffsetVector) -> Result<CrossOffset> {
    if !(delta.dx.is_finite() && delta.dy.is_finite()) {
        return Err(Error::NonFinite("offset vector"));
    }
    Ok(CrossOffset {
        x_neg: (-delta.dx).max(0.0),
        x_pos: delta.dx.max(0.0),
        y_neg: (-delta.dy).max(0.0),
        y_pos: delta.dy.max(0.0),
    })
}

/// Raises the empty side of each axis to `alpha` times the occupied side.
pub fn soften_target(hard: CrossOffset, alpha: f64) -> Result<CrossOffset> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    hard.validate()?;
    if hard.x_neg * hard.x_pos != 0.0 {
        return Err(Error::NotHardEncoded { axis: 'x' });
    }
    if hard.y_neg * hard.y_pos != 0.0 {
        return Err(Error::NotHardEncoded { axis: 'y' });
    }
    let soften_axis = |neg: f64, pos: f64| -> (f64, f64) {
        if neg > 0.0 {
            (neg, alpha * neg)
        } else if pos > 0.0 {
            (alpha * pos, pos)
        } else {
            (0.0, 0.0)
        }
    };
    let (x_neg, x_pos) = soften_axis(hard.x_neg, hard.x_pos);
    let (y_neg, y_pos) = soften_axis(hard.y_neg, hard.y_pos);
    Ok(CrossOffset {
        x_neg,
        x_pos,
        y_neg,
        y_pos,
    })
}

/// Max-decode: each axis takes its larger side; ties decode positive.
pub fn decode_offset(pred: CrossOffset) -> Result<OffsetVector> {
    pred.validate()?;
    let axis = |neg: f64, pos: f64| if pos >= neg { pos } else { -neg };
    Ok(OffsetVector::new(
        axis(pred.x_neg, pred.x_pos),
        axis(pred.y_neg, pred.y_pos),
    ))
}

pub fn landmarks_to_cross(set: &LandmarkSet) -> Vec<CrossOffset> {
    set.offsets()
        .into_iter()
        .map(|d| encode_offset(d).expect("landmark set coordinates are finite"))
        .collect()
}

/// Decodes predicted offsets back into landmark positions around `anchor`.
pub fn cross_to_points(anchor: AnchorPoint, pred: &[CrossOffset]) -> Result<Vec<Point>> {
    pred.iter()
        .map(|q| decode_offset(*q).map(|d| anchor.offset(d)))
        .collect()
}
