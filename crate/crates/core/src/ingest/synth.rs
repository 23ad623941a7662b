//! Seeded polygon corpora for dataset-free experiments.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{parts_bounding_box, Point, PolygonContour};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    /// Convex polygons with 8 to 32 vertices.
    Convex,
    /// Radial spiky polygons whose concavities let rays from the box center
    /// cross the boundary several times.
    Star,
    /// Two or three disjoint convex parts.
    MultiPart,
}

impl ShapeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeFamily::Convex => "convex",
            ShapeFamily::Star => "star",
            ShapeFamily::MultiPart => "multi_part",
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(ShapeFamily::Convex),
            "star" => Ok(ShapeFamily::Star),
            "multi_part" | "multi-part" => Ok(ShapeFamily::MultiPart),
            other => Err(Error::InvalidParameter(format!("unknown shape family {other:?}"))),
        }
    }
}

/// Stratified increasing angles: one jittered sample per sector.
fn sector_angles(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let phase = rng.gen_range(0.0..TAU);
    (0..k)
        .map(|i| phase + TAU * (i as f64 + rng.gen_range(0.1..0.9)) / k as f64)
        .collect()
}

/// Vertices on a rotated ellipse, hence in convex position.
fn convex_polygon(rng: &mut ChaCha8Rng, center: Point, max_axis: f64) -> PolygonContour {
    let k = rng.gen_range(8..=32);
    let a = rng.gen_range(0.25 * max_axis..max_axis);
    let b = rng.gen_range(0.25 * max_axis..max_axis);
    let rot = rng.gen_range(0.0..TAU);
    let (s, c) = rot.sin_cos();
    let verts = sector_angles(rng, k)
        .into_iter()
        .map(|t| {
            let (x, y) = (a * t.cos(), b * t.sin());
            Point::new(center.x + c * x - s * y, center.y + s * x + c * y)
        })
        .collect();
    PolygonContour::new(verts).expect("ellipse samples span a nonzero area")
}

fn star_polygon(rng: &mut ChaCha8Rng, center: Point, radius: f64) -> PolygonContour {
    let spikes = rng.gen_range(5..=12);
    let verts = sector_angles(rng, 2 * spikes)
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let r = if i % 2 == 0 {
                radius * rng.gen_range(0.6..1.2)
            } else {
                radius * rng.gen_range(0.15..0.5)
            };
            Point::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect();
    PolygonContour::new(verts).expect("radial polygon with increasing angles is simple")
}

fn instance_parts(rng: &mut ChaCha8Rng, family: ShapeFamily) -> Vec<PolygonContour> {
    match family {
        ShapeFamily::Convex => {
            let c = Point::new(rng.gen_range(150.0..450.0), rng.gen_range(150.0..450.0));
            let size = rng.gen_range(10.0..140.0);
            vec![convex_polygon(rng, c, size)]
        }
        ShapeFamily::Star => {
            let c = Point::new(rng.gen_range(150.0..450.0), rng.gen_range(150.0..450.0));
            let size = rng.gen_range(20.0..140.0);
            vec![star_polygon(rng, c, size)]
        }
        ShapeFamily::MultiPart => {
            let count = rng.gen_range(2..=3);
            let y = rng.gen_range(100.0..300.0);
            // one 200-pixel slot per part keeps them disjoint
            (0..count)
                .map(|slot| {
                    let c = Point::new(100.0 + 200.0 * slot as f64, y + rng.gen_range(-40.0..40.0));
                    let size = rng.gen_range(15.0..90.0);
                    convex_polygon(rng, c, size)
                })
                .collect()
        }
    }
}

/// Deterministic corpus of `count` instances for `(seed, family)`.
pub fn synth_shapes(count: usize, seed: u64, family: ShapeFamily) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::new(format!("synth:{family}:count={count}:seed={seed}"));
    for i in 0..count {
        let parts = instance_parts(&mut rng, family);
        let bbox = parts_bounding_box(&parts)?;
        let id = i as u64 + 1;
        ds.records.push(AnnotationRecord {
            instance_id: id,
            image_id: id,
            category: 1,
            bbox: Some(bbox),
            parts,
            keypoints: None,
        });
    }
    Ok(ds)
}

/// Number of boundary crossings of the ray from `origin` at angle `theta`.
pub fn ray_crossings(parts: &[PolygonContour], origin: Point, theta: f64) -> usize {
    let (dy, dx) = theta.sin_cos();
    let mut hits = 0;
    for p in parts {
        for (a, b) in p.edges() {
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            let denom = dx * ey - dy * ex;
            if denom == 0.0 {
                continue;
            }
            let (wx, wy) = (a.x - origin.x, a.y - origin.y);
            // origin + t * dir = a + u * edge
            let t = (wx * ey - wy * ex) / denom;
            let u = (wx * dy - wy * dx) / denom;
            if t > 0.0 && (0.0..1.0).contains(&u) {
                hits += 1;
            }
        }
    }
    hits
}

/// Largest crossing count over `directions` evenly spaced rays cast from the
/// extreme-box center.
pub fn max_ray_crossings(parts: &[PolygonContour], directions: usize) -> Result<usize> {
    let origin = parts_bounding_box(parts)?.center();
    Ok((0..directions)
        .map(|i| ray_crossings(parts, origin, TAU * (i as f64 + 0.5) / directions as f64))
        .max()
        .unwrap_or(0))
}
