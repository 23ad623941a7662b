//! Scanline rasterization of polygon parts into packed occupancy masks.
//!
//! A cell is set when its center lies inside a part under the even-odd rule.
//! Crossings use half-open intervals in both directions, so a center lying
//! exactly on a horizontal edge belongs to the region below it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parts_bounding_box, BoundingBox, Point, PolygonContour};

pub const DEFAULT_MAX_DIM: usize = 512;
const MIN_MAX_DIM: usize = 8;

/// Placement of a square-cell grid in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub origin: Point,
    pub cell: f64,
    pub width: usize,
    pub height: usize,
}

impl RasterGrid {
    /// Grid covering `bb` whose longer side spans `max_dim` cells.
    pub fn covering(bb: &BoundingBox, max_dim: usize) -> Result<Self> {
        if max_dim < MIN_MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "raster max_dim must be >= {MIN_MAX_DIM}, got {max_dim}"
            )));
        }
        let longest = bb.width().max(bb.height());
        if !(longest > 0.0 && longest.is_finite()) {
            return Err(Error::DegeneratePolygon("zero-extent raster bounds".into()));
        }
        let cell = longest / max_dim as f64;
        let cells = |extent: f64| -> usize {
            let c = (extent / cell - 1e-9).ceil();
            (c.max(1.0) as usize).min(max_dim)
        };
        Ok(Self {
            origin: Point::new(bb.x_min, bb.y_min),
            cell,
            width: cells(bb.width()),
            height: cells(bb.height()),
        })
    }

    fn center_y(&self, row: usize) -> f64 {
        self.origin.y + (row as f64 + 0.5) * self.cell
    }

    /// First column whose center is `>= x`.
    fn first_col_at_or_after(&self, x: f64) -> usize {
        let c = ((x - self.origin.x) / self.cell - 0.5).ceil();
        let mut c = c.max(0.0).min(self.width as f64) as usize;
        // settle rounding in the division
        while c > 0 && self.center_x(c - 1) >= x {
            c -= 1;
        }
        while c < self.width && self.center_x(c) < x {
            c += 1;
        }
        c
    }

    fn center_x(&self, col: usize) -> f64 {
        self.origin.x + (col as f64 + 0.5) * self.cell
    }

    pub fn cell_area(&self) -> f64 {
        self.cell * self.cell
    }
}

/// Row-major occupancy grid packed 64 cells per word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMask {
    grid: RasterGrid,
    words: Vec<u64>,
}

impl RasterMask {
    pub fn empty(grid: RasterGrid) -> Self {
        let bits = grid.width * grid.height;
        Self {
            grid,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        let i = row * self.grid.width + col;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Covered area in squared pixels.
    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    fn set_span(&mut self, row: usize, start: usize, end: usize) {
        if start >= end {
            return;
        }
        let base = row * self.grid.width;
        let (mut lo, hi) = (base + start, base + end);
        while lo < hi {
            let w = lo / 64;
            let bit = lo % 64;
            let take = (64 - bit).min(hi - lo);
            let mask = if take == 64 { u64::MAX } else { ((1u64 << take) - 1) << bit };
            self.words[w] |= mask;
            lo += take;
        }
    }

    /// ORs one even-odd filled ring into the mask. The ring need not be
    /// simple or carry nonzero area.
    pub(crate) fn fill_ring(&mut self, ring: &[Point]) {
        let g = self.grid;
        let n = ring.len();
        if n < 3 {
            return;
        }
        let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); g.height];
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a.y, b.y) } else { (b.y, a.y) };
            // rows whose center satisfies lo <= yc < hi, widened by one to
            // absorb rounding and then checked exactly
            let r0 = (((lo - g.origin.y) / g.cell - 0.5).ceil() - 1.0).max(0.0) as usize;
            let r1 = (((hi - g.origin.y) / g.cell - 0.5).ceil() + 1.0).clamp(0.0, g.height as f64) as usize;
            for (row, xs) in crossings.iter_mut().enumerate().take(r1).skip(r0) {
                let yc = g.center_y(row);
                if (a.y <= yc) != (b.y <= yc) {
                    xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        for (row, xs) in crossings.iter_mut().enumerate() {
            if xs.is_empty() {
                continue;
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let c0 = g.first_col_at_or_after(pair[0]);
                let c1 = g.first_col_at_or_after(pair[1]);
                self.set_span(row, c0, c1);
            }
        }
    }
}

/// Rasterizes parts on a grid fitted to their joint bounding box.
pub fn rasterize(parts: &[PolygonContour], max_dim: usize) -> Result<RasterMask> {
    let bb = parts_bounding_box(parts)?;
    let grid = RasterGrid::covering(&bb, max_dim)?;
    Ok(rasterize_on(grid, parts))
}

/// Rasterizes parts onto an existing grid; anything outside is clipped.
pub fn rasterize_on(grid: RasterGrid, parts: &[PolygonContour]) -> RasterMask {
    let mut mask = RasterMask::empty(grid);
    for p in parts {
        mask.fill_ring(p.vertices());
    }
    mask
}

pub fn mask_iou(a: &RasterMask, b: &RasterMask) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += u64::from((x & y).count_ones());
        union += u64::from((x | y).count_ones());
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}
