//! Axis-aligned boxes in pixel coordinates (origin top-left).

use serde::{Deserialize, Serialize};

/// A box `[x_left, y_top, x_right, y_bottom]`.
///
/// Construction does not enforce ordering; use [`BBox::is_valid`] or the
/// annotation validator to check invariants on untrusted input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_left: f64,
    pub y_top: f64,
    pub x_right: f64,
    pub y_bottom: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_left, b.y_top, b.x_right, b.y_bottom]
    }
}

impl BBox {
    pub const fn new(x_left: f64, y_top: f64, x_right: f64, y_bottom: f64) -> Self {
        Self {
            x_left,
            y_top,
            x_right,
            y_bottom,
        }
    }

    /// Box from a top-left corner and a size.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn height(&self) -> f64 {
        self.y_bottom - self.y_top
    }

    /// Area, zero for degenerate or inverted boxes.
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_left + self.x_right) / 2.0,
            (self.y_top + self.y_bottom) / 2.0,
        )
    }

    /// Strictly ordered corners with finite, non-negative coordinates.
    pub fn is_valid(&self) -> bool {
        let coords = [self.x_left, self.y_top, self.x_right, self.y_bottom];
        coords.iter().all(|c| c.is_finite() && *c >= 0.0)
            && self.x_left < self.x_right
            && self.y_top < self.y_bottom
    }

    /// Lies within `[0, width] x [0, height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_left >= 0.0 && self.y_top >= 0.0 && self.x_right <= width && self.y_bottom <= height
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x_left.max(other.x_left),
            self.y_top.max(other.y_top),
            self.x_right.min(other.x_right),
            self.y_bottom.min(other.y_bottom),
        );
        (b.x_left < b.x_right && b.y_top < b.y_bottom).then_some(b)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    /// Intersection over union; 0 when the union is empty.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x_left.min(other.x_left),
            self.y_top.min(other.y_top),
            self.x_right.max(other.x_right),
            self.y_bottom.max(other.y_bottom),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(
            self.x_left + dx,
            self.y_top + dy,
            self.x_right + dx,
            self.y_bottom + dy,
        )
    }

    /// Reflect about the vertical line `x = width / 2`.
    pub fn mirror_x(&self, width: f64) -> BBox {
        BBox::new(
            width - self.x_right,
            self.y_top,
            width - self.x_left,
            self.y_bottom,
        )
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x_left >= self.x_left
            && other.y_top >= self.y_top
            && other.x_right <= self.x_right
            && other.y_bottom <= self.y_bottom
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_left && x <= self.x_right && y >= self.y_top && y <= self.y_bottom
    }
}

/// Ordering key for "dominant" box selection: larger area first, then lower
/// `(y_top, x_left)`. Returns the index of the winner; the first index wins
/// remaining ties.
pub fn dominant_index<'a, I>(boxes: I) -> Option<usize>
where
    I: IntoIterator<Item = &'a BBox>,
{
    let mut best: Option<(usize, &BBox)> = None;
    for (i, b) in boxes.into_iter().enumerate() {
        best = match best {
            None => Some((i, b)),
            Some((bi, bb)) => {
                let (a, ba) = (b.area(), bb.area());
                let better = a > ba || (a == ba && (b.y_top, b.x_left) < (bb.y_top, bb.x_left));
                if better {
                    Some((i, b))
                } else {
                    Some((bi, bb))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

/// Exact area of the union of a set of boxes, by coordinate compression.
pub fn union_area(boxes: &[BBox]) -> f64 {
    let boxes: Vec<&BBox> = boxes.iter().filter(|b| b.area() > 0.0).collect();
    if boxes.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = boxes.iter().flat_map(|b| [b.x_left, b.x_right]).collect();
    let mut ys: Vec<f64> = boxes.iter().flat_map(|b| [b.y_top, b.y_bottom]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();

    let mut total = 0.0;
    for xw in xs.windows(2) {
        let cx = (xw[0] + xw[1]) / 2.0;
        for yw in ys.windows(2) {
            let cy = (yw[0] + yw[1]) / 2.0;
            let covered = boxes
                .iter()
                .any(|b| cx > b.x_left && cx < b.x_right && cy > b.y_top && cy < b.y_bottom);
            if covered {
                total += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    total
}
