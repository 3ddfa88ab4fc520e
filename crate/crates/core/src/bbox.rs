//! Axis-aligned boxes `(x_min, y_min, x_max, y_max)`; `y` grows downward.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", from = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.x_max > self.x_min && self.y_max > self.y_min
    }

    pub fn validated(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(Error::DegenerateBox(self.x_min, self.y_min, self.x_max, self.y_max))
        }
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    pub fn intersection(&self, o: &BBox) -> f64 {
        let w = (self.x_max.min(o.x_max) - self.x_min.max(o.x_min)).max(0.0);
        let h = (self.y_max.min(o.y_max) - self.y_min.max(o.y_min)).max(0.0);
        w * h
    }

    pub fn enclosing(&self, o: &BBox) -> BBox {
        BBox::new(
            self.x_min.min(o.x_min),
            self.y_min.min(o.y_min),
            self.x_max.max(o.x_max),
            self.y_max.max(o.y_max),
        )
    }

    pub fn iou(&self, o: &BBox) -> f64 {
        let inter = self.intersection(o);
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// `IoU − (|C| − |A ∪ B|) / |C|` with `C` the smallest enclosing box.
    pub fn giou(&self, o: &BBox) -> Result<f64> {
        self.validated()?;
        o.validated()?;
        let inter = self.intersection(o);
        let union = self.area() + o.area() - inter;
        let c = self.enclosing(o).area();
        Ok(inter / union - (c - union) / c)
    }

    /// Shifts by `(dx, dy)` and scales width and height by `exp(dw)`, `exp(dh)`
    /// about the centre.
    pub fn apply_deltas(&self, d: [f64; 4]) -> BBox {
        let (cx, cy) = self.center();
        let w = self.width() * libm::exp(d[2]);
        let h = self.height() * libm::exp(d[3]);
        let (cx, cy) = (cx + d[0] * self.width(), cy + d[1] * self.height());
        BBox::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn giou_of_disjoint_unit_boxes() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(2.0, 2.0, 3.0, 3.0);
        assert!((a.giou(&b).unwrap() - (-7.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_deltas_are_identity() {
        let a = BBox::new(0.1, 0.2, 0.4, 0.9);
        let b = a.apply_deltas([0.0; 4]);
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
