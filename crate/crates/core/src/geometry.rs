//! Axis-aligned rectangles in page pixel coordinates (y grows downward).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corner-form rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl BBox {
    /// Builds a box, checking ordering, finiteness and non-negativity.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate().map(|_| b)
    }

    /// Exact conversion from `[x, y, w, h]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        BBox::new(x, y, x + w, y + h)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        let reason = if coords.iter().any(|c| !c.is_finite()) {
            Some("non-finite coordinate")
        } else if coords.iter().any(|&c| c < 0.0) {
            Some("negative coordinate")
        } else if self.x_min > self.x_max || self.y_min > self.y_max {
            Some("min corner exceeds max corner")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidBox {
                id: format!("{self:?}"),
                reason: reason.to_string(),
            }),
            None => Ok(()),
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> Point {
        Point {
            x: (self.x_min + self.x_max) / 2.0,
            y: (self.y_min + self.y_max) / 2.0,
        }
    }

    /// Area of the intersection; touching edges give 0.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Clamps the box into `[0, width] x [0, height]`. Returns the clamped box
    /// and whether anything changed.
    pub fn clamp_to(&self, width: f64, height: f64) -> (BBox, bool) {
        let c = BBox {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        };
        (c, c != *self)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn scale(&self, s: f64) -> BBox {
        BBox {
            x_min: self.x_min * s,
            y_min: self.y_min * s,
            x_max: self.x_max * s,
            y_max: self.y_max * s,
        }
    }
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub fn centroid(b: &BBox) -> Point {
    b.centroid()
}

pub fn centroid_distance(a: &BBox, b: &BBox) -> f64 {
    a.centroid().distance(&b.centroid())
}

/// Intersection over union. Two zero-area boxes have no defined union; they
/// score 1.0 when identical and 0.0 otherwise.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Fraction of `inner`'s area covered by `outer`.
pub fn overlap_fraction(inner: &BBox, outer: &BBox) -> Result<f64> {
    let area = inner.area();
    if area <= 0.0 {
        return Err(Error::DegenerateBox(format!(
            "inner box {inner:?} has zero area"
        )));
    }
    Ok(inner.intersection_area(outer) / area)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&b(0.0, 0.0, 10.0, 10.0)), Point { x: 5.0, y: 5.0 });
        assert_eq!(centroid(&b(2.0, 4.0, 2.0, 4.0)), Point { x: 2.0, y: 4.0 });
        assert_eq!(centroid(&b(0.0, 0.0, 4.0, 2.0)), Point { x: 2.0, y: 1.0 });
    }

    #[test]
    fn distance_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(centroid_distance(&a, &a), 0.0);
        assert_eq!(centroid_distance(&a, &b(10.0, 0.0, 20.0, 10.0)), 10.0);
        // centroids (1,1) and (4,5)
        assert_eq!(centroid_distance(&b(0.0, 0.0, 2.0, 2.0), &b(3.0, 4.0, 5.0, 6.0)), 5.0);
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(iou(&a, &b(1.0, 1.0, 3.0, 3.0)), 1.0 / 7.0);
    }

    #[test]
    fn touching_edges_have_zero_overlap() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        let c = b(2.0, 0.0, 4.0, 2.0);
        assert_eq!(a.intersection_area(&c), 0.0);
        assert_eq!(iou(&a, &c), 0.0);
    }

    #[test]
    fn overlap_fraction_examples() {
        let outer = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(overlap_fraction(&b(1.0, 1.0, 2.0, 2.0), &outer).unwrap(), 1.0);
        assert_eq!(overlap_fraction(&b(20.0, 20.0, 30.0, 30.0), &outer).unwrap(), 0.0);
        assert_eq!(
            overlap_fraction(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 0.0, 4.0, 2.0)).unwrap(),
            0.5
        );
        assert!(matches!(
            overlap_fraction(&b(1.0, 1.0, 1.0, 5.0), &outer),
            Err(Error::DegenerateBox(_))
        ));
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(BBox::new(3.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn xywh_conversion_is_exact() {
        assert_eq!(BBox::from_xywh(3.0, 4.0, 5.0, 6.0).unwrap(), b(3.0, 4.0, 8.0, 10.0));
    }

    #[test]
    fn clamp_reports_change() {
        let (c, changed) = b(0.0, 0.0, 110.0, 50.0).clamp_to(100.0, 100.0);
        assert!(changed);
        assert_eq!(c, b(0.0, 0.0, 100.0, 50.0));
        assert!(!b(0.0, 0.0, 10.0, 10.0).clamp_to(100.0, 100.0).1);
    }
}
