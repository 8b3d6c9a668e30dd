use super::DataError;

/// Axis-aligned box in normalized image coordinates.
///
/// Invariants enforced at construction: `x1 < x2`, `y1 < y2`, all
/// coordinates in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, DataError> {
        let err = |reason| DataError::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        for v in [x1, y1, x2, y2] {
            if !v.is_finite() {
                return Err(err("coordinate not finite"));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(err("coordinate outside [0, 1]"));
            }
        }
        if x1 >= x2 {
            return Err(err("x1 must be strictly less than x2"));
        }
        if y1 >= y2 {
            return Err(err("y1 must be strictly less than y2"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Normalized area (fraction of the unit square).
    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Express `inner` in the coordinate frame of `self`, clamped to the
    /// overlapping region. `None` when the boxes do not overlap (or overlap
    /// in a zero-area sliver).
    pub fn relative(&self, inner: &BoundingBox) -> Option<BoundingBox> {
        let x1 = inner.x1.max(self.x1);
        let y1 = inner.y1.max(self.y1);
        let x2 = inner.x2.min(self.x2);
        let y2 = inner.y2.min(self.y2);
        if x1 >= x2 || y1 >= y2 {
            return None;
        }
        let w = self.width();
        let h = self.height();
        BoundingBox::new(
            ((x1 - self.x1) / w).clamp(0.0, 1.0),
            ((y1 - self.y1) / h).clamp(0.0, 1.0),
            ((x2 - self.x1) / w).clamp(0.0, 1.0),
            ((y2 - self.y1) / h).clamp(0.0, 1.0),
        )
        .ok()
    }
}
