//! Pixel boxes and frame intervals.
//!
//! Conventions used everywhere in this crate:
//! - Pixel boxes are **half-open**: `[x0, x1) x [y0, y1)`, so `area` equals
//!   the number of covered pixels and abutting boxes do not intersect.
//! - Frame intervals are **inclusive** on both ends; their length in frames
//!   is `end - start + 1`.

use serde::{Deserialize, Serialize};

/// Integer pixel box, half-open on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoxPx {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl From<[u32; 4]> for BoxPx {
    fn from(v: [u32; 4]) -> Self {
        BoxPx { x0: v[0], y0: v[1], x1: v[2], y1: v[3] }
    }
}

impl From<BoxPx> for [u32; 4] {
    fn from(b: BoxPx) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BoxPx {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        BoxPx { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    /// Number of pixels covered.
    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    /// Intersection; `None` when the boxes do not overlap.
    pub fn intersect(&self, other: &BoxPx) -> Option<BoxPx> {
        let b = BoxPx {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        if b.is_empty() {
            None
        } else {
            Some(b)
        }
    }

    /// Smallest box containing both operands (empty operands are ignored).
    pub fn union_bounds(&self, other: &BoxPx) -> BoxPx {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        BoxPx {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Jaccard overlap of the two pixel sets.
    pub fn iou(&self, other: &BoxPx) -> f64 {
        let inter = self.intersect(other).map_or(0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// True when the pixel with integer coordinates `(x, y)` is covered.
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) as f64 / 2.0, (self.y0 + self.y1) as f64 / 2.0)
    }

    pub fn to_f32(&self) -> BoxF {
        BoxF { x0: self.x0 as f32, y0: self.y0 as f32, x1: self.x1 as f32, y1: self.y1 as f32 }
    }
}

/// Float box in some continuous coordinate frame (crop space, clip space).
/// Same half-open convention as [`BoxPx`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f32; 4]", into = "[f32; 4]")]
pub struct BoxF {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
}

impl From<[f32; 4]> for BoxF {
    fn from(v: [f32; 4]) -> Self {
        BoxF { x0: v[0], y0: v[1], x1: v[2], y1: v[3] }
    }
}

impl From<BoxF> for [f32; 4] {
    fn from(b: BoxF) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BoxF {
    pub fn new(x0: f32, y0: f32, x1: f32, y1: f32) -> Self {
        BoxF { x0, y0, x1, y1 }
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn clamp_to(&self, w: f32, h: f32) -> BoxF {
        BoxF {
            x0: self.x0.clamp(0.0, w),
            y0: self.y0.clamp(0.0, h),
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
        }
    }

    /// Mirror horizontally inside a region of width `w`.
    pub fn hflip(&self, w: f32) -> BoxF {
        BoxF { x0: w - self.x1, y0: self.y0, x1: w - self.x0, y1: self.y1 }
    }
}

/// Inclusive frame interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInterval {
    pub start: u32,
    pub end: u32,
}

impl FrameInterval {
    pub fn new(start: u32, end: u32) -> Self {
        FrameInterval { start, end }
    }

    /// Number of frames covered (inclusive ends).
    pub fn len(&self) -> u32 {
        if self.end < self.start {
            0
        } else {
            self.end - self.start + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn intersection_len(&self, other: &FrameInterval) -> u32 {
        let s = self.start.max(other.start);
        let e = self.end.min(other.end);
        if e < s {
            0
        } else {
            e - s + 1
        }
    }

    /// IoU between two inclusive intervals, counted in frames.
    pub fn iou(&self, other: &FrameInterval) -> f64 {
        let inter = self.intersection_len(other) as f64;
        let union = (self.len() + other.len()) as f64 - inter;
        if union == 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn area_counts_pixels() {
        assert_eq!(BoxPx::new(0, 0, 10, 10).area(), 100);
        assert_eq!(BoxPx::new(3, 4, 4, 5).area(), 1);
        assert_eq!(BoxPx::new(3, 4, 3, 9).area(), 0);
    }

    #[test]
    fn abutting_boxes_do_not_intersect() {
        let a = BoxPx::new(0, 0, 10, 10);
        let b = BoxPx::new(10, 0, 20, 10);
        assert_eq!(a.intersect(&b), None);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn interval_iou_uses_inclusive_length() {
        // Overlap frames {5..=10} = 6, union frames {0..=15} = 16.
        let a = FrameInterval::new(0, 10);
        let b = FrameInterval::new(5, 15);
        assert_eq!(a.iou(&b), 6.0 / 16.0);
        assert_eq!(FrameInterval::new(4, 4).len(), 1);
    }

    #[test]
    fn spatial_iou_worked_example() {
        // Two 2x2 boxes sharing a 1x2 column: inter 2, union 6.
        let a = BoxPx::new(0, 0, 2, 2);
        let b = BoxPx::new(1, 0, 3, 2);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(
            ax0 in 0u32..50, aw in 0u32..50, ay0 in 0u32..50, ah in 0u32..50,
            bx0 in 0u32..50, bw in 0u32..50, by0 in 0u32..50, bh in 0u32..50,
        ) {
            let a = BoxPx::new(ax0, ay0, ax0 + aw, ay0 + ah);
            let b = BoxPx::new(bx0, by0, bx0 + bw, by0 + bh);
            let ab = a.iou(&b);
            let ba = b.iou(&a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.is_empty() {
                prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn intersection_inside_union_bounds(
            ax0 in 0u32..50, aw in 1u32..50, ay0 in 0u32..50, ah in 1u32..50,
            bx0 in 0u32..50, bw in 1u32..50, by0 in 0u32..50, bh in 1u32..50,
        ) {
            let a = BoxPx::new(ax0, ay0, ax0 + aw, ay0 + ah);
            let b = BoxPx::new(bx0, by0, bx0 + bw, by0 + bh);
            let u = a.union_bounds(&b);
            if let Some(i) = a.intersect(&b) {
                prop_assert!(i.x0 >= u.x0 && i.x1 <= u.x1 && i.y0 >= u.y0 && i.y1 <= u.y1);
                prop_assert!(i.area() <= a.area() && i.area() <= b.area());
            }
            prop_assert!(u.area() >= a.area() && u.area() >= b.area());
        }
    }
}
