//! Bounding boxes and overlap computations.
//!
//! 2D boxes live in pixel space as corner pairs. 3D boxes live in a
//! right-handed ground frame: `cx, cy` span the ground plane, `cz` is the
//! vertical axis, and `yaw` is the heading of the length axis measured from
//! `+x` towards `+y`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Number of spatial axes a pipeline tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dims {
    #[serde(rename = "2d")]
    Two,
    #[serde(rename = "3d")]
    Three,
}

impl Dims {
    pub fn n(self) -> usize {
        match self {
            Dims::Two => 2,
            Dims::Three => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox2D {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        debug_assert!(x1 <= x2 && y1 <= y2, "corners out of order");
        Self { x1, y1, x2, y2 }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0]
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl BBox3D {
    pub fn new(center: [f64; 3], l: f64, w: f64, h: f64, yaw: f64) -> Self {
        Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            l,
            w,
            h,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn center(&self) -> [f64; 3] {
        [self.cx, self.cy, self.cz]
    }

    pub fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw]
            .iter()
            .all(|v| v.is_finite())
            && self.l > 0.0
            && self.w > 0.0
            && self.h > 0.0
            && self.yaw > -PI
            && self.yaw <= PI
    }

    /// Footprint corners in counter-clockwise order.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[u, v]| [self.cx + u * c - v * s, self.cy + u * s + v * c])
    }

    pub fn footprint_area(&self) -> f64 {
        self.l * self.w
    }

    /// Heading as a unit vector in the ground plane.
    pub fn heading(&self) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [c, s]
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// A detection or track box of either dimensionality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BBox {
    #[serde(rename = "2d")]
    D2(BBox2D),
    #[serde(rename = "3d")]
    D3(BBox3D),
}

impl BBox {
    pub fn dims(&self) -> Dims {
        match self {
            BBox::D2(_) => Dims::Two,
            BBox::D3(_) => Dims::Three,
        }
    }

    pub fn center(&self) -> DVector<f64> {
        match self {
            BBox::D2(b) => DVector::from_row_slice(&b.center()),
            BBox::D3(b) => DVector::from_row_slice(&b.center()),
        }
    }

    /// Same extents and orientation, centered at `c`.
    pub fn with_center(&self, c: &[f64]) -> BBox {
        match self {
            BBox::D2(b) => BBox::D2(BBox2D::from_center(c[0], c[1], b.width(), b.height())),
            BBox::D3(b) => BBox::D3(BBox3D { cx: c[0], cy: c[1], cz: c[2], ..*b }),
        }
    }

    /// Rigid translation; extents unchanged.
    pub fn translate(&self, offset: &[f64]) -> BBox {
        let c = self.center();
        let moved: Vec<f64> = c.iter().zip(offset).map(|(a, b)| a + b).collect();
        self.with_center(&moved)
    }

    pub fn is_valid(&self) -> bool {
        match self {
            BBox::D2(b) => b.is_valid(),
            BBox::D3(b) => b.is_valid(),
        }
    }

    /// Overlap used by the tracker's gates: pixel IoU for 2D, bird's-eye IoU for 3D.
    pub fn iou(&self, other: &BBox) -> f64 {
        match (self, other) {
            (BBox::D2(a), BBox::D2(b)) => iou_2d(a, b),
            (BBox::D3(a), BBox::D3(b)) => iou_bev(a, b),
            _ => 0.0,
        }
    }
}

pub fn iou_2d(a: &BBox2D, b: &BBox2D) -> f64 {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// IoU of the two yaw-rotated footprints in the ground plane.
pub fn iou_bev(a: &BBox3D, b: &BBox3D) -> f64 {
    let (area_a, area_b) = (a.footprint_area(), b.footprint_area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    let dx = a.cx - b.cx;
    let dy = a.cy - b.cy;
    let reach = (a.l.hypot(a.w) + b.l.hypot(b.w)) / 2.0;
    if dx.hypot(dy) > reach {
        return 0.0;
    }
    let clipped = clip_convex(&a.footprint(), &b.footprint());
    let inter = polygon_area(&clipped);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Sutherland–Hodgman clip of `subject` by the convex, counter-clockwise `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let inside = |p: &[f64; 2]| cross(e0, e1, *p) >= 0.0;
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(&prev), inside(&cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(intersect(prev, cur, e0, e1)),
                (false, true) => {
                    output.push(intersect(prev, cur, e0, e1));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

fn cross(o: [f64; 2], a: [f64; 2], p: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
}

fn intersect(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let cp = cross(a, b, p);
    let cq = cross(a, b, q);
    let denom = cp - cq;
    if denom.abs() < f64::EPSILON {
        return q;
    }
    let t = cp / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Shoelace area (absolute).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice.abs() / 2.0
}
