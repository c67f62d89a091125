use super::{Detection, ScoreMatrix};
use crate::geometry::{iou_bev, BBox, BBox2D, BBox3D};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// FeatD value when the two feature vectors cannot be compared.
pub const FEATURE_MISMATCH: f64 = 100.0;

/// What a scorer needs to know about a track in the current frame.
#[derive(Debug, Clone, Copy)]
pub struct TrackView<'a> {
    /// Projected predicted center, `H s⁻`.
    pub predicted_center: &'a [f64],
    /// Per-frame velocity part of the predicted state.
    pub predicted_velocity: &'a [f64],
    /// Most recent detection associated with the track.
    pub latest: &'a Detection,
}

impl TrackView<'_> {
    /// The latest box moved to the predicted center.
    pub fn predicted_box(&self) -> BBox {
        self.latest.bbox.with_center(self.predicted_center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Apollo2dParams {
    /// Multiplier on box extents when used as Gaussian standard deviations.
    pub sigma_scale: f64,
    pub min_motion: f64,
    pub min_unified: f64,
}

impl Default for Apollo2dParams {
    fn default() -> Self {
        Self {
            sigma_scale: 1.0,
            min_motion: 0.045,
            min_unified: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sim2d {
    pub fs: Option<f64>,
    pub ms: f64,
    pub ss: f64,
    pub is: f64,
    pub unified: f64,
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return if x == mean { f64::INFINITY } else { 0.0 };
    }
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

fn as_2d(b: &BBox) -> BBox2D {
    match b {
        BBox::D2(b) => *b,
        BBox::D3(b) => BBox2D::from_center(b.cx, b.cy, b.l, b.w),
    }
}

fn as_3d(b: &BBox) -> BBox3D {
    match b {
        BBox::D3(b) => *b,
        BBox::D2(b) => {
            let [cx, cy] = b.center();
            BBox3D::new([cx, cy, 0.0], b.width().max(f64::MIN_POSITIVE), b.height().max(f64::MIN_POSITIVE), 1.0, 0.0)
        }
    }
}

/// Feature, momentum, shape and intersection similarity plus their weighted sum.
pub fn sim2d(track: &TrackView<'_>, det: &Detection, params: &Apollo2dParams) -> Sim2d {
    let predicted = as_2d(&track.predicted_box());
    let observed = as_2d(&det.bbox);
    let [ox, oy] = observed.center();
    let (l, w) = (observed.width(), observed.height());

    let ms = normal_pdf(track.predicted_center[0], ox, l * params.sigma_scale)
        * normal_pdf(track.predicted_center[1], oy, w * params.sigma_scale);
    let (big_l, big_w) = (predicted.width(), predicted.height());
    let ss = if big_l * big_w > 0.0 {
        -((big_l - l) * (big_w - w) / (big_l * big_w)).abs()
    } else {
        0.0
    };
    let is = crate::geometry::iou_2d(&predicted, &observed);
    let fs = match (&track.latest.feature, &det.feature) {
        (Some(a), Some(b)) if a.len() == b.len() => Some(a.iter().zip(b).map(|(x, y)| x * y).sum()),
        _ => None,
    };
    let unified = match fs {
        Some(fs) => 0.45 * fs + 0.4 * ms + 0.15 * ss + 0.05 * is,
        None => 0.5 * ms + 0.15 * ss + 0.35 * is,
    };
    Sim2d { fs, ms, ss, is, unified }
}

/// Keeps a pair only when its motion similarity and unified score both pass.
pub fn gate2d(scores: &[Vec<Sim2d>], params: &Apollo2dParams) -> ScoreMatrix {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    let mut m = ScoreMatrix::gated(rows, cols);
    for (i, row) in scores.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            if s.ms >= params.min_motion && s.unified >= params.min_unified {
                m.set(i, j, s.unified);
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Apollo3dParams {
    pub w_location: f64,
    pub w_direction: f64,
    pub w_shape: f64,
    pub w_point_density: f64,
    /// Printed as 0.5; kept configurable since it may be a typo for 0.05.
    pub w_feature: f64,
    pub w_mass_center: f64,
    pub w_intersection: f64,
    /// Predicted speed (m/frame) above which LD penalizes lateral offsets.
    pub fast_speed: f64,
    pub max_dissimilarity: f64,
}

impl Default for Apollo3dParams {
    fn default() -> Self {
        Self {
            w_location: 0.6,
            w_direction: 0.2,
            w_shape: 0.1,
            w_point_density: 0.1,
            w_feature: 0.5,
            w_mass_center: 0.2,
            w_intersection: 0.8,
            fast_speed: 2.0,
            max_dissimilarity: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dissim3d {
    pub ld: f64,
    pub dd: f64,
    pub sd: f64,
    pub pdd: f64,
    pub featd: f64,
    pub mcd: f64,
    pub id: f64,
    pub unified: f64,
}

/// The seven Apollo LiDAR dissimilarities and the unified score selected by
/// the detection's foreground flag.
pub fn dissim3d(track: &TrackView<'_>, det: &Detection, params: &Apollo3dParams) -> Dissim3d {
    let latest = as_3d(&track.latest.bbox);
    let predicted = as_3d(&track.predicted_box());
    let observed = as_3d(&det.bbox);

    let dx = observed.cx - track.predicted_center[0];
    let dy = observed.cy - track.predicted_center[1];
    let (vx, vy) = (
        track.predicted_velocity.first().copied().unwrap_or(0.0),
        track.predicted_velocity.get(1).copied().unwrap_or(0.0),
    );
    let speed = vx.hypot(vy);
    let ld = if speed > params.fast_speed {
        // offsets along the motion are cheaper than lateral ones
        let (ux, uy) = (vx / speed, vy / speed);
        let along = dx * ux + dy * uy;
        let across = -dx * uy + dy * ux;
        (0.5 * along * along + 2.0 * across * across).sqrt()
    } else {
        dx.hypot(dy)
    };

    let [hx, hy] = observed.heading();
    let [lx, ly] = latest.heading();
    let cos = (hx * lx + hy * ly).clamp(-1.0, 1.0);
    let dd = (1.0 - cos) / 2.0;

    let vol = latest.l * latest.w * latest.h;
    let sd = if vol > 0.0 {
        ((latest.l - observed.l) * (latest.w - observed.w) * (latest.h - observed.h) / vol).abs()
    } else {
        0.0
    };

    let pdd = match (track.latest.point_count, det.point_count) {
        (Some(n), Some(m)) if n.max(m) > 0 => (n as f64 - m as f64).abs() / n.max(m) as f64,
        _ => 0.0,
    };

    let featd = match (&track.latest.feature, &det.feature) {
        (None, None) => 0.0,
        (Some(a), Some(b)) if a.len() == b.len() => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        _ => FEATURE_MISMATCH,
    };

    let mass = |d: &Detection, b: &BBox3D| d.mass_center.unwrap_or(b.center());
    let (ma, mb) = (mass(det, &observed), mass(track.latest, &latest));
    let mcd = ((ma[0] - mb[0]).powi(2) + (ma[1] - mb[1]).powi(2) + (ma[2] - mb[2]).powi(2)).sqrt();

    let id = 1.0 - iou_bev(&predicted, &observed);

    let unified = if det.foreground {
        params.w_location * ld
            + params.w_direction * dd
            + params.w_shape * sd
            + params.w_point_density * pdd
            + params.w_feature * featd
    } else {
        params.w_mass_center * mcd + params.w_intersection * id
    };
    Dissim3d { ld, dd, sd, pdd, featd, mcd, id, unified }
}

/// Drops pairs whose unified dissimilarity is strictly above the bound.
pub fn gate3d(scores: &[Vec<Dissim3d>], params: &Apollo3dParams) -> ScoreMatrix {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    let mut m = ScoreMatrix::gated(rows, cols);
    for (i, row) in scores.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            if s.unified <= params.max_dissimilarity {
                m.set(i, j, s.unified);
            }
        }
    }
    m
}
