//! Synthetic traces: constant-velocity ground truth with Gaussian center
//! noise on the detections, written as KITTI rows so synthetic and real
//! sequences share one code path.

use crate::error::{Error, Result};
use crate::geometry::Dims;
use crate::kitti::{KittiRow, Trace};
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Lateral spacing of highway lanes, meters.
pub const LANE_WIDTH: f64 = 3.5;
/// Car extents `l, w, h`, meters.
pub const CAR_SIZE: [f64; 3] = [4.0, 1.7, 1.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    pub id: i64,
    /// Center at `first_frame`. Pixels `(x, y)` in 2D, meters `(x, y, z)` in 3D.
    pub start: Vec<f64>,
    /// Per-frame displacement.
    pub velocity: Vec<f64>,
    /// `(width, height)` in 2D, `(l, w, h)` in 3D.
    pub size: Vec<f64>,
    pub first_frame: usize,
    /// Inclusive.
    pub last_frame: usize,
}

impl SynthObject {
    pub fn center_at(&self, frame: usize) -> Option<Vec<f64>> {
        (self.first_frame..=self.last_frame).contains(&frame).then(|| {
            let dt = (frame - self.first_frame) as f64;
            self.start.iter().zip(&self.velocity).map(|(s, v)| s + v * dt).collect()
        })
    }

    /// Heading of the velocity in the ground plane.
    pub fn yaw(&self) -> f64 {
        if self.velocity[0] == 0.0 && self.velocity[1] == 0.0 {
            0.0
        } else {
            self.velocity[1].atan2(self.velocity[0])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: Dims,
    pub frames: usize,
    /// Standard deviation of the per-axis center noise on detections.
    pub noise_sigma: f64,
    pub seed: u64,
    pub objects: Vec<SynthObject>,
}

impl SynthSpec {
    /// Cars driving along `+x` in parallel lanes, one per lane, each with its
    /// own speed (meters per frame) drawn from `speed`.
    pub fn highway(lanes: usize, frames: usize, noise_sigma: f64, speed: (f64, f64), seed: u64) -> Self {
        let mut rng = stream_rng(seed, u64::MAX);
        let objects = (0..lanes)
            .map(|i| SynthObject {
                id: i as i64,
                start: vec![rng.random_range(0.0..20.0), i as f64 * LANE_WIDTH, 0.0],
                velocity: vec![rng.random_range(speed.0..=speed.1), 0.0, 0.0],
                size: CAR_SIZE.to_vec(),
                first_frame: 0,
                last_frame: frames - 1,
            })
            .collect();
        Self { dims: Dims::Three, frames, noise_sigma, seed, objects }
    }

    /// Image-plane analogue: boxes sliding right in rows 80 pixels apart.
    pub fn image_rows(rows: usize, frames: usize, noise_sigma: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, u64::MAX);
        let objects = (0..rows)
            .map(|i| SynthObject {
                id: i as i64,
                start: vec![rng.random_range(50.0..150.0), 100.0 + 80.0 * i as f64],
                velocity: vec![rng.random_range(1.0..=4.0), 0.0],
                size: vec![60.0, 40.0],
                first_frame: 0,
                last_frame: frames - 1,
            })
            .collect();
        Self { dims: Dims::Two, frames, noise_sigma, seed, objects }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dims.n();
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be finite and >= 0".into()));
        }
        for o in &self.objects {
            if o.start.len() != n || o.velocity.len() != n || o.size.len() != n {
                return Err(Error::InvalidConfig(format!("object {} does not have {n} axes", o.id)));
            }
            if o.first_frame > o.last_frame || o.last_frame >= self.frames {
                return Err(Error::InvalidConfig(format!("object {} lifetime outside the trace", o.id)));
            }
            if o.size.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidConfig(format!("object {} has a non-positive extent", o.id)));
            }
        }
        Ok(())
    }
}

fn row(dims: Dims, frame: usize, track_id: i64, obj: &SynthObject, center: &[f64]) -> KittiRow {
    let mut r = KittiRow {
        frame: frame as i64,
        track_id,
        class: "Car".into(),
        truncated: 0.0,
        occluded: 0,
        alpha: -10.0,
        bbox2d: [-1.0; 4],
        dims: [-1.0; 3],
        loc: [-1000.0; 3],
        rotation_y: -10.0,
        score: None,
    };
    match dims {
        Dims::Two => {
            let (w, h) = (obj.size[0], obj.size[1]);
            r.bbox2d = [center[0] - w / 2.0, center[1] - h / 2.0, center[0] + w / 2.0, center[1] + h / 2.0];
        }
        Dims::Three => {
            // tracker (x, y, z) is camera (x, z, y)
            r.dims = [obj.size[2], obj.size[1], obj.size[0]];
            r.loc = [center[0], center[2], center[1]];
            r.rotation_y = -obj.yaw();
        }
    }
    r
}

/// Deterministic trace for `spec`.
pub fn synth(spec: &SynthSpec) -> Result<Trace> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma checked"));
    let mut labels = Vec::new();
    let mut detections = Vec::new();
    for frame in 0..spec.frames {
        for obj in &spec.objects {
            let Some(c) = obj.center_at(frame) else { continue };
            labels.push(row(spec.dims, frame, obj.id, obj, &c));
            let noisy: Vec<f64> = match &noise {
                Some(n) => c.iter().map(|v| v + n.sample(&mut rng)).collect(),
                None => c.clone(),
            };
            detections.push(row(spec.dims, frame, -1, obj, &noisy));
        }
    }
    let mut t = Trace::from_rows(labels, detections);
    t.frame_count = spec.frames;
    Ok(t)
}
