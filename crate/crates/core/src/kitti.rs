//! KITTI tracking label files.
//!
//! Row layout: `frame track_id type truncated occluded alpha x1 y1 x2 y2
//! h w l x y z rotation_y [score]`. 3D boxes are mapped from camera
//! coordinates to the tracker's ground-plane frame: tracker `(x, y, z)` is
//! camera `(x, z, y)` and yaw is `−rotation_y`.

use crate::association::Detection;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, BBox, BBox2D, BBox3D, Dims};
use crate::metrics::{GtObs, GtTrack, Units};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KittiRow {
    pub frame: i64,
    pub track_id: i64,
    pub class: String,
    pub truncated: f64,
    pub occluded: i64,
    pub alpha: f64,
    pub bbox2d: [f64; 4],
    /// `h, w, l` in meters.
    pub dims: [f64; 3],
    /// Camera-frame `x, y, z` in meters.
    pub loc: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiRow {
    pub fn bbox2d(&self) -> Option<BBox2D> {
        let [x1, y1, x2, y2] = self.bbox2d;
        let b = BBox2D { x1, y1, x2, y2 };
        (b.is_valid() && b.area() > 0.0).then_some(b)
    }

    /// `None` for rows without 3D annotation (non-positive extents).
    pub fn bbox3d(&self) -> Option<BBox3D> {
        let [h, w, l] = self.dims;
        if !(h > 0.0 && w > 0.0 && l > 0.0) {
            return None;
        }
        let [x, y, z] = self.loc;
        Some(BBox3D::new([x, z, y], l, w, h, wrap_angle(-self.rotation_y)))
    }

    pub fn bbox(&self, dims: Dims) -> Option<BBox> {
        match dims {
            Dims::Two => self.bbox2d().map(BBox::D2),
            Dims::Three => self.bbox3d().map(BBox::D3),
        }
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let bad = |reason: String| Error::MalformedRow { line: lineno, reason };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 17 && f.len() != 18 {
            return Err(bad(format!("expected 17 or 18 fields, found {}", f.len())));
        }
        let int = |i: usize| f[i].parse::<i64>().map_err(|_| bad(format!("field {} is not an integer: {:?}", i + 1, f[i])));
        let num = |i: usize| {
            f[i].parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("field {} is not a finite number: {:?}", i + 1, f[i])))
        };
        let frame = int(0)?;
        if frame < 0 {
            return Err(bad("negative frame index".into()));
        }
        Ok(Self {
            frame,
            track_id: int(1)?,
            class: f[2].to_string(),
            truncated: num(3)?,
            occluded: int(4)?,
            alpha: num(5)?,
            bbox2d: [num(6)?, num(7)?, num(8)?, num(9)?],
            dims: [num(10)?, num(11)?, num(12)?],
            loc: [num(13)?, num(14)?, num(15)?],
            rotation_y: num(16)?,
            score: if f.len() == 18 { Some(num(17)?) } else { None },
        })
    }

    fn write(&self, out: &mut String) {
        let _ = write!(
            out,
            "{} {} {} {:.6} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            self.frame,
            self.track_id,
            self.class,
            self.truncated,
            self.occluded,
            self.alpha,
            self.bbox2d[0],
            self.bbox2d[1],
            self.bbox2d[2],
            self.bbox2d[3],
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.loc[0],
            self.loc[1],
            self.loc[2],
            self.rotation_y
        );
        if let Some(s) = self.score {
            let _ = write!(out, " {s:.6}");
        }
        out.push('\n');
    }
}

/// One sequence: annotation rows plus the detector output fed to trackers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Frames `0..frame_count`; frames without rows are empty.
    pub frame_count: usize,
    /// Ground-truth rows, by frame then track id.
    pub labels: Vec<KittiRow>,
    /// Detector rows. For label files these are the labels themselves.
    pub detections: Vec<KittiRow>,
}

impl Trace {
    pub fn from_rows(labels: Vec<KittiRow>, detections: Vec<KittiRow>) -> Self {
        let last = labels.iter().chain(&detections).map(|r| r.frame).max();
        Self { frame_count: last.map_or(0, |f| f as usize + 1), labels, detections }
    }

    /// Tracker input per frame, ids stripped.
    pub fn frames(&self, dims: Dims) -> Vec<Vec<Detection>> {
        let mut out = vec![Vec::new(); self.frame_count];
        for r in &self.detections {
            if let Some(b) = r.bbox(dims) {
                out[r.frame as usize].push(Detection::new(b));
            }
        }
        out
    }

    pub fn ground_truth(&self, dims: Dims) -> Vec<GtTrack> {
        let mut tracks: BTreeMap<i64, GtTrack> = BTreeMap::new();
        for r in self.labels.iter().filter(|r| r.track_id >= 0) {
            if let Some(b) = r.bbox(dims) {
                tracks
                    .entry(r.track_id)
                    .or_insert_with(|| GtTrack { id: r.track_id, class: r.class.clone(), obs: Vec::new() })
                    .obs
                    .push(GtObs { frame: r.frame, bbox: b });
            }
        }
        tracks.into_values().collect()
    }

    pub fn units(dims: Dims) -> Units {
        Units::of(dims)
    }
}

/// Parses a label file. Only rows whose class is in `classes` are kept;
/// an empty filter keeps everything. Frame numbers may skip (gaps are empty
/// frames) but must never decrease.
pub fn parse(text: &str, classes: &[&str]) -> Result<Trace> {
    let mut rows = Vec::new();
    let mut prev: Option<i64> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = KittiRow::parse(line, i + 1)?;
        if let Some(p) = prev {
            if row.frame < p {
                return Err(Error::NonContiguousFrames { line: i + 1, frame: row.frame, prev: p });
            }
        }
        prev = Some(row.frame);
        if classes.is_empty() || classes.contains(&row.class.as_str()) {
            rows.push(row);
        }
    }
    let detections = rows.iter().cloned().map(|r| KittiRow { track_id: -1, ..r }).collect();
    Ok(Trace::from_rows(rows, detections))
}

/// Label rows in file order with six-decimal floats.
pub fn serialize(trace: &Trace) -> String {
    let mut out = String::new();
    for r in &trace.labels {
        r.write(&mut out);
    }
    out
}

/// Detector rows in the same layout.
pub fn serialize_detections(trace: &Trace) -> String {
    let mut out = String::new();
    for r in &trace.detections {
        r.write(&mut out);
    }
    out
}
