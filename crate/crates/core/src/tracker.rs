//! Frame-by-frame tracking-by-detection: predict, associate, merge, and
//! manage trajectory birth and death.

use crate::association::{
    dissim3d, gate2d, gate3d, match_greedy, match_hungarian, sim2d, Apollo2dParams, Apollo3dParams, Detection,
    Matcher, Matching, ScoreMatrix, Scoring, TrackView,
};
use crate::defense::{modulate, Defense, DefenseConfig};
use crate::error::{Error, Result};
use crate::geometry::Dims;
use crate::kalman::{apply_gain, gain, predict, residual, KfModel, KfState, NoiseConfig, Residual};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Preset tracker variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// IoU + Hungarian on image boxes.
    Jia2d,
    /// Four-cue similarity + greedy matching on image boxes.
    Apollo2d,
    /// Bird's-eye IoU + Hungarian on 3D boxes.
    Ab3dmot,
    /// Seven-cue dissimilarity + Hungarian on 3D boxes.
    Apollo3d,
}

impl Profile {
    pub const ALL: [Profile; 4] = [Profile::Jia2d, Profile::Apollo2d, Profile::Ab3dmot, Profile::Apollo3d];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Jia2d => "jia2d",
            Profile::Apollo2d => "apollo2d",
            Profile::Ab3dmot => "ab3dmot",
            Profile::Apollo3d => "apollo3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn dims(self) -> Dims {
        match self {
            Profile::Jia2d | Profile::Apollo2d => Dims::Two,
            Profile::Ab3dmot | Profile::Apollo3d => Dims::Three,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub dims: Dims,
    pub matcher: Matcher,
    pub scoring: Scoring,
    pub hit_count: u32,
    pub reserved_age: u32,
    pub noise: NoiseConfig,
    pub iou_gate: f64,
    pub apollo2d: Apollo2dParams,
    pub apollo3d: Apollo3dParams,
    pub defense: Option<DefenseConfig>,
}

impl TrackerConfig {
    pub fn profile(profile: Profile) -> Self {
        let dims = profile.dims();
        let (matcher, scoring, reserved_age) = match profile {
            Profile::Jia2d => (Matcher::Hungarian, Scoring::Iou, 2),
            Profile::Apollo2d => (Matcher::Greedy, Scoring::Apollo2d, 60),
            Profile::Ab3dmot => (Matcher::Hungarian, Scoring::Iou, 2),
            Profile::Apollo3d => (Matcher::Hungarian, Scoring::Apollo3d, 60),
        };
        Self {
            dims,
            matcher,
            scoring,
            hit_count: 3,
            reserved_age,
            noise: NoiseConfig::default_for(dims),
            iou_gate: 0.1,
            apollo2d: Apollo2dParams::default(),
            apollo3d: Apollo3dParams::default(),
            defense: None,
        }
    }

    pub fn with_defense(mut self, defense: Option<DefenseConfig>) -> Self {
        self.defense = defense;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let compatible = match self.scoring {
            Scoring::Iou => true,
            Scoring::Apollo2d => self.dims == Dims::Two,
            Scoring::Apollo3d => self.dims == Dims::Three,
        };
        if !compatible {
            return Err(Error::InvalidConfig(format!("scoring {:?} does not fit {:?} boxes", self.scoring, self.dims)));
        }
        if self.hit_count == 0 || self.reserved_age == 0 {
            return Err(Error::InvalidConfig("hit_count and reserved_age must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(Error::InvalidConfig("iou_gate must lie in [0, 1]".into()));
        }
        if !(self.noise.q >= 0.0 && self.noise.r > 0.0) {
            return Err(Error::InvalidConfig("noise q must be >= 0 and r > 0".into()));
        }
        if let Some(d) = &self.defense {
            d.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub frame: i64,
    pub center: Vec<f64>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub kf: KfState,
    pub latest: Detection,
    pub hits: u32,
    pub misses: u32,
    pub confirmed: bool,
    pub history: Vec<HistoryEntry>,
}

/// Per-frame view of one live track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub id: u64,
    pub center: Vec<f64>,
    pub velocity: Vec<f64>,
    pub confirmed: bool,
    pub matched: bool,
    pub hits: u32,
    pub misses: u32,
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseFrameInfo {
    /// Clip bounds in force this frame; `None` while warming up.
    pub thresholds: Option<Vec<f64>>,
    /// Matched residuals with at least one clipped axis.
    pub clipped: usize,
    pub buffer_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: i64,
    pub tracks: Vec<TrackSnapshot>,
    /// Pairs are `(track id, detection index)`.
    pub matching: Matching,
    pub born: Vec<u64>,
    pub destroyed: Vec<u64>,
    pub defense: Option<DefenseFrameInfo>,
}

impl FrameResult {
    pub fn track(&self, id: u64) -> Option<&TrackSnapshot> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &TrackSnapshot> {
        self.tracks.iter().filter(|t| t.confirmed)
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    model: KfModel,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<i64>,
    defense: Option<Defense>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let model = KfModel::constant_velocity(cfg.dims, cfg.noise);
        let defense = cfg.defense.map(|d| Defense::new(cfg.dims.n(), d));
        Ok(Self { cfg, model, tracks: Vec::new(), next_id: 0, last_frame: None, defense })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn model(&self) -> &KfModel {
        &self.model
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn defense(&self) -> Option<&Defense> {
        self.defense.as_ref()
    }

    pub fn confirmed_tracks(&self) -> Vec<Track> {
        self.tracks.iter().filter(|t| t.confirmed).cloned().collect()
    }

    fn score(&self, predicted: &[KfState], detections: &[Detection]) -> (ScoreMatrix, bool) {
        let centers: Vec<Vec<f64>> = predicted.iter().map(|s| s.position(&self.model).as_slice().to_vec()).collect();
        let velocities: Vec<Vec<f64>> = predicted.iter().map(|s| s.velocity().as_slice().to_vec()).collect();
        let views: Vec<TrackView<'_>> = self
            .tracks
            .iter()
            .enumerate()
            .map(|(i, t)| TrackView {
                predicted_center: &centers[i],
                predicted_velocity: &velocities[i],
                latest: &t.latest,
            })
            .collect();
        match self.cfg.scoring {
            Scoring::Iou => {
                let mut m = ScoreMatrix::gated(views.len(), detections.len());
                for (i, v) in views.iter().enumerate() {
                    let pb = v.predicted_box();
                    for (j, d) in detections.iter().enumerate() {
                        let iou = pb.iou(&d.bbox);
                        if iou >= self.cfg.iou_gate && iou > 0.0 {
                            m.set(i, j, iou);
                        }
                    }
                }
                (m, true)
            }
            Scoring::Apollo2d => {
                let s: Vec<Vec<_>> = views
                    .iter()
                    .map(|v| detections.iter().map(|d| sim2d(v, d, &self.cfg.apollo2d)).collect())
                    .collect();
                (gate_rect(gate2d(&s, &self.cfg.apollo2d), views.len(), detections.len()), true)
            }
            Scoring::Apollo3d => {
                let s: Vec<Vec<_>> = views
                    .iter()
                    .map(|v| detections.iter().map(|d| dissim3d(v, d, &self.cfg.apollo3d)).collect())
                    .collect();
                (gate_rect(gate3d(&s, &self.cfg.apollo3d), views.len(), detections.len()), false)
            }
        }
    }

    pub fn step(&mut self, frame: i64, detections: &[Detection]) -> Result<FrameResult> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(Error::NonMonotonicFrame { prev, got: frame });
            }
        }
        if let Some(bad) = detections.iter().find(|d| d.bbox.dims() != self.cfg.dims) {
            return Err(Error::InvalidConfig(format!(
                "detection of kind {:?} fed to a {:?} tracker",
                bad.bbox.dims(),
                self.cfg.dims
            )));
        }
        // Frames skipped by the caller count as empty frames.
        let steps = self.last_frame.map_or(1, |p| frame - p);

        let mut predicted: Vec<KfState> = self.tracks.iter().map(|t| predict(&t.kf, &self.model)).collect();
        for _ in 1..steps {
            predicted = predicted.iter().map(|s| predict(s, &self.model)).collect();
        }

        let (scores, maximize) = self.score(&predicted, detections);
        let matching = match self.cfg.matcher {
            Matcher::Greedy => match_greedy(&scores, maximize),
            Matcher::Hungarian => match_hungarian(&scores, maximize),
        };
        let ids: Vec<u64> = self.tracks.iter().map(|t| t.id).collect();
        let matching = matching.relabel(&ids);

        let thresholds = self.defense.as_ref().and_then(Defense::thresholds);
        let confirmed_only = self.defense.as_ref().is_some_and(|d| d.cfg.confirmed_only);
        let mut clipped = 0;
        let mut recorded: Vec<Residual> = Vec::new();

        for (i, track) in self.tracks.iter_mut().enumerate() {
            let pred = &predicted[i];
            match matching.detection_of(track.id) {
                Some(j) => {
                    let det = &detections[j];
                    let z = det.bbox.center();
                    let k = gain(pred, &self.model)?;
                    let raw = residual(pred, &z, &self.model);
                    let guarded = self.defense.is_some() && (track.confirmed || !confirmed_only);
                    let delta = match (&thresholds, guarded) {
                        (Some(dmax), true) => {
                            let phi = modulate(&raw, dmax);
                            if phi != raw {
                                clipped += 1;
                            }
                            phi
                        }
                        _ => raw.clone(),
                    };
                    if guarded {
                        recorded.push(raw);
                    }
                    track.kf = apply_gain(pred, &k, &delta, &self.model);
                    track.latest = det.clone();
                    track.hits += 1;
                    track.misses = 0;
                    if track.hits >= self.cfg.hit_count {
                        track.confirmed = true;
                    }
                }
                None => {
                    track.kf = pred.clone();
                    track.hits = 0;
                    track.misses += 1;
                }
            }
            track.history.push(HistoryEntry {
                frame,
                center: track.kf.position(&self.model).as_slice().to_vec(),
                matched: matching.detection_of(track.id).is_some(),
            });
        }

        let reserved_age = self.cfg.reserved_age;
        let mut destroyed = Vec::new();
        self.tracks.retain(|t| {
            let alive = t.misses <= reserved_age;
            if !alive {
                destroyed.push(t.id);
            }
            alive
        });

        let mut born = Vec::new();
        for &j in &matching.unmatched_detections {
            let det = &detections[j];
            let kf = KfState::from_observation(&det.bbox.center(), &self.model);
            let id = self.next_id;
            self.next_id += 1;
            born.push(id);
            self.tracks.push(Track {
                id,
                history: vec![HistoryEntry { frame, center: kf.position(&self.model).as_slice().to_vec(), matched: true }],
                kf,
                latest: det.clone(),
                hits: 1,
                misses: 0,
                confirmed: self.cfg.hit_count <= 1,
            });
        }

        let defense = self.defense.as_mut().map(|d| {
            d.record_frame(recorded.iter());
            DefenseFrameInfo { thresholds, clipped, buffer_len: d.buffer().len() }
        });

        self.last_frame = Some(frame);
        let tracks = self
            .tracks
            .iter()
            .map(|t| TrackSnapshot {
                id: t.id,
                center: t.kf.position(&self.model).as_slice().to_vec(),
                velocity: t.kf.velocity().as_slice().to_vec(),
                confirmed: t.confirmed,
                matched: t.misses == 0,
                hits: t.hits,
                misses: t.misses,
                detection: t.latest.clone(),
            })
            .collect();
        Ok(FrameResult { frame, tracks, matching, born, destroyed, defense })
    }
}

/// Gate helpers return matrices sized by their input; empty inputs lose a
/// dimension, so rebuild the shape explicitly.
fn gate_rect(m: ScoreMatrix, rows: usize, cols: usize) -> ScoreMatrix {
    if m.rows() == rows && m.cols() == cols {
        m
    } else {
        ScoreMatrix::gated(rows, cols)
    }
}

/// Runs a fresh tracker over frames indexed from 0.
pub fn run_trace(cfg: &TrackerConfig, frames: &[Vec<Detection>]) -> Result<Vec<FrameResult>> {
    let mut tracker = Tracker::new(cfg.clone())?;
    frames
        .iter()
        .enumerate()
        .map(|(t, dets)| tracker.step(t as i64, dets))
        .collect()
}

/// Center of a detection as a plain vector.
pub fn center_of(det: &Detection) -> Vec<f64> {
    let c: DVector<f64> = det.bbox.center();
    c.as_slice().to_vec()
}
