//! Data association: pairwise scoring of tracks against detections, gating,
//! and the two matchers (greedy and Hungarian).

mod matching;
mod scoring;

pub use matching::{hungarian_min_cost, match_greedy, match_hungarian, Matching, ScoreMatrix};
pub use scoring::{
    dissim3d, gate2d, gate3d, sim2d, Apollo2dParams, Apollo3dParams, Dissim3d, Sim2d, TrackView, FEATURE_MISMATCH,
};

use crate::geometry::BBox;
use serde::{Deserialize, Serialize};

/// One observed box plus the optional cues the Apollo scorers consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
    /// Points inside the box (LiDAR only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_count: Option<u32>,
    /// Centroid of the covered points (LiDAR only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_center: Option<[f64; 3]>,
    #[serde(default = "default_foreground")]
    pub foreground: bool,
}

fn default_foreground() -> bool {
    true
}

impl Detection {
    pub fn new(bbox: BBox) -> Self {
        Self {
            bbox,
            feature: None,
            point_count: None,
            mass_center: None,
            foreground: true,
        }
    }

    pub fn with_feature(mut self, feature: Vec<f64>) -> Self {
        self.feature = Some(feature);
        self
    }
}

/// How a tracker scores candidate pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    Iou,
    Apollo2d,
    Apollo3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    Greedy,
    Hungarian,
}
