//! Kalman-filter multi-object tracking workbench.
//!
//! The crate bundles four things that are usually scattered across projects:
//!
//! * constant-velocity KF trackers in a simple IoU flavour and in an
//!   Apollo-style flavour with multi-dimensional (dis)similarity scoring,
//! * a simulator for trajectory-hijacking attacks (shift the target's box,
//!   then hide it so the injected velocity keeps accumulating),
//! * the deviation-clipping patch: a shared, trimmed FIFO of historical
//!   observation-prediction deviations, a Gamma fit per axis and a clip of
//!   every residual at the fitted upper quantile,
//! * evaluation: CLEAR metrics, false deviation / lost frames, and
//!   Monte-Carlo checks of how deviation grows under attack.
//!
//! Everything is deterministic given a seed.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod attack;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod kalman;
pub mod kitti;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod theory;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{BBox, BBox2D, BBox3D, Dims};
