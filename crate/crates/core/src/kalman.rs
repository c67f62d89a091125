//! Constant-velocity Kalman filter over object centers.
//!
//! The state interleaves position and per-frame velocity per axis:
//! `(x, vx, y, vy[, z, vz])`. Only centers pass through the filter; box
//! extents are copied from the latest matched detection by the tracker.

use crate::error::{Error, Result};
use crate::geometry::Dims;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Transition, projection and noise operators of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KfModel {
    pub dims: Dims,
    pub a: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Scalar noise levels; `q` and `r` become `q * I` and `r * I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub q: f64,
    pub r: f64,
}

impl NoiseConfig {
    pub fn default_for(dims: Dims) -> Self {
        match dims {
            Dims::Two => Self { q: 0.01, r: 1.0 },
            Dims::Three => Self { q: 0.01, r: 0.25 },
        }
    }
}

impl KfModel {
    pub fn constant_velocity(dims: Dims, noise: NoiseConfig) -> Self {
        let n = dims.n();
        let mut a = DMatrix::identity(2 * n, 2 * n);
        let mut h = DMatrix::zeros(n, 2 * n);
        for axis in 0..n {
            a[(2 * axis, 2 * axis + 1)] = 1.0;
            h[(axis, 2 * axis)] = 1.0;
        }
        Self {
            dims,
            a,
            h,
            q: DMatrix::identity(2 * n, 2 * n) * noise.q,
            r: DMatrix::identity(n, n) * noise.r,
        }
    }

    pub fn state_len(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_len(&self) -> usize {
        self.h.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfState {
    pub s: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl KfState {
    /// State seeded from a first observation: velocity zero, position
    /// variance on the scale of `R`, velocity variance ten times that.
    pub fn from_observation(z: &DVector<f64>, model: &KfModel) -> Self {
        let n = model.obs_len();
        let mut s = DVector::zeros(2 * n);
        let mut p = DMatrix::zeros(2 * n, 2 * n);
        for axis in 0..n {
            s[2 * axis] = z[axis];
            p[(2 * axis, 2 * axis)] = model.r[(axis, axis)];
            p[(2 * axis + 1, 2 * axis + 1)] = 10.0 * model.r[(axis, axis)];
        }
        Self { s, p }
    }

    /// `H s`: the observed part of the state.
    pub fn position(&self, model: &KfModel) -> DVector<f64> {
        &model.h * &self.s
    }

    pub fn velocity(&self) -> DVector<f64> {
        DVector::from_iterator(self.s.len() / 2, self.s.iter().skip(1).step_by(2).copied())
    }
}

/// Observation minus projected prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual(pub DVector<f64>);

impl Residual {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

pub fn predict(state: &KfState, model: &KfModel) -> KfState {
    KfState {
        s: &model.a * &state.s,
        p: &model.a * &state.p * model.a.transpose() + &model.q,
    }
}

/// Used for tracks without a matched detection; identical to [`predict`].
pub fn predict_only_step(state: &KfState, model: &KfModel) -> KfState {
    predict(state, model)
}

/// `K = P H^T (H P H^T + R)^-1`.
pub fn gain(state_pred: &KfState, model: &KfModel) -> Result<DMatrix<f64>> {
    let ht = model.h.transpose();
    let innovation = &model.h * &state_pred.p * &ht + &model.r;
    let inv = invert_innovation(innovation)?;
    Ok(&state_pred.p * ht * inv)
}

fn invert_innovation(s: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min > 1e-12 * max.max(1.0)) {
        return Err(Error::SingularInnovation);
    }
    s.try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularInnovation)
}

pub fn residual(state_pred: &KfState, z: &DVector<f64>, model: &KfModel) -> Residual {
    Residual(z - state_pred.position(model))
}

/// Merge a prediction with an observation: `s = s⁻ + K φ(z − H s⁻)`,
/// `P = (I − K H) P⁻`, symmetrized. `φ` is the identity when `modulate`
/// is `None`.
pub fn update(
    state_pred: &KfState,
    z: &DVector<f64>,
    model: &KfModel,
    modulate: Option<&dyn Fn(&Residual) -> Residual>,
) -> Result<KfState> {
    let k = gain(state_pred, model)?;
    let raw = residual(state_pred, z, model);
    let delta = match modulate {
        Some(phi) => phi(&raw),
        None => raw,
    };
    Ok(apply_gain(state_pred, &k, &delta, model))
}

/// Step 4 and 5 with an already computed gain.
pub fn apply_gain(state_pred: &KfState, k: &DMatrix<f64>, delta: &Residual, model: &KfModel) -> KfState {
    let s = &state_pred.s + k * &delta.0;
    let n = state_pred.s.len();
    let p = (DMatrix::identity(n, n) - k * &model.h) * &state_pred.p;
    let p = (&p + p.transpose()) * 0.5;
    KfState { s, p }
}
