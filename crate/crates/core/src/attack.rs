//! Trajectory-hijacking simulator.
//!
//! Two primitives edit the target's detection in chosen frames: `Shift`
//! translates its box, `Hide` removes it. A shift that is still associated
//! drags the track's velocity sideways; hiding afterwards lets the filter
//! extrapolate that velocity unchecked.

use crate::association::Detection;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::GtTrack;
use crate::rng::stream_rng;
use crate::tracker::{Tracker, TrackerConfig};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum AttackOp {
    Shift { offset: Vec<f64> },
    Hide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledOp {
    pub frame: i64,
    #[serde(flatten)]
    pub op: AttackOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    /// Ground-truth id of the attacked object.
    pub target: i64,
    /// Strictly increasing frames, at most one operation each.
    pub schedule: Vec<ScheduledOp>,
    pub v_atk: Vec<f64>,
    pub lambda: f64,
    pub s_ratio: f64,
    pub h_ratio: f64,
    pub r_ratio: f64,
}

impl AttackPlan {
    pub fn empty(target: i64, v_atk: Vec<f64>) -> Self {
        Self { target, schedule: Vec::new(), v_atk, lambda: 0.0, s_ratio: 0.0, h_ratio: 0.0, r_ratio: 0.0 }
    }

    pub fn op_at(&self, frame: i64) -> Option<&AttackOp> {
        self.schedule.binary_search_by_key(&frame, |s| s.frame).ok().map(|i| &self.schedule[i].op)
    }

    pub fn first_frame(&self) -> Option<i64> {
        self.schedule.first().map(|s| s.frame)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("attack plan: {e}")))?;
        if plan.schedule.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::InvalidConfig("attack plan frames must strictly increase".into()));
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedTrace {
    pub frames: Vec<Vec<Detection>>,
    pub applied: Vec<ScheduledOp>,
}

/// Index of the detection that stands for the ground-truth box: the nearest
/// center within half the box diagonal.
pub fn target_detection(dets: &[Detection], gt_box: &BBox) -> Option<usize> {
    let c = gt_box.center();
    let gate = half_diagonal(gt_box);
    dets.iter()
        .enumerate()
        .filter(|(_, d)| d.bbox.dims() == gt_box.dims())
        .map(|(i, d)| (i, (d.bbox.center() - &c).norm()))
        .filter(|(_, dist)| *dist <= gate)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

fn half_diagonal(b: &BBox) -> f64 {
    match b {
        BBox::D2(b) => b.width().hypot(b.height()) / 2.0,
        BBox::D3(b) => b.l.hypot(b.w) / 2.0,
    }
}

fn locate(frames: &[Vec<Detection>], gt: &GtTrack, frame: i64) -> Result<usize> {
    let gt_box = gt.at(frame).ok_or(Error::TargetAbsent { frame })?;
    frames
        .get(frame as usize)
        .and_then(|dets| target_detection(dets, gt_box))
        .ok_or(Error::TargetAbsent { frame })
}

fn apply_op(dets: &mut Vec<Detection>, idx: usize, op: &AttackOp) {
    match op {
        AttackOp::Shift { offset } => dets[idx].bbox = dets[idx].bbox.translate(offset),
        AttackOp::Hide => {
            dets.remove(idx);
        }
    }
}

/// Applies every scheduled operation to the target's detection.
pub fn apply_plan(frames: &[Vec<Detection>], gt: &GtTrack, plan: &AttackPlan) -> Result<PerturbedTrace> {
    let mut out = frames.to_vec();
    let mut applied = Vec::with_capacity(plan.schedule.len());
    for s in &plan.schedule {
        let idx = locate(frames, gt, s.frame)?;
        apply_op(&mut out[s.frame as usize], idx, &s.op);
        applied.push(s.clone());
    }
    Ok(PerturbedTrace { frames: out, applied })
}

/// Unit direction orthogonal to the target's motion in the ground plane
/// (3D), or the image's horizontal axis (2D).
pub fn default_direction(gt: &GtTrack, frame: i64) -> Vec<f64> {
    let Some(b) = gt.at(frame) else { return vec![1.0, 0.0] };
    match b {
        BBox::D2(_) => vec![1.0, 0.0],
        BBox::D3(b3) => {
            let prev = gt.obs.iter().rev().find(|o| o.frame < frame).map(|o| o.bbox.center());
            let next = gt.obs.iter().find(|o| o.frame > frame).map(|o| o.bbox.center());
            let c = b.center();
            let motion = match (prev, next) {
                (Some(p), _) => &c - p,
                (None, Some(n)) => n - &c,
                _ => c.clone() * 0.0,
            };
            let (mx, my) = (motion[0], motion[1]);
            let norm = mx.hypot(my);
            if norm > 1e-9 {
                vec![-my / norm, mx / norm, 0.0]
            } else {
                // fall back to the box's own lateral axis
                let [hx, hy] = b3.heading();
                vec![-hy, hx, 0.0]
            }
        }
    }
}

/// Extent of the box measured along `dir`.
pub fn extent_along(b: &BBox, dir: &[f64]) -> f64 {
    match b {
        BBox::D2(b) => dir[0].abs() * b.width() + dir[1].abs() * b.height(),
        BBox::D3(b) => {
            let [hx, hy] = b.heading();
            let along = dir[0] * hx + dir[1] * hy;
            let across = -dir[0] * hy + dir[1] * hx;
            along.abs() * b.l + across.abs() * b.w + dir.get(2).map_or(0.0, |z| z.abs() * b.h)
        }
    }
}

/// Tracker state after the frames before `frame`, plus the id of the track
/// the target's detection was matched to in the last of them.
fn tracked_prefix(frames: &[Vec<Detection>], gt: &GtTrack, frame: i64, cfg: &TrackerConfig) -> Result<(Tracker, u64)> {
    if frame < 1 || frame as usize >= frames.len() {
        return Err(Error::TargetNotTracked { frame });
    }
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut last = None;
    for (t, dets) in frames.iter().enumerate().take(frame as usize) {
        last = Some(tracker.step(t as i64, dets)?);
    }
    let prev = frame - 1;
    let idx = locate(frames, gt, prev).map_err(|_| Error::TargetNotTracked { frame })?;
    let id = last
        .and_then(|r| r.matching.track_of(idx))
        .ok_or(Error::TargetNotTracked { frame })?;
    Ok((tracker, id))
}

/// Probe: does the target's box shifted by `lambda · v_atk` at `frame` still
/// associate with track `id`? Only the tracker's published matching is read.
fn still_associated(tracker: &Tracker, dets: &[Detection], idx: usize, offset: &[f64], frame: i64, id: u64) -> Result<bool> {
    let mut probe = tracker.clone();
    let mut shifted = dets.to_vec();
    apply_op(&mut shifted, idx, &AttackOp::Shift { offset: offset.to_vec() });
    let r = probe.step(frame, &shifted)?;
    Ok(r.matching.track_of(idx) == Some(id))
}

/// Largest shift scale, to `lambda_hi / 2^iters`, for which the shifted box
/// at `frame` is still associated with the target's track. Each probe
/// replays the tracker on the perturbed frame from the state reached on the
/// untouched prefix, which is identical to re-running the whole trace.
pub fn binary_search_lambda(
    frames: &[Vec<Detection>],
    gt: &GtTrack,
    v_atk: &[f64],
    frame: i64,
    cfg: &TrackerConfig,
    lambda_hi: f64,
    iters: u32,
) -> Result<f64> {
    assert!(lambda_hi > 0.0, "lambda_hi must be positive");
    let (tracker, id) = tracked_prefix(frames, gt, frame, cfg)?;
    let dets = &frames[frame as usize];
    let idx = locate(frames, gt, frame)?;
    let feasible = |lambda: f64| -> Result<bool> {
        let offset: Vec<f64> = v_atk.iter().map(|v| lambda * v).collect();
        still_associated(&tracker, dets, idx, &offset, frame, id)
    };
    if feasible(lambda_hi)? {
        return Ok(lambda_hi);
    }
    let (mut lo, mut hi) = (0.0, lambda_hi);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 && !feasible(hi * 0.5)? {
        return Err(Error::NoFeasibleLambda);
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PocParams {
    pub attack_frame: i64,
    pub hide_frames: usize,
    /// Upper end of the search; `None` means four box extents along `v_atk`.
    pub lambda_hi: Option<f64>,
    pub iters: u32,
    /// Overrides the search when set.
    pub lambda: Option<f64>,
}

impl PocParams {
    pub fn at(attack_frame: i64) -> Self {
        Self { attack_frame, hide_frames: 5, lambda_hi: None, iters: 20, lambda: None }
    }
}

/// One associated shift followed by `hide_frames` hidden frames.
pub fn poc_two_phase(
    frames: &[Vec<Detection>],
    gt: &GtTrack,
    v_atk: &[f64],
    cfg: &TrackerConfig,
    params: &PocParams,
) -> Result<(AttackPlan, PerturbedTrace)> {
    let f0 = params.attack_frame;
    let lambda = match params.lambda {
        Some(l) => l,
        None => {
            let gt_box = gt.at(f0).ok_or(Error::TargetAbsent { frame: f0 })?;
            let hi = params.lambda_hi.unwrap_or_else(|| 4.0 * extent_along(gt_box, v_atk));
            binary_search_lambda(frames, gt, v_atk, f0, cfg, hi, params.iters)?
        }
    };
    let mut schedule = vec![ScheduledOp { frame: f0, op: AttackOp::Shift { offset: v_atk.iter().map(|v| lambda * v).collect() } }];
    for k in 1..=params.hide_frames as i64 {
        let f = f0 + k;
        if (f as usize) < frames.len() && gt.at(f).is_some() {
            schedule.push(ScheduledOp { frame: f, op: AttackOp::Hide });
        }
    }
    let n = frames.len().max(1) as f64;
    let hides = (schedule.len() - 1) as f64;
    let plan = AttackPlan {
        target: gt.id,
        schedule,
        v_atk: v_atk.to_vec(),
        lambda,
        s_ratio: 1.0 / n,
        h_ratio: hides / n,
        r_ratio: (1.0 + hides) / n,
    };
    let perturbed = apply_plan(frames, gt, &plan)?;
    Ok((plan, perturbed))
}

/// Where shift and hide frames go inside the attack window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Layout {
    /// Shifts, then hides, ending at the last frame.
    Optimal,
    /// Operations spread evenly over the window, kinds interleaved.
    Uniform,
    /// Positions and kinds drawn from the seed.
    Random { seed: u64 },
    /// Hides, then shifts, ending at the last frame.
    HideFirst,
}

impl Layout {
    pub fn name(&self) -> String {
        match self {
            Layout::Optimal => "optimal".into(),
            Layout::Uniform => "uniform".into(),
            Layout::Random { seed } => format!("random-{seed}"),
            Layout::HideFirst => "hide-first".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Shift,
    Hide,
}

/// Shift and hide counts for ratios of a `t`-frame trace.
pub fn op_counts(t: usize, s_ratio: f64, h_ratio: f64) -> (usize, usize) {
    ((s_ratio * t as f64).round() as usize, (h_ratio * t as f64).round() as usize)
}

/// Per-frame operation kinds for a layout. The window is the last
/// `round(r_ratio · t)` frames (never shorter than the operation count).
pub fn layout_schedule(t: usize, n_shift: usize, n_hide: usize, r_ratio: f64, layout: Layout) -> Vec<Option<OpKind>> {
    let n = n_shift + n_hide;
    assert!(n <= t, "more operations than frames");
    let w = ((r_ratio * t as f64).round() as usize).clamp(n, t);
    let start = t - w;
    let mut out = vec![None; t];
    match layout {
        Layout::Optimal => {
            out[t - n..t - n_hide].fill(Some(OpKind::Shift));
            out[t - n_hide..t].fill(Some(OpKind::Hide));
        }
        Layout::HideFirst => {
            out[t - n..t - n_shift].fill(Some(OpKind::Hide));
            out[t - n_shift..t].fill(Some(OpKind::Shift));
        }
        Layout::Uniform => {
            for k in 0..n {
                let pos = start + ((k as f64 + 0.5) * w as f64 / n as f64) as usize;
                let is_shift = (k + 1) * n_shift / n > k * n_shift / n;
                out[pos.min(t - 1)] = Some(if is_shift { OpKind::Shift } else { OpKind::Hide });
            }
        }
        Layout::Random { seed } => {
            let mut rng = stream_rng(seed, 1);
            let mut kinds: Vec<OpKind> =
                std::iter::repeat_n(OpKind::Shift, n_shift).chain(std::iter::repeat_n(OpKind::Hide, n_hide)).collect();
            kinds.shuffle(&mut rng);
            let mut pos = index::sample(&mut rng, w, n).into_vec();
            pos.sort_unstable();
            for (p, k) in pos.into_iter().zip(kinds) {
                out[start + p] = Some(k);
            }
        }
    }
    out
}

/// Schedule with `s_ratio · t` shifts of `lambda · v_atk` and `h_ratio · t`
/// hides over a `t`-frame trace.
#[allow(clippy::too_many_arguments)]
pub fn generalized_plan(
    target: i64,
    t: usize,
    s_ratio: f64,
    h_ratio: f64,
    r_ratio: f64,
    lambda: f64,
    v_atk: &[f64],
    layout: Layout,
) -> Result<AttackPlan> {
    if !(0.0..=1.0).contains(&s_ratio) || !(0.0..=1.0).contains(&h_ratio) || s_ratio + h_ratio > r_ratio + 1e-12 || r_ratio > 1.0 {
        return Err(Error::InvalidConfig("need 0 <= s, h and s + h <= r <= 1".into()));
    }
    let (ns, nh) = op_counts(t, s_ratio, h_ratio);
    let offset: Vec<f64> = v_atk.iter().map(|v| lambda * v).collect();
    let schedule = layout_schedule(t, ns, nh, r_ratio, layout)
        .into_iter()
        .enumerate()
        .filter_map(|(f, k)| {
            k.map(|k| ScheduledOp {
                frame: f as i64,
                op: match k {
                    OpKind::Shift => AttackOp::Shift { offset: offset.clone() },
                    OpKind::Hide => AttackOp::Hide,
                },
            })
        })
        .collect();
    Ok(AttackPlan { target, schedule, v_atk: v_atk.to_vec(), lambda, s_ratio, h_ratio, r_ratio })
}
