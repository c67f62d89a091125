//! CLEAR metrics against ground truth, plus the attack-side measures: false
//! deviation along the attack axis and lost frames of the target track.

use crate::association::{match_hungarian, ScoreMatrix};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Dims};
use crate::tracker::FrameResult;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Pixels,
    Meters,
}

impl Units {
    pub fn of(dims: Dims) -> Self {
        match dims {
            Dims::Two => Units::Pixels,
            Dims::Three => Units::Meters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObs {
    pub frame: i64,
    pub bbox: BBox,
}

/// Ground-truth trajectory of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtTrack {
    pub id: i64,
    pub class: String,
    /// Ordered by strictly increasing frame.
    pub obs: Vec<GtObs>,
}

impl GtTrack {
    pub fn at(&self, frame: i64) -> Option<&BBox> {
        self.obs.binary_search_by_key(&frame, |o| o.frame).ok().map(|i| &self.obs[i].bbox)
    }

    pub fn center_at(&self, frame: i64) -> Option<Vec<f64>> {
        self.at(frame).map(|b| b.center().as_slice().to_vec())
    }

    pub fn first_frame(&self) -> Option<i64> {
        self.obs.first().map(|o| o.frame)
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.obs.last().map(|o| o.frame)
    }
}

/// One perceived object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredObs {
    pub id: u64,
    pub bbox: BBox,
}

/// Confirmed tracks of every frame, boxes placed at the estimated centers.
/// With `backfill`, a track that is eventually confirmed also reports the
/// frames it spent as provisional (offline evaluation).
pub fn predictions_from(results: &[FrameResult], backfill: bool) -> Vec<(i64, Vec<PredObs>)> {
    let confirmed: HashSet<u64> = if backfill {
        results.iter().flat_map(|r| r.confirmed().map(|t| t.id)).collect()
    } else {
        HashSet::new()
    };
    results
        .iter()
        .map(|r| {
            let objs = r
                .tracks
                .iter()
                .filter(|t| t.confirmed || confirmed.contains(&t.id))
                .map(|t| PredObs { id: t.id, bbox: t.detection.bbox.with_center(&t.center) })
                .collect();
            (r.frame, objs)
        })
        .collect()
}

/// When a prediction may stand for a ground-truth object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MatchCriterion {
    /// Overlap at least this IoU; distance is `1 − IoU`.
    Iou(f64),
    /// Centers at most this far apart; distance is the Euclidean gap.
    CenterDistance(f64),
}

impl MatchCriterion {
    pub fn default_for(dims: Dims) -> Self {
        match dims {
            Dims::Two => MatchCriterion::Iou(0.5),
            Dims::Three => MatchCriterion::CenterDistance(1.0),
        }
    }

    /// Distance of a pair, `None` when the pair may not correspond.
    pub fn distance(&self, gt: &BBox, pred: &BBox) -> Option<f64> {
        match *self {
            MatchCriterion::Iou(t) => {
                let iou = gt.iou(pred);
                (iou >= t).then_some(1.0 - iou)
            }
            MatchCriterion::CenterDistance(t) => {
                let d = (gt.center() - pred.center()).norm();
                (d <= t).then_some(d)
            }
        }
    }

    /// Largest distance an accepted pair can have.
    pub fn max_distance(&self) -> f64 {
        match *self {
            MatchCriterion::Iou(t) => 1.0 - t,
            MatchCriterion::CenterDistance(t) => t,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameCorrespondence {
    /// `(gt id, predicted id, distance)`.
    pub pairs: Vec<(i64, u64, f64)>,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
}

/// Correspondence for one frame. Pairs kept from the previous frame survive
/// when still within the threshold; the rest are assigned by minimum total
/// distance. `last_id` maps each GT object to the predicted id it was last
/// matched with and is updated in place.
pub fn match_frame_gt(
    preds: &[PredObs],
    gts: &[(i64, BBox)],
    criterion: &MatchCriterion,
    last_id: &mut HashMap<i64, u64>,
) -> FrameCorrespondence {
    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gts.len()];
    let mut pred_used = vec![false; preds.len()];
    for (gi, (gid, gb)) in gts.iter().enumerate() {
        let Some(&pid) = last_id.get(gid) else { continue };
        if let Some(pi) = preds.iter().position(|p| p.id == pid) {
            if pred_used[pi] {
                continue;
            }
            if let Some(d) = criterion.distance(gb, &preds[pi].bbox) {
                gt_used[gi] = true;
                pred_used[pi] = true;
                pairs.push((*gid, pid, d));
            }
        }
    }

    let free_g: Vec<usize> = (0..gts.len()).filter(|&i| !gt_used[i]).collect();
    let free_p: Vec<usize> = (0..preds.len()).filter(|&i| !pred_used[i]).collect();
    let mut m = ScoreMatrix::gated(free_g.len(), free_p.len());
    for (r, &gi) in free_g.iter().enumerate() {
        for (c, &pi) in free_p.iter().enumerate() {
            if let Some(d) = criterion.distance(&gts[gi].1, &preds[pi].bbox) {
                m.set(r, c, d);
            }
        }
    }
    let mut mismatches = 0;
    for (r, c) in match_hungarian(&m, false).pairs {
        let (gid, gb) = &gts[free_g[r as usize]];
        let pred = &preds[free_p[c]];
        gt_used[free_g[r as usize]] = true;
        pred_used[free_p[c]] = true;
        if last_id.get(gid).is_some_and(|&old| old != pred.id) {
            mismatches += 1;
        }
        let d = criterion.distance(gb, &pred.bbox).expect("matched pairs are within threshold");
        pairs.push((*gid, pred.id, d));
    }
    for &(gid, pid, _) in &pairs {
        last_id.insert(gid, pid);
    }
    pairs.sort_by_key(|p| p.0);
    FrameCorrespondence {
        pairs,
        misses: gt_used.iter().filter(|u| !**u).count(),
        false_positives: pred_used.iter().filter(|u| !**u).count(),
        mismatches,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearReport {
    /// Mean distance of matched pairs (lower is better).
    pub motp: f64,
    /// `1 − motp / max_distance` (higher is better).
    pub motp_normalized: f64,
    pub mota: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mt: f64,
    pub ml: f64,
    pub sum_d: f64,
    pub sum_c: usize,
    pub sum_m: usize,
    pub sum_fp: usize,
    pub sum_mme: usize,
    pub sum_g: usize,
    pub gt_tracks: usize,
}

impl ClearReport {
    /// Pools several evaluations: tallies add up, MT/ML are weighted by the
    /// number of ground-truth objects.
    pub fn combine(reports: &[ClearReport], criterion: &MatchCriterion) -> Option<ClearReport> {
        if reports.is_empty() {
            return None;
        }
        let sum = |f: fn(&ClearReport) -> usize| reports.iter().map(f).sum::<usize>();
        let (c, m, fp, mme, g, n) =
            (sum(|r| r.sum_c), sum(|r| r.sum_m), sum(|r| r.sum_fp), sum(|r| r.sum_mme), sum(|r| r.sum_g), sum(|r| r.gt_tracks));
        let d: f64 = reports.iter().map(|r| r.sum_d).sum();
        let motp = if c > 0 { d / c as f64 } else { 0.0 };
        let precision = if c + fp > 0 { c as f64 / (c + fp) as f64 } else { 0.0 };
        let recall = if g > 0 { c as f64 / g as f64 } else { 0.0 };
        let weighted = |f: fn(&ClearReport) -> f64| {
            reports.iter().map(|r| f(r) * r.gt_tracks as f64).sum::<f64>() / n.max(1) as f64
        };
        Some(ClearReport {
            motp,
            motp_normalized: if c > 0 { 1.0 - motp / criterion.max_distance() } else { 0.0 },
            mota: if g > 0 { 1.0 - (m + fp + mme) as f64 / g as f64 } else { 0.0 },
            precision,
            recall,
            f1: if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 },
            mt: weighted(|r| r.mt),
            ml: weighted(|r| r.ml),
            sum_d: d,
            sum_c: c,
            sum_m: m,
            sum_fp: fp,
            sum_mme: mme,
            sum_g: g,
            gt_tracks: n,
        })
    }
}

/// CLEAR evaluation of per-frame predictions against ground truth.
pub fn clear(preds: &[(i64, Vec<PredObs>)], gt: &[GtTrack], criterion: &MatchCriterion) -> Result<ClearReport> {
    let mut frames: Vec<i64> = preds.iter().map(|p| p.0).collect();
    frames.extend(gt.iter().flat_map(|g| g.obs.iter().map(|o| o.frame)));
    frames.sort_unstable();
    frames.dedup();
    let by_frame: HashMap<i64, &Vec<PredObs>> = preds.iter().map(|(f, p)| (*f, p)).collect();
    let empty = Vec::new();

    let mut last_id = HashMap::new();
    let (mut sum_d, mut sum_c, mut sum_m, mut sum_fp, mut sum_mme, mut sum_g) = (0.0, 0, 0, 0, 0, 0);
    // per GT object: frames alive, frames matched per predicted id
    let mut life: BTreeMap<i64, usize> = BTreeMap::new();
    let mut covered: BTreeMap<i64, BTreeMap<u64, usize>> = BTreeMap::new();
    for &f in &frames {
        let gts: Vec<(i64, BBox)> = gt.iter().filter_map(|g| g.at(f).map(|b| (g.id, *b))).collect();
        let p = by_frame.get(&f).copied().unwrap_or(&empty);
        let corr = match_frame_gt(p, &gts, criterion, &mut last_id);
        for (gid, _) in &gts {
            *life.entry(*gid).or_default() += 1;
        }
        for &(gid, pid, d) in &corr.pairs {
            sum_d += d;
            *covered.entry(gid).or_default().entry(pid).or_default() += 1;
        }
        sum_c += corr.pairs.len();
        sum_m += corr.misses;
        sum_fp += corr.false_positives;
        sum_mme += corr.mismatches;
        sum_g += gts.len();
    }
    if sum_g == 0 {
        return Err(Error::EmptyGroundTruth);
    }

    let motp = if sum_c > 0 { sum_d / sum_c as f64 } else { 0.0 };
    let precision = if sum_c + sum_fp > 0 { sum_c as f64 / (sum_c + sum_fp) as f64 } else { 0.0 };
    let recall = sum_c as f64 / sum_g as f64;
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    let (mut mt, mut ml) = (0usize, 0usize);
    for (gid, &n) in &life {
        let per_id = covered.get(gid);
        let best = per_id.and_then(|m| m.values().max().copied()).unwrap_or(0);
        let any: usize = per_id.map_or(0, |m| m.values().sum());
        if best as f64 >= 0.8 * n as f64 {
            mt += 1;
        }
        if any as f64 <= 0.2 * n as f64 {
            ml += 1;
        }
    }
    let tracks = life.len() as f64;
    Ok(ClearReport {
        motp,
        motp_normalized: if sum_c > 0 { 1.0 - motp / criterion.max_distance() } else { 0.0 },
        mota: 1.0 - (sum_m + sum_fp + sum_mme) as f64 / sum_g as f64,
        precision,
        recall,
        f1,
        mt: mt as f64 / tracks,
        ml: ml as f64 / tracks,
        sum_d,
        sum_c,
        sum_m,
        sum_fp,
        sum_mme,
        sum_g,
        gt_tracks: life.len(),
    })
}

/// Perceived centers of one track id across a run.
pub fn perceived_trajectory(results: &[FrameResult], track_id: u64) -> Vec<(i64, Vec<f64>)> {
    results
        .iter()
        .filter_map(|r| r.track(track_id).map(|t| (r.frame, t.center.clone())))
        .collect()
}

/// Max and mean of `|(perceived − gt) · axis|` over the frames both exist.
pub fn false_deviation(perceived: &[(i64, Vec<f64>)], gt: &GtTrack, axis: &[f64]) -> Result<(f64, f64)> {
    let devs: Vec<f64> = perceived
        .iter()
        .filter_map(|(f, c)| {
            gt.center_at(*f)
                .map(|g| c.iter().zip(&g).zip(axis).map(|((p, g), a)| (p - g) * a).sum::<f64>().abs())
        })
        .collect();
    if devs.is_empty() {
        return Err(Error::NoOverlap);
    }
    let max = devs.iter().copied().fold(0.0, f64::max);
    Ok((max, devs.iter().sum::<f64>() / devs.len() as f64))
}

/// Frames of the target's life in which `track_id` is unmatched, counting
/// from its first appearance. Frames after the track is gone count too.
fn unmatched_frames(results: &[FrameResult], gt: &GtTrack, track_id: u64) -> Option<i64> {
    let first = results.iter().find(|r| r.track(track_id).is_some())?.frame;
    let by_frame: HashMap<i64, &FrameResult> = results.iter().map(|r| (r.frame, r)).collect();
    let n = gt
        .obs
        .iter()
        .filter(|o| o.frame > first)
        .filter(|o| match by_frame.get(&o.frame).and_then(|r| r.track(track_id)) {
            Some(t) => !t.matched,
            None => true,
        })
        .count();
    Some(n as i64)
}

/// Extra unmatched frames of the target track caused by the attack.
pub fn lost_frames(
    attacked: &[FrameResult],
    attacked_id: u64,
    baseline: &[FrameResult],
    baseline_id: u64,
    gt: &GtTrack,
) -> Result<i64> {
    let a = unmatched_frames(attacked, gt, attacked_id).ok_or(Error::NoTarget)?;
    let b = unmatched_frames(baseline, gt, baseline_id).ok_or(Error::NoTarget)?;
    Ok(a - b)
}

/// Minimum perceived deviation (meters) for each unsafe outcome.
pub const SAFETY_THRESHOLDS: [(&str, f64); 4] = [
    ("off-road-local", 0.895),
    ("off-road-highway", 1.945),
    ("wrong-way-local", 2.405),
    ("wrong-way-highway", 2.855),
];

/// `true` marks a breached scenario.
pub fn safety_verdicts(fd_max: f64, units: Units) -> Result<BTreeMap<String, bool>> {
    if units != Units::Meters {
        return Err(Error::UnitsMismatch);
    }
    Ok(SAFETY_THRESHOLDS.iter().map(|(k, t)| (k.to_string(), fd_max > *t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvReport {
    pub fd_max: f64,
    pub fd_avg: f64,
    pub lf_max: f64,
    pub lf_avg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<BTreeMap<String, bool>>,
}

impl AdvReport {
    /// Aggregates per-trace `(fd_max, fd_avg, lf)` rows.
    pub fn aggregate(rows: &[(f64, f64, i64)], units: Units) -> Option<Self> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let fd_max = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        Some(Self {
            fd_max,
            fd_avg: rows.iter().map(|r| r.1).sum::<f64>() / n,
            lf_max: rows.iter().map(|r| r.2 as f64).fold(f64::NEG_INFINITY, f64::max),
            lf_avg: rows.iter().map(|r| r.2 as f64).sum::<f64>() / n,
            verdicts: safety_verdicts(fd_max, units).ok(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox2D, BBox3D};
    use approx::assert_abs_diff_eq;

    fn b3(x: f64, y: f64) -> BBox {
        BBox::D3(BBox3D::new([x, y, 0.0], 4.0, 1.7, 1.5, 0.0))
    }

    fn gt_track(id: i64, pts: &[(i64, f64, f64)]) -> GtTrack {
        GtTrack { id, class: "Car".into(), obs: pts.iter().map(|&(f, x, y)| GtObs { frame: f, bbox: b3(x, y) }).collect() }
    }

    fn pred(id: u64, x: f64, y: f64) -> PredObs {
        PredObs { id, bbox: b3(x, y) }
    }

    fn crit() -> MatchCriterion {
        MatchCriterion::CenterDistance(1.0)
    }

    #[test]
    fn identical_sets_correspond_perfectly() {
        let mut last = HashMap::new();
        let c = match_frame_gt(&[pred(0, 0.0, 0.0), pred(1, 10.0, 0.0)], &[(5, b3(0.0, 0.0)), (6, b3(10.0, 0.0))], &crit(), &mut last);
        assert_eq!(c.pairs, vec![(5, 0, 0.0), (6, 1, 0.0)]);
        assert_eq!((c.misses, c.false_positives, c.mismatches), (0, 0, 0));
        let c = match_frame_gt(&[], &[(5, b3(0.0, 0.0))], &crit(), &mut HashMap::new());
        assert_eq!(c.misses, 1);
    }

    #[test]
    fn perfect_tracking_scores_one() {
        let gt = vec![gt_track(1, &[(0, 0.0, 0.0), (1, 1.0, 0.0)]), gt_track(2, &[(0, 0.0, 5.0), (1, 1.0, 5.0)])];
        let preds = vec![
            (0, vec![pred(0, 0.0, 0.0), pred(1, 0.0, 5.0)]),
            (1, vec![pred(0, 1.0, 0.0), pred(1, 1.0, 5.0)]),
        ];
        let r = clear(&preds, &gt, &crit()).unwrap();
        assert_eq!((r.mota, r.mt, r.ml, r.precision, r.recall, r.f1), (1.0, 1.0, 0.0, 1.0, 1.0, 1.0));
        assert_eq!(r.motp, 0.0);
    }

    /// Three frames, two objects; tallies worked out by hand:
    /// frame 0: both matched at distances 0.5 and 0.0;
    /// frame 1: object 1 missed, a false positive far away, object 2 at 0.25;
    /// frame 2: object 1 picked up by a new id (one mismatch), object 2 at 0.25.
    #[test]
    fn hand_computed_three_frame_scenario() {
        let gt = vec![
            gt_track(1, &[(0, 0.0, 0.0), (1, 1.0, 0.0), (2, 2.0, 0.0)]),
            gt_track(2, &[(0, 0.0, 5.0), (1, 1.0, 5.0), (2, 2.0, 5.0)]),
        ];
        let preds = vec![
            (0, vec![pred(10, 0.5, 0.0), pred(20, 0.0, 5.0)]),
            (1, vec![pred(20, 1.25, 5.0), pred(30, 50.0, 50.0)]),
            (2, vec![pred(20, 2.25, 5.0), pred(40, 2.0, 0.0)]),
        ];
        let r = clear(&preds, &gt, &crit()).unwrap();
        assert_eq!((r.sum_c, r.sum_m, r.sum_fp, r.sum_mme, r.sum_g), (5, 1, 1, 1, 6));
        assert_abs_diff_eq!(r.sum_d, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.motp, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mota, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.precision, 5.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.recall, 5.0 / 6.0, epsilon = 1e-12);
        // object 1 is best covered by one id in 1 of 3 frames, object 2 in 3 of 3
        assert_eq!((r.mt, r.ml), (0.5, 0.0));
    }

    #[test]
    fn mostly_lost_counts_barely_seen_objects() {
        let gt = vec![gt_track(1, &(0..5).map(|f| (f, f as f64, 0.0)).collect::<Vec<_>>())];
        let preds: Vec<(i64, Vec<PredObs>)> =
            (0..5).map(|f| (f, if f == 0 { vec![pred(0, 0.0, 0.0)] } else { vec![] })).collect();
        let r = clear(&preds, &gt, &crit()).unwrap();
        assert_eq!((r.mt, r.ml), (0.0, 1.0));
        assert_abs_diff_eq!(r.mota, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn id_swap_counts_two_mismatches() {
        // two objects exchange lanes; the predicted ids stay on their lanes
        let gt = vec![
            gt_track(1, &[(0, 0.0, 0.0), (1, 1.0, 0.0), (2, 2.0, 3.0)]),
            gt_track(2, &[(0, 0.0, 3.0), (1, 1.0, 3.0), (2, 2.0, 0.0)]),
        ];
        let preds = vec![
            (0, vec![pred(0, 0.0, 0.0), pred(1, 0.0, 3.0)]),
            (1, vec![pred(0, 1.0, 0.0), pred(1, 1.0, 3.0)]),
            (2, vec![pred(0, 2.0, 0.0), pred(1, 2.0, 3.0)]),
        ];
        let r = clear(&preds, &gt, &crit()).unwrap();
        assert_eq!(r.sum_mme, 2);
        assert_abs_diff_eq!(r.mota, 1.0 - 2.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn mota_formula_example() {
        // g=10, m=1, fp=1: ten single-frame objects, one missed, one stray prediction
        let gt: Vec<GtTrack> = (0..10).map(|i| gt_track(i, &[(0, 10.0 * i as f64, 0.0)])).collect();
        let mut objs: Vec<PredObs> = (1..10).map(|i| pred(i as u64, 10.0 * i as f64, 0.0)).collect();
        objs.push(pred(99, 500.0, 500.0));
        let r = clear(&[(0, objs)], &gt, &crit()).unwrap();
        assert_abs_diff_eq!(r.mota, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn motp_is_mean_distance_and_2d_uses_overlap() {
        let crit2 = MatchCriterion::Iou(0.5);
        let a = BBox::D2(BBox2D::new(0.0, 0.0, 2.0, 2.0));
        let b = BBox::D2(BBox2D::new(0.0, 0.0, 2.0, 1.5));
        assert_abs_diff_eq!(crit2.distance(&a, &b).unwrap(), 0.25, epsilon = 1e-12);
        assert!(crit2.distance(&a, &BBox::D2(BBox2D::new(1.0, 1.0, 3.0, 3.0))).is_none());
        assert!(clear(&[], &[], &crit()).is_err());
    }

    #[test]
    fn false_deviation_examples() {
        let gt = gt_track(1, &[(0, 0.0, 0.0), (1, 1.0, 0.0), (2, 2.0, 0.0), (3, 3.0, 0.0)]);
        let exact: Vec<(i64, Vec<f64>)> = gt.obs.iter().map(|o| (o.frame, o.bbox.center().as_slice().to_vec())).collect();
        assert_eq!(false_deviation(&exact, &gt, &[0.0, 1.0, 0.0]).unwrap(), (0.0, 0.0));
        let off: Vec<(i64, Vec<f64>)> =
            [(0, 0.0), (1, 1.0), (2, -3.0), (3, 0.0)].iter().map(|&(f, dy)| (f, vec![f as f64, dy, 0.0])).collect();
        assert_eq!(false_deviation(&off, &gt, &[0.0, 1.0, 0.0]).unwrap(), (3.0, 1.0));
        assert_eq!(false_deviation(&[(9, vec![0.0; 3])], &gt, &[0.0, 1.0, 0.0]), Err(Error::NoOverlap));
    }

    #[test]
    fn safety_verdict_examples() {
        let all = |m: &BTreeMap<String, bool>| m.values().filter(|b| **b).count();
        assert_eq!(all(&safety_verdicts(4.53, Units::Meters).unwrap()), 4);
        assert_eq!(all(&safety_verdicts(0.30, Units::Meters).unwrap()), 0);
        assert_eq!(all(&safety_verdicts(0.58, Units::Meters).unwrap()), 0);
        let v = safety_verdicts(2.0, Units::Meters).unwrap();
        assert!(v["off-road-local"] && v["off-road-highway"]);
        assert!(!v["wrong-way-local"] && !v["wrong-way-highway"]);
        assert_eq!(safety_verdicts(1.0, Units::Pixels), Err(Error::UnitsMismatch));
    }

    #[test]
    fn mota_weakly_decreases_with_injected_errors() {
        let gt: Vec<GtTrack> = (0..3).map(|i| gt_track(i, &(0..6).map(|f| (f, f as f64, 4.0 * i as f64)).collect::<Vec<_>>())).collect();
        let mut preds: Vec<(i64, Vec<PredObs>)> = (0..6)
            .map(|f| (f, (0..3).map(|i| pred(i as u64, f as f64, 4.0 * i as f64)).collect()))
            .collect();
        let mut last = clear(&preds, &gt, &crit()).unwrap().mota;
        for f in 0..6 {
            preds[f].1.pop();
            preds[f].1.push(pred(100 + f as u64, 90.0, 90.0));
            let m = clear(&preds, &gt, &crit()).unwrap().mota;
            assert!(m <= last);
            last = m;
        }
    }

    #[test]
    fn motp_invariant_to_relabeling() {
        let gt = vec![gt_track(1, &[(0, 0.0, 0.0), (1, 1.0, 0.0)])];
        let a = vec![(0, vec![pred(0, 0.3, 0.0)]), (1, vec![pred(0, 1.2, 0.0)])];
        let b = vec![(0, vec![pred(7, 0.3, 0.0)]), (1, vec![pred(9, 1.2, 0.0)])];
        assert_eq!(clear(&a, &gt, &crit()).unwrap().motp, clear(&b, &gt, &crit()).unwrap().motp);
    }
}
