//! Cross-module behavior: files through the tracker, attack plans through
//! the perturbation path, and tracker invariants under random input.

use proptest::prelude::*;
use std::collections::HashSet;
use trackpatch::association::Detection;
use trackpatch::attack::{apply_plan, generalized_plan, AttackOp, AttackPlan, Layout};
use trackpatch::defense::DefenseConfig;
use trackpatch::geometry::{BBox, BBox2D, BBox3D, Dims};
use trackpatch::kitti;
use trackpatch::metrics::{clear, false_deviation, predictions_from, MatchCriterion};
use trackpatch::synth::{synth, SynthSpec};
use trackpatch::tracker::{run_trace, Profile, TrackerConfig};

fn sample(name: &str) -> kitti::Trace {
    let path = format!("{}/tests/data/kitti/{name}", env!("CARGO_MANIFEST_DIR"));
    kitti::parse(&std::fs::read_to_string(path).unwrap(), &["Car", "Van", "Pedestrian", "Cyclist", "Truck"]).unwrap()
}

#[test]
fn labels_fed_as_detections_track_cleanly() {
    for (profile, dims) in [(Profile::Ab3dmot, Dims::Three), (Profile::Jia2d, Dims::Two)] {
        for name in ["0000.txt", "0001.txt"] {
            let t = sample(name);
            let out = run_trace(&TrackerConfig::profile(profile), &t.frames(dims)).unwrap();
            let rep = clear(&predictions_from(&out, true), &t.ground_truth(dims), &MatchCriterion::default_for(dims)).unwrap();
            // Coasting tracks of departed objects are the only error source.
            assert_eq!((rep.sum_m, rep.sum_mme), (0, 0), "{profile:?} {name}: {rep:?}");
            assert!(rep.mota > 0.75, "{profile:?} {name}: {rep:?}");
        }
    }
}

#[test]
fn frame_gaps_are_predicted_through() {
    let t = sample("0000.txt");
    let frames = t.frames(Dims::Three);
    assert!(frames[9].is_empty());
    let out = run_trace(&TrackerConfig::profile(Profile::Apollo3d), &frames).unwrap();
    let survivors: HashSet<u64> = out[8].confirmed().filter(|s| s.matched).map(|s| s.id).collect();
    let after: HashSet<u64> = out[10].confirmed().filter(|s| s.matched).map(|s| s.id).collect();
    assert!(!survivors.is_empty() && survivors.is_subset(&after), "{survivors:?} {after:?}");
}

#[test]
fn plan_survives_json_and_applies_to_file_data() {
    let t = sample("0000.txt");
    let gt = t.ground_truth(Dims::Three);
    let target = gt.iter().find(|g| g.id == 0).unwrap();
    let plan = AttackPlan {
        schedule: vec![
            trackpatch::attack::ScheduledOp { frame: 5, op: AttackOp::Shift { offset: vec![0.0, 0.8, 0.0] } },
            trackpatch::attack::ScheduledOp { frame: 6, op: AttackOp::Hide },
        ],
        ..AttackPlan::empty(0, vec![0.0, 1.0, 0.0])
    };
    let back = AttackPlan::from_json(&plan.to_json()).unwrap();
    assert_eq!(back, plan);
    let frames = t.frames(Dims::Three);
    let p = apply_plan(&frames, target, &back).unwrap();
    assert_eq!(p.frames[6].len(), frames[6].len() - 1);
    let moved: Vec<_> = p.frames[5].iter().zip(&frames[5]).filter(|(a, b)| a != b).collect();
    assert_eq!(moved.len(), 1);
    assert!((moved[0].0.bbox.center()[1] - moved[0].1.bbox.center()[1] - 0.8).abs() < 1e-12);
}

#[test]
fn generalized_attack_hurts_less_with_the_patch() {
    let spec = SynthSpec::highway(3, 200, 0.1, (1.0, 1.5), 11);
    let t = synth(&spec).unwrap();
    let gt = t.ground_truth(Dims::Three);
    let target = &gt[2];
    let plan = generalized_plan(target.id, 200, 0.005, 0.025, 0.1, 1.5, &[0.0, 1.0, 0.0], Layout::Optimal).unwrap();
    let attacked = apply_plan(&t.frames(Dims::Three), target, &plan).unwrap().frames;
    let fd = |defense: Option<DefenseConfig>| {
        let cfg = TrackerConfig::profile(Profile::Apollo3d).with_defense(defense);
        let out = run_trace(&cfg, &attacked).unwrap();
        let id = out[150].matching.track_of(2).unwrap();
        let perceived = trackpatch::metrics::perceived_trajectory(&out, id);
        false_deviation(&perceived, target, &[0.0, 1.0, 0.0]).unwrap().0
    };
    let (off, on) = (fd(None), fd(Some(DefenseConfig::default())));
    assert!(on < off, "defended {on} vs undefended {off}");
}

fn arb_frames(dims: Dims) -> impl Strategy<Value = Vec<Vec<Detection>>> {
    let det = move |(x, y, s): (f64, f64, f64)| match dims {
        Dims::Two => Detection::new(BBox::D2(BBox2D::from_center(x * 40.0, y * 40.0, 20.0 * s, 15.0 * s))),
        Dims::Three => Detection::new(BBox::D3(BBox3D::new([x, y, 0.0], 4.0 * s, 1.7 * s, 1.5, 0.0))),
    };
    proptest::collection::vec(
        proptest::collection::vec((0.0..30.0f64, 0.0..12.0f64, 0.8..1.2f64).prop_map(det), 0..6),
        1..25,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tracker_bookkeeping_invariants(
        frames in prop_oneof![arb_frames(Dims::Two), arb_frames(Dims::Three)],
        defended in any::<bool>(),
        profile_ix in 0usize..4,
    ) {
        let dims = frames.iter().flatten().next().map_or(Dims::Three, |d| d.bbox.dims());
        let profile = Profile::ALL.into_iter().filter(|p| p.dims() == dims).nth(profile_ix % 2).unwrap();
        let cfg = TrackerConfig::profile(profile).with_defense(defended.then(DefenseConfig::default));
        let out = run_trace(&cfg, &frames).unwrap();
        let mut confirmed_ever = HashSet::new();
        let mut seen = HashSet::new();
        for (r, dets) in out.iter().zip(&frames) {
            let ids: HashSet<u64> = r.tracks.iter().map(|t| t.id).collect();
            prop_assert_eq!(ids.len(), r.tracks.len());
            for b in &r.born {
                prop_assert!(seen.insert(*b), "id {} reused", b);
            }
            let used: HashSet<usize> = r.matching.pairs.iter().map(|p| p.1).collect();
            prop_assert_eq!(used.len(), r.matching.pairs.len());
            prop_assert!(used.iter().all(|d| *d < dets.len()));
            for t in &r.tracks {
                prop_assert!(t.misses <= cfg.reserved_age);
                prop_assert_eq!(t.matched, t.misses == 0);
                if confirmed_ever.contains(&t.id) {
                    prop_assert!(t.confirmed);
                }
                if t.confirmed {
                    confirmed_ever.insert(t.id);
                }
            }
            prop_assert_eq!(r.defense.is_some(), defended);
            if let Some(d) = &r.defense {
                prop_assert!(d.buffer_len <= 200 * dims.n());
            }
        }
    }
}
