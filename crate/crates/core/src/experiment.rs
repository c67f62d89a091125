//! Experiment runner: one TOML document drives tracking, evaluation,
//! attack/defense comparison, ablation, the Monte-Carlo study and timing.
//!
//! Traces and defense variants fan out over rayon; results are collected in
//! input order so every artifact except wall-clock fields is reproducible
//! from `(config, seed)`.

use crate::association::{Apollo2dParams, Apollo3dParams, Detection};
use crate::attack::{
    apply_plan, default_direction, extent_along, poc_two_phase, target_detection, AttackOp, AttackPlan, Layout,
    PocParams, ScheduledOp,
};
use crate::defense::{DefenseConfig, DefenseMode};
use crate::error::{Error, Result};
use crate::geometry::Dims;
use crate::kitti::{self, Trace};
use crate::metrics::{
    clear, false_deviation, lost_frames, perceived_trajectory, predictions_from, safety_verdicts, AdvReport,
    ClearReport, GtTrack, MatchCriterion, Units,
};
use crate::rng::derive_seed;
use crate::synth::{synth, SynthSpec};
use crate::theory::{self, GrowthFit, LayoutSweep, SimConfig, SimReport};
use crate::tracker::{run_trace, FrameResult, Profile, TrackerConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Reference configuration with every default spelled out.
pub const REFERENCE_CONFIG: &str = include_str!("reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub profile: Profile,
    /// `off`, `on` (the full design) or an ablation mode name.
    pub defense: String,
    pub defense_params: DefenseConfig,
    pub tracker: TrackerOverrides,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub evaluate: EvaluateConfig,
    pub attack: AttackConfig,
    pub ablate: AblateConfig,
    pub theory: TheoryConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            profile: Profile::Apollo3d,
            defense: "on".into(),
            defense_params: DefenseConfig::default(),
            tracker: TrackerOverrides::default(),
            input: InputConfig::default(),
            output: OutputConfig::default(),
            evaluate: EvaluateConfig::default(),
            attack: AttackConfig::default(),
            ablate: AblateConfig::default(),
            theory: TheoryConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// Tracker settings; unset keys keep the profile's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reserved_age: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_gate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub apollo2d: Apollo2dParams,
    pub apollo3d: Apollo3dParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Synth,
    Kitti,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub kind: InputKind,
    pub kitti_dir: PathBuf,
    pub classes: Vec<String>,
    pub synth: SynthInput,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { kind: InputKind::Synth, kitti_dir: PathBuf::new(), classes: vec!["Car".into()], synth: SynthInput::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthInput {
    pub traces: usize,
    pub lanes: usize,
    pub frames: usize,
    pub noise_sigma_m: f64,
    pub noise_sigma_px: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for SynthInput {
    fn default() -> Self {
        Self { traces: 10, lanes: 3, frames: 300, noise_sigma_m: 0.2, noise_sigma_px: 1.0, speed_min: 0.8, speed_max: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub backfill: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { backfill: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_frame: Option<i64>,
    pub hide_frames: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_hi: Option<f64>,
    pub iters: u32,
    pub poison: PoisonConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            target: None,
            attack_frame: None,
            hide_frames: 5,
            lambda: None,
            lambda_hi: None,
            iters: 20,
            poison: PoisonConfig::default(),
        }
    }
}

/// Alternating sideways shifts of the target before the attack, meant to
/// fill the deviation buffer with outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoisonConfig {
    pub enabled: bool,
    pub start_frame: i64,
    pub every: usize,
    /// In box extents along the attack direction.
    pub scale: f64,
}

impl Default for PoisonConfig {
    fn default() -> Self {
        Self { enabled: false, start_frame: 10, every: 6, scale: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub alphas: Vec<f64>,
    pub modes: Vec<String>,
    pub poison: bool,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.85, 0.9, 0.95, 0.99],
            modes: ["gaussian", "elimination", "outlier-unaware", "axis-unaware"].map(String::from).to_vec(),
            poison: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub batches: usize,
    pub growth_hide_frames: Vec<usize>,
    pub layouts: Vec<Layout>,
    pub sim: SimConfig,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            batches: 20,
            growth_hide_frames: vec![2, 4, 6, 8, 10, 12, 14, 16],
            layouts: vec![Layout::Optimal, Layout::Uniform, Layout::Random { seed: 1 }, Layout::HideFirst],
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { repeats: 3 }
    }
}

/// Parses a `--defense` style value.
pub fn parse_defense(s: &str) -> Result<Option<DefenseMode>> {
    match s {
        "off" => Ok(None),
        "on" => Ok(Some(DefenseMode::Full)),
        other => DefenseMode::parse(other)
            .map(Some)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown defense setting {other:?}"))),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML, leaving out
    /// the output directory.
    pub fn hash(&self) -> String {
        let canonical = Self { output: OutputConfig::default(), ..self.clone() };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        parse_defense(&self.defense)?;
        self.defense_params.validate()?;
        self.tracker_config(None).validate()?;
        if self.input.kind == InputKind::Synth {
            let s = &self.input.synth;
            if s.traces == 0 || s.lanes == 0 || s.frames < 2 {
                return bad("synth input needs traces, lanes >= 1 and frames >= 2".into());
            }
            if !(s.speed_min <= s.speed_max) {
                return bad("speed_min must not exceed speed_max".into());
            }
        }
        if self.attack.iters == 0 {
            return bad("attack.iters must be positive".into());
        }
        if self.attack.poison.every == 0 || !(self.attack.poison.scale > 0.0) {
            return bad("attack.poison needs every >= 1 and scale > 0".into());
        }
        for m in &self.ablate.modes {
            if DefenseMode::parse(m).is_none() {
                return bad(format!("unknown ablation mode {m:?}"));
            }
        }
        if self.ablate.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("ablate.alphas must lie in (0, 1)".into());
        }
        if self.bench.repeats == 0 {
            return bad("bench.repeats must be positive".into());
        }
        self.theory_sim().validate()
    }

    pub fn dims(&self) -> Dims {
        self.profile.dims()
    }

    pub fn units(&self) -> Units {
        Units::of(self.dims())
    }

    /// Defense used by `track`, `evaluate` and `bench`.
    pub fn defense_config(&self) -> Result<Option<DefenseConfig>> {
        Ok(parse_defense(&self.defense)?.map(|m| m.apply(self.defense_params)))
    }

    /// Defense for the defended arm of attack experiments: the configured
    /// mode, or the full design when the setting is `off`.
    pub fn attack_defense(&self) -> Result<DefenseConfig> {
        Ok(parse_defense(&self.defense)?.unwrap_or(DefenseMode::Full).apply(self.defense_params))
    }

    pub fn tracker_config(&self, defense: Option<DefenseConfig>) -> TrackerConfig {
        let mut t = TrackerConfig::profile(self.profile);
        let o = &self.tracker;
        if let Some(v) = o.hit_count {
            t.hit_count = v;
        }
        if let Some(v) = o.reserved_age {
            t.reserved_age = v;
        }
        if let Some(v) = o.iou_gate {
            t.iou_gate = v;
        }
        if let Some(v) = o.q {
            t.noise.q = v;
        }
        if let Some(v) = o.r {
            t.noise.r = v;
        }
        t.apollo2d = o.apollo2d;
        t.apollo3d = o.apollo3d;
        t.with_defense(defense)
    }

    pub fn theory_sim(&self) -> SimConfig {
        SimConfig { seed: self.seed, ..self.theory.sim.clone() }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTrace {
    pub name: String,
    pub trace: Trace,
}

/// Synthetic specs, or every `*.txt` file of the KITTI directory in name
/// order.
pub fn load_traces(cfg: &ExperimentConfig) -> Result<Vec<NamedTrace>> {
    match cfg.input.kind {
        InputKind::Synth => (0..cfg.input.synth.traces)
            .into_par_iter()
            .map(|i| {
                let trace = synth(&synth_spec(cfg, i))?;
                Ok(NamedTrace { name: format!("synth-{i:03}"), trace })
            })
            .collect(),
        InputKind::Kitti => {
            let dir = &cfg.input.kitti_dir;
            if dir.as_os_str().is_empty() {
                return Err(Error::InvalidConfig("input.kitti_dir is not set".into()));
            }
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| io_err(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Io(format!("{}: no .txt label files", dir.display())));
            }
            let classes: Vec<&str> = cfg.input.classes.iter().map(String::as_str).collect();
            files
                .par_iter()
                .map(|p| {
                    let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                    let trace = kitti::parse(&text, &classes).map_err(|e| io_err(p, e))?;
                    let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok(NamedTrace { name, trace })
                })
                .collect()
        }
    }
}

pub fn synth_spec(cfg: &ExperimentConfig, index: usize) -> SynthSpec {
    let s = &cfg.input.synth;
    let seed = derive_seed(cfg.seed, &format!("synth/{index}"));
    match cfg.dims() {
        Dims::Three => SynthSpec::highway(s.lanes, s.frames, s.noise_sigma_m, (s.speed_min, s.speed_max), seed),
        Dims::Two => SynthSpec::image_rows(s.lanes, s.frames, s.noise_sigma_px, seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub name: String,
    pub results: Vec<FrameResult>,
}

pub fn track(cfg: &ExperimentConfig, traces: &[NamedTrace]) -> Result<Vec<TrackRun>> {
    let tc = cfg.tracker_config(cfg.defense_config()?);
    traces
        .par_iter()
        .map(|t| Ok(TrackRun { name: t.name.clone(), results: run_trace(&tc, &t.trace.frames(cfg.dims()))? }))
        .collect()
}

/// `trace, frame, track_id, confirmed, matched, x, y[, z]`.
pub fn trajectories_csv(runs: &[TrackRun], dims: Dims) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["trace", "frame", "track_id", "confirmed", "matched", "x", "y"];
    if dims == Dims::Three {
        header.push("z");
    }
    w.write_record(&header).expect("in-memory write");
    for run in runs {
        for r in &run.results {
            for t in &r.tracks {
                let mut rec =
                    vec![run.name.clone(), r.frame.to_string(), t.id.to_string(), t.confirmed.to_string(), t.matched.to_string()];
                rec.extend(t.center.iter().map(|c| c.to_string()));
                w.write_record(&rec).expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Serialize)]
struct LogLine<'a> {
    trace: &'a str,
    #[serde(flatten)]
    result: &'a FrameResult,
}

/// One JSON object per frame and trace.
pub fn frame_log(runs: &[TrackRun]) -> String {
    let mut out = String::new();
    for run in runs {
        for r in &run.results {
            out.push_str(&serde_json::to_string(&LogLine { trace: &run.name, result: r }).expect("results serialize"));
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceClear {
    pub trace: String,
    pub report: ClearReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub criterion: MatchCriterion,
    pub traces: Vec<TraceClear>,
    pub aggregate: Option<ClearReport>,
}

pub fn evaluate_runs(cfg: &ExperimentConfig, traces: &[NamedTrace], runs: &[TrackRun]) -> Result<EvalReport> {
    let criterion = MatchCriterion::default_for(cfg.dims());
    let per: Vec<TraceClear> = traces
        .par_iter()
        .zip(runs)
        .map(|(t, run)| {
            let preds = predictions_from(&run.results, cfg.evaluate.backfill);
            let report = clear(&preds, &t.trace.ground_truth(cfg.dims()), &criterion)?;
            Ok(TraceClear { trace: t.name.clone(), report })
        })
        .collect::<Result<_>>()?;
    let all: Vec<ClearReport> = per.iter().map(|p| p.report.clone()).collect();
    Ok(EvalReport { config_hash: cfg.hash(), aggregate: ClearReport::combine(&all, &criterion), criterion, traces: per })
}

/// Clean and attacked inputs for one trace, shared by every defense arm.
#[derive(Debug, Clone)]
pub struct PreparedAttack {
    pub name: String,
    pub ground_truth: Vec<GtTrack>,
    pub target: GtTrack,
    pub v_atk: Vec<f64>,
    pub attack_frame: i64,
    pub clean: Vec<Vec<Detection>>,
    pub attacked: Vec<Vec<Detection>>,
    pub poison: Vec<ScheduledOp>,
    pub plan: AttackPlan,
}

/// Among objects present from the frame before the attack to the end of the
/// hide phase, the one lying farthest along its own attack direction.
fn auto_target(gt: &[GtTrack], f0: i64, hide: usize) -> Option<&GtTrack> {
    gt.iter()
        .filter(|g| (f0 - 1..=f0 + hide as i64).all(|f| g.at(f).is_some()))
        .map(|g| {
            let v = default_direction(g, f0);
            let c = g.center_at(f0).expect("checked present");
            (g, c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.id.cmp(&a.0.id)))
        .map(|(g, _)| g)
}

pub fn prepare_attack(cfg: &ExperimentConfig, trace: &NamedTrace, poison: bool) -> Result<PreparedAttack> {
    let dims = cfg.dims();
    let clean = trace.trace.frames(dims);
    let ground_truth = trace.trace.ground_truth(dims);
    let a = &cfg.attack;
    let f0 = a.attack_frame.unwrap_or(clean.len() as i64 / 2);
    if f0 < 1 || f0 as usize >= clean.len() {
        return Err(Error::InvalidConfig(format!("attack frame {f0} outside the trace")));
    }
    let target = match a.target {
        Some(id) => ground_truth.iter().find(|g| g.id == id).ok_or(Error::NoTarget)?,
        None => auto_target(&ground_truth, f0, a.hide_frames).ok_or(Error::NoTarget)?,
    }
    .clone();
    let v_atk = default_direction(&target, f0);
    let gt_box = target.at(f0).ok_or(Error::TargetAbsent { frame: f0 })?;

    let mut poison_ops = Vec::new();
    if poison {
        let size = a.poison.scale * extent_along(gt_box, &v_atk);
        let mut sign = 1.0;
        let mut f = a.poison.start_frame.max(0);
        while f < f0 - 1 {
            let present = target.at(f).is_some_and(|b| target_detection(&clean[f as usize], b).is_some());
            if present {
                let offset = v_atk.iter().map(|v| sign * size * v).collect();
                poison_ops.push(ScheduledOp { frame: f, op: AttackOp::Shift { offset } });
                sign = -sign;
            }
            f += a.poison.every as i64;
        }
    }
    let poisoned = if poison_ops.is_empty() {
        clean.clone()
    } else {
        let plan = AttackPlan { schedule: poison_ops.clone(), ..AttackPlan::empty(target.id, v_atk.clone()) };
        apply_plan(&clean, &target, &plan)?.frames
    };

    let (plan, attacked) = if a.enabled {
        let params = PocParams { attack_frame: f0, hide_frames: a.hide_frames, lambda_hi: a.lambda_hi, iters: a.iters, lambda: a.lambda };
        let (plan, perturbed) = poc_two_phase(&poisoned, &target, &v_atk, &cfg.tracker_config(None), &params)?;
        (plan, perturbed.frames)
    } else {
        (AttackPlan::empty(target.id, v_atk.clone()), poisoned)
    };
    Ok(PreparedAttack {
        name: trace.name.clone(),
        ground_truth,
        target,
        v_atk,
        attack_frame: f0,
        clean,
        attacked,
        poison: poison_ops,
        plan,
    })
}

/// Track that carries the target's detection in `frame`.
fn target_track(results: &[FrameResult], frames: &[Vec<Detection>], gt: &GtTrack, frame: i64) -> Result<u64> {
    let gt_box = gt.at(frame).ok_or(Error::TargetAbsent { frame })?;
    let idx = target_detection(&frames[frame as usize], gt_box).ok_or(Error::TargetAbsent { frame })?;
    results[frame as usize].matching.track_of(idx).ok_or(Error::TargetNotTracked { frame })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub frame: i64,
    /// Ground-truth and perceived positions along the attack direction.
    pub gt: Option<f64>,
    pub perceived: Option<f64>,
    /// `shift`, `hide`, `poison` or empty.
    pub op: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub arm: String,
    pub fd_max: f64,
    pub fd_avg: f64,
    pub lf: i64,
    /// Clean-trace CLEAR scores of this arm.
    pub mota: f64,
    pub f1: f64,
    pub clean: ClearReport,
    /// Frames of the attacked run in which the patch clipped something.
    pub clipped_frames: usize,
    #[serde(skip)]
    pub plot: Vec<PlotRow>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn run_arm(cfg: &ExperimentConfig, p: &PreparedAttack, arm: &str, defense: Option<DefenseConfig>) -> Result<ArmOutcome> {
    let tc = cfg.tracker_config(defense);
    let attacked = run_trace(&tc, &p.attacked)?;
    let baseline = run_trace(&tc, &p.clean)?;
    let reference = p.attack_frame - 1;
    let id_a = target_track(&attacked, &p.attacked, &p.target, reference)?;
    let id_b = target_track(&baseline, &p.clean, &p.target, reference)?;
    let perceived = perceived_trajectory(&attacked, id_a);
    let (fd_max, fd_avg) = false_deviation(&perceived, &p.target, &p.v_atk)?;
    let lf = lost_frames(&attacked, id_a, &baseline, id_b, &p.target)?;
    let clean = clear(&predictions_from(&baseline, cfg.evaluate.backfill), &p.ground_truth, &MatchCriterion::default_for(cfg.dims()))?;

    let seen: BTreeMap<i64, &Vec<f64>> = perceived.iter().map(|(f, c)| (*f, c)).collect();
    let mut ops: BTreeMap<i64, &str> = p.poison.iter().map(|s| (s.frame, "poison")).collect();
    for s in &p.plan.schedule {
        ops.insert(s.frame, if matches!(s.op, AttackOp::Hide) { "hide" } else { "shift" });
    }
    let plot = (0..p.clean.len() as i64)
        .map(|f| PlotRow {
            frame: f,
            gt: p.target.center_at(f).map(|c| dot(c.as_slice(), &p.v_atk)),
            perceived: seen.get(&f).map(|c| dot(c, &p.v_atk)),
            op: ops.get(&f).copied().unwrap_or("").to_string(),
        })
        .collect();
    Ok(ArmOutcome {
        arm: arm.to_string(),
        fd_max,
        fd_avg,
        lf,
        mota: clean.mota,
        f1: clean.f1,
        clean,
        clipped_frames: attacked.iter().filter(|r| r.defense.as_ref().is_some_and(|d| d.clipped > 0)).count(),
        plot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAttack {
    pub trace: String,
    pub target: i64,
    pub attack_frame: i64,
    pub lambda: f64,
    pub v_atk: Vec<f64>,
    pub poison_frames: Vec<i64>,
    pub plan: AttackPlan,
    pub arms: Vec<ArmOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub trace: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub adv: AdvReport,
    pub clean: Option<ClearReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub config_hash: String,
    pub units: Units,
    pub traces: Vec<TraceAttack>,
    pub aggregate: Vec<ArmSummary>,
    pub skipped: Vec<Skipped>,
}

impl AttackReport {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.aggregate.iter().find(|a| a.arm == name)
    }
}

/// Runs every arm on every trace. Traces whose attack cannot be set up are
/// listed in `skipped` instead of failing the whole experiment.
pub fn run_arms(
    cfg: &ExperimentConfig,
    traces: &[NamedTrace],
    arms: &[(String, Option<DefenseConfig>)],
    poison: bool,
) -> Result<AttackReport> {
    let outcomes: Vec<std::result::Result<TraceAttack, Skipped>> = traces
        .par_iter()
        .map(|t| {
            let skip = |e: Error| Skipped { trace: t.name.clone(), reason: e.to_string() };
            let p = prepare_attack(cfg, t, poison).map_err(skip)?;
            let arms: Vec<ArmOutcome> = arms
                .par_iter()
                .map(|(name, d)| run_arm(cfg, &p, name, *d))
                .collect::<Result<_>>()
                .map_err(skip)?;
            Ok(TraceAttack {
                trace: p.name.clone(),
                target: p.target.id,
                attack_frame: p.attack_frame,
                lambda: p.plan.lambda,
                v_atk: p.v_atk.clone(),
                poison_frames: p.poison.iter().map(|s| s.frame).collect(),
                plan: p.plan,
                arms,
            })
        })
        .collect();
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(t) => done.push(t),
            Err(s) => skipped.push(s),
        }
    }
    let units = cfg.units();
    let criterion = MatchCriterion::default_for(cfg.dims());
    let aggregate = arms
        .iter()
        .enumerate()
        .filter_map(|(i, (name, _))| {
            let rows: Vec<(f64, f64, i64)> = done.iter().map(|t| (t.arms[i].fd_max, t.arms[i].fd_avg, t.arms[i].lf)).collect();
            let cleans: Vec<ClearReport> = done.iter().map(|t| t.arms[i].clean.clone()).collect();
            AdvReport::aggregate(&rows, units).map(|adv| ArmSummary {
                arm: name.clone(),
                adv,
                clean: ClearReport::combine(&cleans, &criterion),
            })
        })
        .collect();
    Ok(AttackReport { config_hash: cfg.hash(), units, traces: done, aggregate, skipped })
}

pub const UNDEFENDED: &str = "undefended";
pub const DEFENDED: &str = "defended";

/// Attacked and clean runs with and without the patch.
pub fn attack_eval(cfg: &ExperimentConfig, traces: &[NamedTrace]) -> Result<AttackReport> {
    let arms = vec![(UNDEFENDED.to_string(), None), (DEFENDED.to_string(), Some(cfg.attack_defense()?))];
    run_arms(cfg, traces, &arms, cfg.attack.poison.enabled)
}

/// Arm names and configs of the ablation table: no defense, each listed
/// mode at the configured quantile, and the full design at each quantile.
pub fn ablation_arms(cfg: &ExperimentConfig) -> Vec<(String, Option<DefenseConfig>)> {
    let base = cfg.defense_params;
    let mut arms = vec![("off".to_string(), None)];
    for m in &cfg.ablate.modes {
        let mode = DefenseMode::parse(m).expect("validated");
        arms.push((mode.name().to_string(), Some(mode.apply(base))));
    }
    for a in &cfg.ablate.alphas {
        arms.push((format!("full@{a}"), Some(DefenseConfig { alpha_max: *a, ..base })));
    }
    arms
}

pub fn ablate(cfg: &ExperimentConfig, traces: &[NamedTrace]) -> Result<AttackReport> {
    run_arms(cfg, traces, &ablation_arms(cfg), cfg.ablate.poison)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config_hash: String,
    pub reports: Vec<SimReport>,
    pub sweep: LayoutSweep,
    pub growth: GrowthFit,
}

pub fn run_theory(cfg: &ExperimentConfig) -> Result<TheoryReport> {
    let sim = cfg.theory_sim();
    let reports = cfg
        .theory
        .layouts
        .iter()
        .map(|l| theory::simulate(&SimConfig { layout: *l, ..sim.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let sweep = theory::layout_sweep(&sim, &cfg.theory.layouts, cfg.theory.batches)?;
    let growth = theory::growth_fit(&sim, &cfg.theory.growth_hide_frames)?;
    Ok(TheoryReport { config_hash: cfg.hash(), reports, sweep, growth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub trace: String,
    pub defense: String,
    pub frames: usize,
    pub seconds: f64,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config_hash: String,
    pub rows: Vec<BenchRow>,
}

/// Best-of-`repeats` wall time per trace, defense off and on. Runs
/// sequentially so timings do not compete for cores.
pub fn bench(cfg: &ExperimentConfig, traces: &[NamedTrace]) -> Result<BenchReport> {
    let settings = [("off".to_string(), None), ("on".to_string(), Some(cfg.attack_defense()?))];
    let mut rows = Vec::new();
    for t in traces {
        let frames = t.trace.frames(cfg.dims());
        for (label, d) in &settings {
            let tc = cfg.tracker_config(*d);
            let mut best = f64::INFINITY;
            for _ in 0..cfg.bench.repeats {
                let start = Instant::now();
                std::hint::black_box(run_trace(&tc, &frames)?);
                best = best.min(start.elapsed().as_secs_f64());
            }
            let fps = if best > 0.0 { frames.len() as f64 / best } else { f64::INFINITY };
            rows.push(BenchRow { trace: t.name.clone(), defense: label.clone(), frames: frames.len(), seconds: best, fps });
        }
    }
    Ok(BenchReport { config_hash: cfg.hash(), rows })
}

/// Writes named artifacts plus `config.toml` and a `manifest.json` listing
/// them with the config hash.
pub fn write_artifacts(cfg: &ExperimentConfig, command: &str, dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        written.push(path);
        Ok(())
    };
    for (name, body) in files {
        put(name, body)?;
    }
    put("config.toml", &cfg.to_toml())?;
    let manifest = serde_json::json!({
        "command": command,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "profile": cfg.profile.name(),
        "files": files.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
    });
    put("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"))?;
    Ok(written)
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

fn csv_text<R: Serialize>(rows: impl IntoIterator<Item = R>, header: Option<&[&str]>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(header.is_none()).from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn eval_csv(rep: &EvalReport) -> String {
    let header = ["trace", "mota", "motp", "precision", "recall", "f1", "mt", "ml", "fp", "misses", "mme", "gt"];
    let row = |name: &str, r: &ClearReport| {
        (name.to_string(), r.mota, r.motp, r.precision, r.recall, r.f1, r.mt, r.ml, r.sum_fp, r.sum_m, r.sum_mme, r.sum_g)
    };
    let mut rows: Vec<_> = rep.traces.iter().map(|t| row(&t.trace, &t.report)).collect();
    if let Some(a) = &rep.aggregate {
        rows.push(row("all", a));
    }
    csv_text(rows, Some(&header))
}

/// One row per trace and arm.
pub fn attack_csv(rep: &AttackReport) -> String {
    let header = ["trace", "arm", "target", "lambda", "fd_max", "fd_avg", "lf", "mota", "f1", "clipped_frames"];
    let rows = rep.traces.iter().flat_map(|t| {
        t.arms.iter().map(move |a| {
            (t.trace.clone(), a.arm.clone(), t.target, t.plan.lambda, a.fd_max, a.fd_avg, a.lf, a.mota, a.f1, a.clipped_frames)
        })
    });
    csv_text(rows, Some(&header))
}

/// Aggregate table: one row per arm.
pub fn summary_csv(rep: &AttackReport) -> String {
    let header = ["arm", "mota", "f1", "fd_max", "fd_avg", "lf_max", "lf_avg"];
    let rows = rep.aggregate.iter().map(|a| {
        let (mota, f1) = a.clean.as_ref().map_or((f64::NAN, f64::NAN), |c| (c.mota, c.f1));
        (a.arm.clone(), mota, f1, a.adv.fd_max, a.adv.fd_avg, a.adv.lf_max, a.adv.lf_avg)
    });
    csv_text(rows, Some(&header))
}

/// Trajectory overlay data: positions along the attack direction per frame.
pub fn plot_csv(rep: &AttackReport) -> String {
    let header = ["trace", "arm", "frame", "gt", "perceived", "op", "attack_start"];
    let rows = rep.traces.iter().flat_map(|t| {
        t.arms.iter().flat_map(move |a| {
            a.plot.iter().map(move |p| {
                (t.trace.clone(), a.arm.clone(), p.frame, p.gt, p.perceived, p.op.clone(), p.frame == t.attack_frame)
            })
        })
    });
    csv_text(rows, Some(&header))
}

pub fn bench_csv(rep: &BenchReport) -> String {
    csv_text(&rep.rows, None)
}

pub fn theory_csv(rep: &TheoryReport) -> String {
    let mut buf = Vec::new();
    theory::write_csv(&rep.reports, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Theory report without the per-trial rows, which go to the CSV.
pub fn theory_json(rep: &TheoryReport) -> String {
    let mut slim = rep.clone();
    for r in &mut slim.reports {
        r.rows.clear();
    }
    to_json(&slim)
}

/// Every safety verdict of a per-trace deviation, `None` for pixel units.
pub fn verdicts(fd_max: f64, units: Units) -> Option<BTreeMap<String, bool>> {
    safety_verdicts(fd_max, units).ok()
}
