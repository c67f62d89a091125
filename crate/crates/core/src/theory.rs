//! Monte-Carlo study of how attack-induced deviation grows, on a single
//! lateral axis tracked by a constant-velocity filter.
//!
//! Every trial runs four filters on one shared noise realization:
//! clean/attacked × undefended/defended (indices `00`, `10`, `01`, `11`).
//! `Δ_ij` is the terminal gap `|x_ij(T) − x_00(T)|`, so shared noise cancels
//! and only the effect of the attack and of the clip remains.

use crate::attack::{layout_schedule, op_counts, Layout, OpKind};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub frames: usize,
    pub s_ratio: f64,
    pub h_ratio: f64,
    /// Attack window as a fraction of the trace; non-optimal layouts spread
    /// their operations over it.
    pub r_ratio: f64,
    pub lambda: f64,
    pub delta_max: f64,
    pub sigma: f64,
    pub q: f64,
    pub trials: usize,
    pub seed: u64,
    pub layout: Layout,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            frames: 300,
            // one shift frame at the default length
            s_ratio: 0.004,
            h_ratio: 0.05,
            r_ratio: 1.0,
            lambda: 2.0,
            delta_max: 0.2,
            sigma: 0.05,
            q: 1e-4,
            trials: 200,
            seed: 0,
            layout: Layout::Optimal,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.frames < 2 || self.trials == 0 {
            return bad("theory needs at least 2 frames and 1 trial");
        }
        if self.s_ratio < 0.0 || self.h_ratio < 0.0 || self.s_ratio + self.h_ratio > 1.0 {
            return bad("s_ratio + h_ratio must lie in [0, 1]");
        }
        if !(self.sigma > 0.0 && self.delta_max > 0.0 && self.q >= 0.0) {
            return bad("sigma and delta_max must be positive, q non-negative");
        }
        Ok(())
    }

    /// Observation noise variance the filter assumes.
    pub fn r(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Position/velocity filter on one axis.
#[derive(Debug, Clone, Copy)]
struct AxisFilter {
    x: f64,
    v: f64,
    p: [[f64; 2]; 2],
}

impl AxisFilter {
    fn new(z: f64, r: f64) -> Self {
        Self { x: z, v: 0.0, p: [[r, 0.0], [0.0, 10.0 * r]] }
    }

    fn predict(&mut self, q: f64) {
        let p = self.p;
        self.x += self.v;
        // A P A^T + Q with A = [[1, 1], [0, 1]]
        let p00 = p[0][0] + p[0][1] + p[1][0] + p[1][1] + q;
        let p01 = p[0][1] + p[1][1];
        let p10 = p[1][0] + p[1][1];
        let p11 = p[1][1] + q;
        self.p = [[p00, p01], [p10, p11]];
    }

    fn update(&mut self, z: f64, r: f64, clip: Option<f64>) {
        let s = self.p[0][0] + r;
        let (k0, k1) = (self.p[0][0] / s, self.p[1][0] / s);
        let mut d = z - self.x;
        if let Some(m) = clip {
            d = d.clamp(-m, m);
        }
        self.x += k0 * d;
        self.v += k1 * d;
        let p = self.p;
        let p00 = (1.0 - k0) * p[0][0];
        let p01 = (1.0 - k0) * p[0][1];
        let p10 = p[1][0] - k1 * p[0][0];
        let p11 = p[1][1] - k1 * p[0][1];
        let off = 0.5 * (p01 + p10);
        self.p = [[p00, off], [off, p11]];
    }
}

/// Terminal position of one run. The true lateral position is 0 throughout.
fn run_axis(noise: &[f64], schedule: &[Option<OpKind>], lambda: f64, clip: Option<f64>, q: f64, r: f64) -> f64 {
    let mut f: Option<AxisFilter> = None;
    for (t, n) in noise.iter().enumerate() {
        let op = schedule.get(t).copied().flatten();
        let z = match op {
            Some(OpKind::Hide) => None,
            Some(OpKind::Shift) => Some(n + lambda),
            None => Some(*n),
        };
        match (&mut f, z) {
            (None, Some(z)) => f = Some(AxisFilter::new(z, r)),
            (None, None) => {}
            (Some(k), z) => {
                k.predict(q);
                if let Some(z) = z {
                    k.update(z, r, clip);
                }
            }
        }
    }
    f.map_or(0.0, |k| k.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub d10: f64,
    pub d01: f64,
    pub d11: f64,
}

fn trial_noise(cfg: &SimConfig, trial: usize) -> Vec<f64> {
    let mut rng = stream_rng(cfg.seed, trial as u64);
    let normal = Normal::new(0.0, cfg.sigma).expect("sigma validated");
    (0..cfg.frames).map(|_| normal.sample(&mut rng)).collect()
}

fn trial(cfg: &SimConfig, noise: &[f64], schedule: &[Option<OpKind>], trial: usize) -> TrialRow {
    let (q, r) = (cfg.q, cfg.r());
    let clean: Vec<Option<OpKind>> = vec![None; cfg.frames];
    let x00 = run_axis(noise, &clean, 0.0, None, q, r);
    let x10 = run_axis(noise, schedule, cfg.lambda, None, q, r);
    let x01 = run_axis(noise, &clean, 0.0, Some(cfg.delta_max), q, r);
    let x11 = run_axis(noise, schedule, cfg.lambda, Some(cfg.delta_max), q, r);
    TrialRow { trial, d10: (x10 - x00).abs(), d01: (x01 - x00).abs(), d11: (x11 - x00).abs() }
}

fn schedule_for(cfg: &SimConfig, layout: Layout) -> Vec<Option<OpKind>> {
    let (ns, nh) = op_counts(cfg.frames, cfg.s_ratio, cfg.h_ratio);
    layout_schedule(cfg.frames, ns, nh, cfg.r_ratio.max(cfg.s_ratio + cfg.h_ratio), layout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub layout: String,
    pub frames: usize,
    pub trials: usize,
    pub mean_d10: f64,
    pub max_d10: f64,
    pub mean_d01: f64,
    pub max_d01: f64,
    pub mean_d11: f64,
    pub max_d11: f64,
    /// `mean Δ10 / mean Δ11`.
    pub ratio: f64,
    /// Decay constant of the steady-state error dynamics.
    pub beta: f64,
    pub rows: Vec<TrialRow>,
}

fn summarize(cfg: &SimConfig, layout: Layout, rows: Vec<TrialRow>) -> SimReport {
    let n = rows.len() as f64;
    let mean = |f: fn(&TrialRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let max = |f: fn(&TrialRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let (m10, m11) = (mean(|r| r.d10), mean(|r| r.d11));
    SimReport {
        layout: layout.name(),
        frames: cfg.frames,
        trials: rows.len(),
        mean_d10: m10,
        max_d10: max(|r| r.d10),
        mean_d01: mean(|r| r.d01),
        max_d01: max(|r| r.d01),
        mean_d11: m11,
        max_d11: max(|r| r.d11),
        ratio: if m11 > 0.0 { m10 / m11 } else { f64::INFINITY },
        beta: decay_constant(cfg.q, cfg.r()),
        rows,
    }
}

/// Runs `cfg.trials` paired trials under `cfg.layout`.
pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let schedule = schedule_for(cfg, cfg.layout);
    let rows: Vec<TrialRow> =
        (0..cfg.trials).into_par_iter().map(|t| trial(cfg, &trial_noise(cfg, t), &schedule, t)).collect();
    Ok(summarize(cfg, cfg.layout, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub layout: String,
    pub mean_d10: f64,
    /// Mean `Δ10` of each batch of trials.
    pub batch_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSweep {
    pub batches: usize,
    pub results: Vec<LayoutResult>,
    /// Per layout, the fraction of batches in which the first layout's
    /// mean deviation is at least as large.
    pub first_dominates: Vec<(String, f64)>,
}

/// Every layout sees the same noise in every trial. Trials are grouped into
/// `batches` equal batches.
pub fn layout_sweep(cfg: &SimConfig, layouts: &[Layout], batches: usize) -> Result<LayoutSweep> {
    cfg.validate()?;
    if layouts.len() < 2 || batches == 0 || cfg.trials < batches {
        return Err(Error::InvalidConfig("need >= 2 layouts and at least one trial per batch".into()));
    }
    let schedules: Vec<Vec<Option<OpKind>>> = layouts.iter().map(|l| schedule_for(cfg, *l)).collect();
    let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let noise = trial_noise(cfg, t);
            schedules.iter().map(|s| trial(cfg, &noise, s, t).d10).collect()
        })
        .collect();
    let size = cfg.trials / batches;
    let results: Vec<LayoutResult> = layouts
        .iter()
        .enumerate()
        .map(|(li, l)| {
            let batch_means = (0..batches)
                .map(|b| per_trial[b * size..(b + 1) * size].iter().map(|d| d[li]).sum::<f64>() / size as f64)
                .collect();
            let mean_d10 = per_trial.iter().map(|d| d[li]).sum::<f64>() / cfg.trials as f64;
            LayoutResult { layout: l.name(), mean_d10, batch_means }
        })
        .collect();
    let first = &results[0];
    let first_dominates = results[1..]
        .iter()
        .map(|r| {
            let wins = first.batch_means.iter().zip(&r.batch_means).filter(|(a, b)| a >= b).count();
            (r.layout.clone(), wins as f64 / batches as f64)
        })
        .collect();
    Ok(LayoutSweep { batches, results, first_dominates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LineFit { slope, intercept: my - slope * mx, r2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub hide_frames: Vec<usize>,
    pub mean_d10: Vec<f64>,
    pub mean_d11: Vec<f64>,
    pub undefended: LineFit,
    pub defended: LineFit,
}

/// Terminal deviation against the length of the final hide block, with the
/// shift count of `cfg` held fixed and the optimal layout.
pub fn growth_fit(cfg: &SimConfig, hide_frames: &[usize]) -> Result<GrowthFit> {
    cfg.validate()?;
    if hide_frames.len() < 4 {
        return Err(Error::InvalidConfig("growth fit needs at least 4 hide lengths".into()));
    }
    let (ns, _) = op_counts(cfg.frames, cfg.s_ratio, cfg.h_ratio);
    let mut d10 = Vec::new();
    let mut d11 = Vec::new();
    for &nh in hide_frames {
        if ns + nh > cfg.frames {
            return Err(Error::InvalidConfig("hide block longer than the trace".into()));
        }
        let schedule = layout_schedule(cfg.frames, ns, nh, 1.0, Layout::Optimal);
        let rows: Vec<TrialRow> =
            (0..cfg.trials).into_par_iter().map(|t| trial(cfg, &trial_noise(cfg, t), &schedule, t)).collect();
        d10.push(rows.iter().map(|r| r.d10).sum::<f64>() / rows.len() as f64);
        d11.push(rows.iter().map(|r| r.d11).sum::<f64>() / rows.len() as f64);
    }
    let x: Vec<f64> = hide_frames.iter().map(|h| *h as f64).collect();
    Ok(GrowthFit {
        hide_frames: hide_frames.to_vec(),
        undefended: fit_line(&x, &d10),
        defended: fit_line(&x, &d11),
        mean_d10: d10,
        mean_d11: d11,
    })
}

/// `−ln ρ((I − K H) A)` for the steady-state gain of the axis filter.
pub fn decay_constant(q: f64, r: f64) -> f64 {
    let mut f = AxisFilter::new(0.0, r);
    let (mut k0, mut k1) = (0.0, 0.0);
    for _ in 0..10_000 {
        f.predict(q);
        let s = f.p[0][0] + r;
        let (n0, n1) = (f.p[0][0] / s, f.p[1][0] / s);
        f.update(f.x, r, None);
        let done = (n0 - k0).abs() < 1e-15 && (n1 - k1).abs() < 1e-15;
        (k0, k1) = (n0, n1);
        if done {
            break;
        }
    }
    // (I - K H) A = [[1 - k0, 1 - k0], [-k1, 1 - k1]]
    let (a, b, c, d) = (1.0 - k0, 1.0 - k0, -k1, 1.0 - k1);
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr - 4.0 * det;
    let rho = if disc >= 0.0 {
        ((tr.abs() + disc.sqrt()) / 2.0).max((tr.abs() - disc.sqrt()).abs() / 2.0)
    } else {
        det.sqrt()
    };
    -rho.ln()
}

/// `trial, layout, T, Δ10, Δ01, Δ11` rows.
pub fn write_csv<W: Write>(reports: &[SimReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "layout", "T", "d10", "d01", "d11"])?;
    for rep in reports {
        for r in &rep.rows {
            w.serialize((r.trial, &rep.layout, rep.frames, r.d10, r.d01, r.d11))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig { trials: 64, ..Default::default() }
    }

    #[test]
    fn axis_filter_agrees_with_matrix_filter() {
        use crate::geometry::Dims;
        use crate::kalman::{predict, update, KfModel, KfState, NoiseConfig};
        use nalgebra::DVector;
        let (q, r) = (0.003, 0.2);
        let model = KfModel::constant_velocity(Dims::Two, NoiseConfig { q, r });
        let zs = [0.3, -0.1, 0.5, 0.2, 1.1, 0.9];
        let mut m = KfState::from_observation(&DVector::from_row_slice(&[zs[0], 0.0]), &model);
        let mut a = AxisFilter::new(zs[0], r);
        for z in &zs[1..] {
            m = update(&predict(&m, &model), &DVector::from_row_slice(&[*z, 0.0]), &model, None).unwrap();
            a.predict(q);
            a.update(*z, r, None);
            assert!((m.s[0] - a.x).abs() < 1e-12 && (m.s[1] - a.v).abs() < 1e-12);
        }
    }

    #[test]
    fn no_attack_gives_zero_attack_deviation() {
        let cfg = SimConfig { lambda: 0.0, ..small() };
        let rep = simulate(&cfg).unwrap();
        assert!(rep.mean_d10 < 3.0 * cfg.sigma, "{}", rep.mean_d10);
    }

    #[test]
    fn wide_clip_never_changes_clean_runs() {
        let cfg = SimConfig { delta_max: 10.0, ..small() };
        let rep = simulate(&cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.d01 == 0.0));
    }

    #[test]
    fn runs_are_seed_deterministic() {
        assert_eq!(simulate(&small()).unwrap(), simulate(&small()).unwrap());
    }

    #[test]
    fn pure_hiding_drift_is_linear() {
        let cfg = SimConfig { trials: 32, ..Default::default() };
        let g = growth_fit(&cfg, &[2, 4, 6, 8, 10, 12]).unwrap();
        assert!(g.undefended.r2 > 0.999, "{g:?}");
        assert!(g.undefended.slope > 0.0);
        let ratio = g.defended.slope / g.undefended.slope;
        let expected = cfg.delta_max / cfg.lambda;
        assert!(ratio > expected / 2.0 && ratio < expected * 2.0, "{ratio}");
    }

    #[test]
    fn zero_attack_has_flat_growth() {
        let cfg = SimConfig { lambda: 0.0, trials: 32, ..Default::default() };
        let g = growth_fit(&cfg, &[2, 4, 6, 8]).unwrap();
        assert!(g.undefended.slope.abs() < 0.01, "{g:?}");
    }

    #[test]
    fn defended_deviation_is_smaller() {
        let rep = simulate(&small()).unwrap();
        assert!(rep.mean_d11 < rep.mean_d10);
        assert!(rep.beta > 0.0);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let f = fit_line(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_trial() {
        let rep = simulate(&SimConfig { trials: 5, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_csv(&[rep], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }
}
