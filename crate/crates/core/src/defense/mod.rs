//! The deviation-clipping patch.
//!
//! Every matched pair contributes `|z − H s⁻|` per axis to a FIFO shared by
//! all trajectories. Each frame the FIFO is sanitized by dropping values
//! outside its `[β, 1 − β]` empirical quantiles, a Gamma distribution is fit
//! to what remains, and residuals are clipped per axis at the fitted
//! `α_max` quantile before they reach the Kalman update.

pub mod gamma;

use crate::error::{Error, Result};
use crate::kalman::Residual;
use gamma::{fit_gamma, fit_gaussian, gamma_quantile, gaussian_quantile, GammaParams};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Gamma,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    pub alpha_max: f64,
    pub beta_trim: f64,
    pub buffer_size: usize,
    pub warmup_min: usize,
    pub distribution: Distribution,
    pub axis_aware: bool,
    pub outlier_aware: bool,
    /// Store only the largest per-axis magnitude of each residual.
    pub elimination: bool,
    /// Only confirmed tracks feed and consult the buffer; provisional
    /// tracks update classically while their velocity is still settling.
    pub confirmed_only: bool,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            alpha_max: 0.95,
            beta_trim: 0.05,
            buffer_size: 200,
            warmup_min: 30,
            distribution: Distribution::Gamma,
            axis_aware: true,
            outlier_aware: true,
            elimination: false,
            confirmed_only: true,
        }
    }
}

/// Named ablation variants of the full design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseMode {
    Full,
    Gaussian,
    Elimination,
    OutlierUnaware,
    AxisUnaware,
}

impl DefenseMode {
    pub const ALL: [DefenseMode; 5] = [
        DefenseMode::Full,
        DefenseMode::Gaussian,
        DefenseMode::Elimination,
        DefenseMode::OutlierUnaware,
        DefenseMode::AxisUnaware,
    ];

    pub fn apply(self, base: DefenseConfig) -> DefenseConfig {
        match self {
            DefenseMode::Full => base,
            DefenseMode::Gaussian => DefenseConfig { distribution: Distribution::Gaussian, ..base },
            DefenseMode::Elimination => DefenseConfig { elimination: true, ..base },
            DefenseMode::OutlierUnaware => DefenseConfig { outlier_aware: false, ..base },
            DefenseMode::AxisUnaware => DefenseConfig { axis_aware: false, ..base },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DefenseMode::Full => "full",
            DefenseMode::Gaussian => "gaussian",
            DefenseMode::Elimination => "elimination",
            DefenseMode::OutlierUnaware => "outlier-unaware",
            DefenseMode::AxisUnaware => "axis-unaware",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.alpha_max > 0.0 && self.alpha_max < 1.0) {
            return bad("alpha_max must lie in (0, 1)");
        }
        if !(self.beta_trim > 0.0 && self.beta_trim < 0.5) {
            return bad("beta_trim must lie in (0, 0.5)");
        }
        if self.buffer_size == 0 || self.warmup_min == 0 {
            return bad("buffer_size and warmup_min must be positive");
        }
        Ok(())
    }

    fn pooled(&self) -> bool {
        self.elimination || !self.axis_aware
    }
}

/// Per-axis FIFOs of absolute deviations (a single FIFO when pooled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationBuffer {
    axes: usize,
    capacity: usize,
    fifos: Vec<VecDeque<f64>>,
}

impl DeviationBuffer {
    pub fn new(axes: usize, cfg: &DefenseConfig) -> Self {
        let n = if cfg.pooled() { 1 } else { axes };
        Self { axes, capacity: cfg.buffer_size, fifos: vec![VecDeque::new(); n] }
    }

    /// Spatial axes served (thresholds are replicated when pooled).
    pub fn axes(&self) -> usize {
        self.axes
    }

    pub fn fifos(&self) -> &[VecDeque<f64>] {
        &self.fifos
    }

    pub fn is_pooled(&self) -> bool {
        self.fifos.len() == 1 && self.axes > 1
    }

    pub fn len(&self) -> usize {
        self.fifos.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&mut self, fifo: usize, value: f64) {
        let q = &mut self.fifos[fifo];
        q.push_back(value);
        while q.len() > self.capacity {
            q.pop_front();
        }
    }

    pub fn record(&mut self, delta: &Residual, cfg: &DefenseConfig) {
        debug_assert!(delta.as_slice().iter().all(|v| v.is_finite()));
        let mags = delta.as_slice().iter().map(|v| v.abs());
        if cfg.elimination {
            let max = mags.fold(0.0, f64::max);
            self.push(0, max);
        } else if cfg.pooled() {
            for m in mags {
                self.push(0, m);
            }
        } else {
            for (axis, m) in mags.enumerate() {
                self.push(axis, m);
            }
        }
    }

    /// Copy with every FIFO restricted to its `[β, 1 − β]` empirical
    /// quantile range; FIFOs with fewer than 3 values are left alone.
    pub fn trim(&self, cfg: &DefenseConfig) -> DeviationBuffer {
        if !cfg.outlier_aware {
            return self.clone();
        }
        let fifos = self
            .fifos
            .iter()
            .map(|q| {
                if q.len() < 3 {
                    return q.clone();
                }
                let mut sorted: Vec<f64> = q.iter().copied().collect();
                sorted.sort_by(f64::total_cmp);
                let lo = empirical_quantile(&sorted, cfg.beta_trim);
                let hi = empirical_quantile(&sorted, 1.0 - cfg.beta_trim);
                q.iter().copied().filter(|v| *v >= lo && *v <= hi).collect()
            })
            .collect();
        DeviationBuffer { fifos, ..*self }
    }

    /// `(fifo, value)` rows in insertion order. Pooled buffers report fifo `-1`.
    pub fn write_csv<W: Write>(&self, frame: usize, out: &mut csv::Writer<W>) -> csv::Result<()> {
        for (i, q) in self.fifos.iter().enumerate() {
            let axis = if self.is_pooled() { -1 } else { i as i64 };
            for v in q {
                out.serialize((frame, axis, v))?;
            }
        }
        Ok(())
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fitted threshold for one FIFO.
pub fn fifo_threshold(values: &[f64], cfg: &DefenseConfig) -> Result<f64> {
    if values.len() < cfg.warmup_min {
        return Err(Error::Inactive);
    }
    let fitted = match cfg.distribution {
        Distribution::Gamma => fit_gamma(values, cfg.warmup_min).map(|p| gamma_quantile(&p, cfg.alpha_max)),
        Distribution::Gaussian => fit_gaussian(values, cfg.warmup_min).map(|p| gaussian_quantile(&p, cfg.alpha_max)),
    };
    match fitted {
        Ok(t) => Ok(t),
        // point mass: the threshold is the common value
        Err(Error::DegenerateVariance { mean }) => Ok(mean.max(0.0)),
        Err(e) => Err(e),
    }
}

/// Per-axis `δ_max` from an already sanitized buffer.
pub fn threshold_vector(buf: &DeviationBuffer, cfg: &DefenseConfig) -> Result<Vec<f64>> {
    let per_fifo: Vec<f64> = buf
        .fifos
        .iter()
        .map(|q| {
            let values: Vec<f64> = q.iter().copied().collect();
            fifo_threshold(&values, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(if per_fifo.len() == 1 {
        vec![per_fifo[0]; buf.axes]
    } else {
        per_fifo
    })
}

pub fn gamma_fit_of(values: &[f64], cfg: &DefenseConfig) -> Result<GammaParams> {
    fit_gamma(values, cfg.warmup_min)
}

/// Clip each coordinate to `±δ_max,i`, keeping its sign.
pub fn modulate(delta: &Residual, dmax: &[f64]) -> Residual {
    assert_eq!(delta.len(), dmax.len(), "threshold dimension mismatch");
    Residual(nalgebra::DVector::from_iterator(
        delta.len(),
        delta.as_slice().iter().zip(dmax).map(|(&d, &m)| {
            if d.abs() > m {
                d.signum() * m
            } else {
                d
            }
        }),
    ))
}

/// Runtime state of the patch inside one tracker.
#[derive(Debug, Clone)]
pub struct Defense {
    pub cfg: DefenseConfig,
    buffer: DeviationBuffer,
}

impl Defense {
    pub fn new(axes: usize, cfg: DefenseConfig) -> Self {
        Self { buffer: DeviationBuffer::new(axes, &cfg), cfg }
    }

    pub fn buffer(&self) -> &DeviationBuffer {
        &self.buffer
    }

    /// The sanitized view the thresholds are fit on.
    pub fn sanitized(&self) -> DeviationBuffer {
        self.buffer.trim(&self.cfg)
    }

    /// Current clip bounds, or `None` while the buffer is warming up.
    pub fn thresholds(&self) -> Option<Vec<f64>> {
        threshold_vector(&self.sanitized(), &self.cfg).ok()
    }

    pub fn record_frame<'a>(&mut self, residuals: impl IntoIterator<Item = &'a Residual>) {
        for r in residuals {
            self.buffer.record(r, &self.cfg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn res(v: &[f64]) -> Residual {
        Residual(DVector::from_row_slice(v))
    }

    #[test]
    fn record_per_axis_magnitudes() {
        let cfg = DefenseConfig::default();
        let mut b = DeviationBuffer::new(2, &cfg);
        b.record(&res(&[0.3, -0.5]), &cfg);
        assert_eq!(b.fifos()[0], [0.3]);
        assert_eq!(b.fifos()[1], [0.5]);
    }

    #[test]
    fn record_evicts_oldest() {
        let cfg = DefenseConfig { buffer_size: 3, ..Default::default() };
        let mut b = DeviationBuffer::new(1, &cfg);
        for v in [1.0, 2.0, 3.0, 4.0] {
            b.record(&res(&[v]), &cfg);
        }
        assert_eq!(b.fifos()[0], [2.0, 3.0, 4.0]);
    }

    #[test]
    fn elimination_keeps_largest_axis() {
        let cfg = DefenseMode::Elimination.apply(DefenseConfig::default());
        let mut b = DeviationBuffer::new(2, &cfg);
        b.record(&res(&[0.3, -0.5]), &cfg);
        assert_eq!(b.fifos().len(), 1);
        assert_eq!(b.fifos()[0], [0.5]);
    }

    #[test]
    fn axis_unaware_pools_values() {
        let cfg = DefenseMode::AxisUnaware.apply(DefenseConfig::default());
        let mut b = DeviationBuffer::new(3, &cfg);
        b.record(&res(&[0.1, -0.2, 0.3]), &cfg);
        assert_eq!(b.fifos()[0], [0.1, 0.2, 0.3]);
        assert!(b.is_pooled());
    }

    #[test]
    fn trim_drops_tails_by_type7_quantiles() {
        let cfg = DefenseConfig { buffer_size: 1000, ..Default::default() };
        let mut b = DeviationBuffer::new(1, &cfg);
        for v in 1..=100 {
            b.record(&res(&[v as f64]), &cfg);
        }
        // type-7 quantiles of 1..=100: 5.95 and 95.05
        let mut sorted: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        sorted.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(empirical_quantile(&sorted, 0.05), 5.95, epsilon = 1e-12);
        assert_abs_diff_eq!(empirical_quantile(&sorted, 0.95), 95.05, epsilon = 1e-12);
        let t = b.trim(&cfg);
        let kept: Vec<f64> = t.fifos()[0].iter().copied().collect();
        assert_eq!(kept, (6..=95).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn trim_degenerate_cases() {
        let cfg = DefenseConfig::default();
        let mut b = DeviationBuffer::new(1, &cfg);
        for _ in 0..10 {
            b.record(&res(&[2.0]), &cfg);
        }
        assert_eq!(b.trim(&cfg), b);

        let mut small = DeviationBuffer::new(1, &cfg);
        small.record(&res(&[1.0]), &cfg);
        small.record(&res(&[100.0]), &cfg);
        assert_eq!(small.trim(&cfg), small);

        let off = DefenseConfig { outlier_aware: false, ..cfg };
        let mut wide = DeviationBuffer::new(1, &off);
        for v in 0..50 {
            wide.record(&res(&[v as f64]), &off);
        }
        assert_eq!(wide.trim(&off), wide);
    }

    #[test]
    fn thresholds_wait_for_warmup() {
        let cfg = DefenseConfig::default();
        let mut d = Defense::new(2, cfg);
        for i in 0..29 {
            d.record_frame([&res(&[i as f64 * 0.01, 0.1])]);
        }
        assert!(d.thresholds().is_none());
        assert_eq!(threshold_vector(d.buffer(), &cfg), Err(Error::Inactive));
    }

    #[test]
    fn exponential_axis_threshold() {
        use rand::SeedableRng;
        use rand_distr::{Distribution as _, Exp};
        let cfg = DefenseConfig { buffer_size: 20_000, ..Default::default() };
        let mut b = DeviationBuffer::new(1, &cfg);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let e = Exp::new(1.0 / 0.4).unwrap();
        for _ in 0..20_000 {
            b.record(&res(&[e.sample(&mut rng)]), &cfg);
        }
        let t = threshold_vector(&b, &cfg).unwrap()[0];
        assert!((t - 2.996 * 0.4).abs() / (2.996 * 0.4) < 0.05, "{t}");
    }

    #[test]
    fn constant_buffer_uses_point_mass() {
        let cfg = DefenseConfig::default();
        let mut b = DeviationBuffer::new(1, &cfg);
        for _ in 0..40 {
            b.record(&res(&[0.25]), &cfg);
        }
        assert_eq!(threshold_vector(&b, &cfg).unwrap(), vec![0.25]);
    }

    #[test]
    fn pooled_threshold_is_shared() {
        let cfg = DefenseMode::AxisUnaware.apply(DefenseConfig::default());
        let mut b = DeviationBuffer::new(3, &cfg);
        for i in 0..40 {
            b.record(&res(&[0.1 * i as f64, 0.05, -0.2]), &cfg);
        }
        let t = threshold_vector(&b, &cfg).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|v| *v == t[0]));
    }

    #[test]
    fn gaussian_and_gamma_thresholds_differ() {
        let cfg = DefenseConfig::default();
        let gauss = DefenseMode::Gaussian.apply(cfg);
        let values: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.37).sin().abs()).collect();
        assert_ne!(fifo_threshold(&values, &cfg).unwrap(), fifo_threshold(&values, &gauss).unwrap());
    }

    #[test]
    fn modulate_examples() {
        assert_eq!(modulate(&res(&[0.2, -3.0]), &[0.5, 1.0]).as_slice(), &[0.2, -1.0]);
        assert_eq!(modulate(&res(&[0.4, 0.9]), &[0.5, 1.0]).as_slice(), &[0.4, 0.9]);
        assert_eq!(modulate(&res(&[-0.6, 0.0]), &[0.5, 1.0]).as_slice(), &[-0.5, 0.0]);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in DefenseMode::ALL {
            assert_eq!(DefenseMode::parse(m.name()), Some(m));
        }
        assert!(DefenseConfig { alpha_max: 1.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn modulate_is_idempotent_bounded_and_sign_preserving(
            d in proptest::collection::vec(-50.0..50.0f64, 3),
            m in proptest::collection::vec(0.001..10.0f64, 3),
        ) {
            let once = modulate(&res(&d), &m);
            prop_assert_eq!(modulate(&once, &m).clone(), once.clone());
            for i in 0..3 {
                prop_assert!(once.as_slice()[i].abs() <= m[i]);
                prop_assert!(once.as_slice()[i] * d[i] >= 0.0);
            }
        }

        #[test]
        fn buffer_lengths_bounded(values in proptest::collection::vec(-5.0..5.0f64, 0..300), cap in 1usize..50) {
            let cfg = DefenseConfig { buffer_size: cap, ..Default::default() };
            let mut b = DeviationBuffer::new(2, &cfg);
            for v in &values {
                b.record(&res(&[*v, -v]), &cfg);
                prop_assert!(b.fifos().iter().all(|q| q.len() <= cap));
            }
            let t = b.trim(&cfg);
            for (a, b) in t.fifos().iter().zip(b.fifos()) {
                prop_assert!(a.len() <= b.len());
            }
        }
    }
}
