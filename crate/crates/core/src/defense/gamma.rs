//! Moment fits and upper quantiles for the deviation-scale distribution.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_lr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub std: f64,
}

/// Relative variance below which a sample counts as constant.
const DEGENERATE_REL_VAR: f64 = 1e-18;

fn moments(values: &[f64], needed: usize) -> Result<(f64, f64)> {
    if values.len() < needed.max(2) {
        return Err(Error::InsufficientData { needed: needed.max(2), got: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var))
}

/// Method-of-moments Gamma fit: `k = mean² / var`, `θ = var / mean`.
pub fn fit_gamma(values: &[f64], min_samples: usize) -> Result<GammaParams> {
    let (mean, var) = moments(values, min_samples)?;
    if mean <= 0.0 || var <= DEGENERATE_REL_VAR * mean * mean {
        return Err(Error::DegenerateVariance { mean });
    }
    Ok(GammaParams { shape: mean * mean / var, scale: var / mean })
}

pub fn fit_gaussian(values: &[f64], min_samples: usize) -> Result<GaussianParams> {
    let (mean, var) = moments(values, min_samples)?;
    if var <= DEGENERATE_REL_VAR * mean * mean || var == 0.0 {
        return Err(Error::DegenerateVariance { mean });
    }
    Ok(GaussianParams { mean, std: var.sqrt() })
}

pub fn gamma_cdf(params: &GammaParams, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(params.shape, x / params.scale)
    }
}

/// Inverse CDF by bisection on the regularized lower incomplete gamma
/// function, to 1e-12 relative width.
pub fn gamma_quantile(params: &GammaParams, q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "quantile level must lie in (0, 1)");
    let mut lo = 0.0;
    let mut hi = params.shape.max(1.0) * params.scale;
    while gamma_cdf(params, hi) < q {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if gamma_cdf(params, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn gaussian_quantile(params: &GaussianParams, q: f64) -> f64 {
    let z = Normal::standard().inverse_cdf(q);
    params.mean + z * params.std
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Exp, Gamma};

    #[test]
    fn exponential_quantiles_in_closed_form() {
        let p = GammaParams { shape: 1.0, scale: 1.0 };
        assert_abs_diff_eq!(gamma_quantile(&p, 0.95), -(0.05f64).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(gamma_quantile(&p, 0.95), 2.99573, epsilon = 1e-5);
        assert_abs_diff_eq!(gamma_quantile(&p, 0.5), 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn quantile_scales_with_theta() {
        for (k, q) in [(0.5, 0.9), (2.0, 0.95), (7.5, 0.2)] {
            let a = gamma_quantile(&GammaParams { shape: k, scale: 1.3 }, q);
            let b = gamma_quantile(&GammaParams { shape: k, scale: 2.6 }, q);
            assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-9 * b);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = GammaParams { shape: 1.75, scale: 0.4 };
        for q in [0.01, 0.3, 0.95, 0.999] {
            assert_abs_diff_eq!(gamma_cdf(&p, gamma_quantile(&p, q)), q, epsilon = 1e-10);
        }
    }

    #[test]
    fn quantile_monotone_in_level() {
        let p = GammaParams { shape: 2.0, scale: 0.5 };
        let mut last = 0.0;
        for i in 1..100 {
            let x = gamma_quantile(&p, i as f64 / 100.0);
            assert!(x > last);
            last = x;
        }
    }

    #[test]
    fn moment_fit_recovers_parameters() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let g = Gamma::new(2.0, 0.5).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| g.sample(&mut rng)).collect();
        let fit = fit_gamma(&xs, 30).unwrap();
        assert!((fit.shape - 2.0).abs() / 2.0 < 0.05, "{fit:?}");
        assert!((fit.scale - 0.5).abs() / 0.5 < 0.05, "{fit:?}");

        let e = Exp::new(1.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| e.sample(&mut rng)).collect();
        let fit = fit_gamma(&xs, 30).unwrap();
        assert!((fit.shape - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn constant_samples_are_degenerate() {
        assert!(matches!(fit_gamma(&[0.7; 40], 30), Err(Error::DegenerateVariance { mean }) if (mean - 0.7).abs() < 1e-12));
        assert_eq!(fit_gamma(&[0.0; 40], 30), Err(Error::DegenerateVariance { mean: 0.0 }));
        assert_eq!(fit_gamma(&[1.0; 3], 30), Err(Error::InsufficientData { needed: 30, got: 3 }));
    }

    #[test]
    fn gaussian_quantile_uses_z_score() {
        let p = GaussianParams { mean: 1.0, std: 2.0 };
        assert_abs_diff_eq!(gaussian_quantile(&p, 0.95), 1.0 + 2.0 * 1.6448536269514722, epsilon = 1e-9);
    }
}
