//! Adaptive intensity filtering.
//!
//! Aerosol returns (smoke, dust) sit in the low tail of the intensity
//! histogram. That tail is modeled with a Weibull distribution whose shape
//! and scale are re-estimated online; points strictly below a quantile of
//! the fitted distribution are rejected. Until the first successful fit, a
//! fixed starting threshold applies.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Quantile bounds used when turning a fit into a threshold.
pub const QUANTILE_P_BOUNDS: (f64, f64) = (0.1, 0.15);
/// Default quantile (upper end of the permitted interval).
pub const QUANTILE_P_DEFAULT: f64 = 0.15;
/// Threshold applied before any fit has succeeded.
pub const INITIAL_THRESHOLD: f64 = 2.0;
/// Default histogram resolution for diagnostics.
pub const HISTOGRAM_BINS_DEFAULT: usize = 51;
/// Minimum sample count accepted by the fitter.
pub const MIN_FIT_SAMPLES: usize = 50;

/// Three-parameter Weibull: scale `alpha`, shape `gamma`, location `mu`.
/// `mu = 0` recovers the two-parameter form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl WeibullParams {
    pub fn new(alpha: f64, gamma: f64, mu: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::parameter("alpha", format!("{alpha} must be > 0")));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::parameter("gamma", format!("{gamma} must be > 0")));
        }
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::parameter("mu", format!("{mu} must be >= 0")));
        }
        Ok(WeibullParams { alpha, gamma, mu })
    }
}

/// Density of the three-parameter Weibull; zero below the location.
pub fn weibull_pdf(x: f64, p: &WeibullParams) -> f64 {
    if x < p.mu {
        return 0.0;
    }
    let z = (x - p.mu) / p.alpha;
    (p.gamma / p.alpha) * z.powf(p.gamma - 1.0) * (-z.powf(p.gamma)).exp()
}

/// Cumulative distribution of the three-parameter Weibull.
pub fn weibull_cdf(x: f64, p: &WeibullParams) -> f64 {
    if x < p.mu {
        return 0.0;
    }
    let z = (x - p.mu) / p.alpha;
    1.0 - (-z.powf(p.gamma)).exp()
}

/// Quantile function: `mu + alpha * (-ln(1 - prob))^(1/gamma)`.
///
/// `prob` must lie in `[0, 1)`; the distribution has unbounded support so
/// `prob = 1` has no finite quantile.
pub fn weibull_quantile(prob: f64, p: &WeibullParams) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::parameter(
            "prob",
            format!("{prob} outside [0, 1)"),
        ));
    }
    Ok(p.mu + p.alpha * (-(1.0 - prob).ln()).powf(1.0 / p.gamma))
}

/// How the location parameter is handled during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationPolicy {
    /// Fit the two-parameter form (location fixed at zero).
    #[default]
    Zero,
    /// Use the sample minimum as the location estimate.
    SampleMin,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("weibull fit needs at least {min} positive samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("weibull fit on degenerate data: samples carry no spread")]
    Degenerate,
    #[error("weibull fit did not converge within {0} iterations")]
    NoConvergence(usize),
}

/// Maximum-likelihood fit of the Weibull shape and scale.
///
/// Newton iteration on the profile-likelihood shape equation
/// `n/g + sum(ln t) - n * sum(t^g ln t) / sum(t^g) = 0`, after which the
/// scale follows in closed form. Samples at or below the location are
/// discarded; at least [`MIN_FIT_SAMPLES`] must remain.
pub fn fit_weibull(samples: &[f64], policy: LocationPolicy) -> std::result::Result<WeibullParams, FitError> {
    let mu = match policy {
        LocationPolicy::Zero => 0.0,
        LocationPolicy::SampleMin => samples
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .max(0.0),
    };
    let shifted: Vec<f64> = samples
        .iter()
        .map(|&x| x - mu)
        .filter(|&t| t > 0.0 && t.is_finite())
        .collect();
    let n = shifted.len();
    if n < MIN_FIT_SAMPLES {
        return Err(FitError::TooFewSamples {
            min: MIN_FIT_SAMPLES,
            got: n,
        });
    }
    let mean = shifted.iter().sum::<f64>() / n as f64;
    let lo = shifted.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= f64::EPSILON * hi.abs() {
        return Err(FitError::Degenerate);
    }
    // Normalize by the mean; the shape equation is scale invariant and this
    // keeps t^g well conditioned.
    let t: Vec<f64> = shifted.iter().map(|&x| x / mean).collect();
    let ln_sum: f64 = t.iter().map(|x| x.ln()).sum();
    let nf = n as f64;

    const MAX_ITER: usize = 100;
    const TOL: f64 = 1e-10;
    let mut g = 1.2;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &x in &t {
            let xg = x.powf(g);
            let lx = x.ln();
            s0 += xg;
            s1 += xg * lx;
            s2 += xg * lx * lx;
        }
        let f = nf / g + ln_sum - nf * s1 / s0;
        let fp = -nf / (g * g) - nf * (s2 * s0 - s1 * s1) / (s0 * s0);
        let mut step = f / fp;
        // Keep the shape positive; halve overshooting steps.
        while g - step <= 0.0 {
            step *= 0.5;
        }
        g -= step;
        if step.abs() < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence(MAX_ITER));
    }
    let s0: f64 = t.iter().map(|&x| x.powf(g)).sum();
    let alpha = mean * (s0 / nf).powf(1.0 / g);
    Ok(WeibullParams {
        alpha,
        gamma: g,
        mu,
    })
}

/// The lowest `fraction` of the value range, used to isolate the noise tail
/// before fitting. `fraction = 1` keeps everything.
pub fn clip_low_fraction(values: &[f64], fraction: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = lo + fraction * (hi - lo);
    values.iter().copied().filter(|&v| v <= cut).collect()
}

/// A rejection threshold, optionally backed by the fit that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityThreshold {
    /// Points with intensity strictly below this are rejected.
    pub i_th: f64,
    /// Quantile the threshold was drawn at.
    pub p: f64,
    /// The fitted distribution, absent before the first successful fit.
    pub fit: Option<WeibullParams>,
    /// Histogram resolution used for diagnostics alongside this threshold.
    pub histogram_bins: usize,
}

impl IntensityThreshold {
    /// Threshold in force before any fit: the fixed starting value.
    pub fn initial(i_th: f64) -> Self {
        IntensityThreshold {
            i_th,
            p: QUANTILE_P_DEFAULT,
            fit: None,
            histogram_bins: HISTOGRAM_BINS_DEFAULT,
        }
    }
}

impl Default for IntensityThreshold {
    fn default() -> Self {
        Self::initial(INITIAL_THRESHOLD)
    }
}

/// Derives the rejection threshold from a fit at quantile `p`.
pub fn intensity_threshold(fit: &WeibullParams, p: f64, histogram_bins: usize) -> Result<IntensityThreshold> {
    Error::check_range("quantile_p", p, QUANTILE_P_BOUNDS.0, QUANTILE_P_BOUNDS.1)?;
    if histogram_bins == 0 {
        return Err(Error::parameter("histogram_bins", "must be at least 1"));
    }
    let i_th = weibull_quantile(p, fit)?;
    Ok(IntensityThreshold {
        i_th,
        p,
        fit: Some(*fit),
        histogram_bins,
    })
}

/// Partitions `subset` into (kept, rejected) by the strict `< i_th` rule,
/// preserving order.
pub fn partition_by_intensity(
    cloud: &PointCloud,
    threshold: &IntensityThreshold,
    subset: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let mut kept = Vec::with_capacity(subset.len());
    let mut rejected = Vec::new();
    for &i in subset {
        if cloud.points[i].intensity < threshold.i_th {
            rejected.push(i);
        } else {
            kept.push(i);
        }
    }
    (kept, rejected)
}

/// Cloud-level wrapper over [`partition_by_intensity`].
pub fn filter_by_intensity(
    cloud: &PointCloud,
    threshold: &IntensityThreshold,
) -> (PointCloud, PointCloud) {
    let all: Vec<usize> = (0..cloud.len()).collect();
    let (kept, rejected) = partition_by_intensity(cloud, threshold, &all);
    (cloud.gather(&kept), cloud.gather(&rejected))
}

/// Fixed-width histogram over `[min, max]` of the input values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges, ascending.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn intensity_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::parameter("bins", "must be at least 1"));
    }
    if values.is_empty() {
        return Err(Error::parameter("values", "histogram needs at least one value"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let mut idx = ((v - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1; // the maximum lands in the last bin
        }
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    }

    #[test]
    fn params_are_validated() {
        assert!(WeibullParams::new(1.0, 1.0, 0.0).is_ok());
        assert!(WeibullParams::new(0.0, 1.0, 0.0).is_err());
        assert!(WeibullParams::new(1.0, -1.0, 0.0).is_err());
        assert!(WeibullParams::new(1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn exponential_special_case() {
        // gamma = 1, alpha = 1 is Exp(1): pdf(1) = e^-1, median = ln 2.
        let p = WeibullParams::new(1.0, 1.0, 0.0).unwrap();
        assert_close(weibull_pdf(1.0, &p), (-1.0f64).exp(), 1e-15, "pdf");
        assert_close(weibull_quantile(0.5, &p).unwrap(), 2.0f64.ln(), 1e-15, "median");
        assert_eq!(weibull_pdf(-0.1, &p), 0.0);
        assert_eq!(weibull_cdf(-0.1, &p), 0.0);
    }

    #[test]
    fn quantile_edges() {
        let p = WeibullParams::new(2.0, 3.0, 1.5).unwrap();
        assert_eq!(weibull_quantile(0.0, &p).unwrap(), 1.5);
        assert!(weibull_quantile(1.0, &p).is_err());
        assert!(weibull_quantile(-0.1, &p).is_err());
    }

    #[test]
    fn quantile_matches_bisection_on_cdf() {
        // Independent route: invert the CDF numerically.
        let p = WeibullParams::new(1.0, 2.0, 0.0).unwrap();
        let target = 0.1;
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if weibull_cdf(mid, &p) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let bisected = 0.5 * (lo + hi);
        assert_close(bisected, 0.32459284597450156, 1e-9, "bisection");
        assert_close(
            weibull_quantile(target, &p).unwrap(),
            bisected,
            1e-9,
            "closed form vs bisection",
        );
    }

    #[test]
    fn cdf_quantile_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let params = WeibullParams::new(
                rng.gen_range(0.1..10.0),
                rng.gen_range(0.5..8.0),
                rng.gen_range(0.0..5.0),
            )
            .unwrap();
            let prob = rng.gen_range(0.0..0.999);
            let x = weibull_quantile(prob, &params).unwrap();
            assert_close(weibull_cdf(x, &params), prob, 1e-9, "cdf(quantile(p))");
        }
    }

    fn sample_weibull(rng: &mut ChaCha8Rng, params: &WeibullParams, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| weibull_quantile(rng.gen_range(0.0..1.0), params).unwrap())
            .collect()
    }

    #[test]
    fn fit_recovers_generating_parameters() {
        let truth = WeibullParams::new(0.772, 3.613, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let data = sample_weibull(&mut rng, &truth, 10_000);
        let fit = fit_weibull(&data, LocationPolicy::Zero).unwrap();
        assert!(
            (fit.alpha - truth.alpha).abs() / truth.alpha <= 0.05,
            "alpha {}",
            fit.alpha
        );
        assert!(
            (fit.gamma - truth.gamma).abs() / truth.gamma <= 0.05,
            "gamma {}",
            fit.gamma
        );
    }

    #[test]
    fn fit_agrees_with_log_likelihood_grid_search() {
        // Independent oracle: brute-force log-likelihood over a parameter
        // grid; the Newton fit must sit within one grid cell of the argmax.
        let truth = WeibullParams::new(1.4, 2.2, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = sample_weibull(&mut rng, &truth, 4_000);
        let loglik = |alpha: f64, gamma: f64| -> f64 {
            data.iter()
                .map(|&x| {
                    let z = x / alpha;
                    (gamma / alpha).ln() + (gamma - 1.0) * z.ln() - z.powf(gamma)
                })
                .sum()
        };
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let steps = 80;
        for i in 0..=steps {
            let alpha = 1.0 + 0.8 * i as f64 / steps as f64;
            for j in 0..=steps {
                let gamma = 1.6 + 1.2 * j as f64 / steps as f64;
                let ll = loglik(alpha, gamma);
                if ll > best.0 {
                    best = (ll, alpha, gamma);
                }
            }
        }
        let fit = fit_weibull(&data, LocationPolicy::Zero).unwrap();
        assert!((fit.alpha - best.1).abs() <= 0.02, "alpha {} vs {}", fit.alpha, best.1);
        assert!((fit.gamma - best.2).abs() <= 0.03, "gamma {} vs {}", fit.gamma, best.2);
        // And the Newton solution cannot score below the grid argmax.
        assert!(loglik(fit.alpha, fit.gamma) >= best.0 - 1e-9);
    }

    #[test]
    fn fit_rejects_small_and_degenerate_input() {
        let few = vec![1.0; 49];
        assert!(matches!(
            fit_weibull(&few, LocationPolicy::Zero),
            Err(FitError::TooFewSamples { got: 49, .. })
        ));
        let flat = vec![2.5; 200];
        assert!(matches!(
            fit_weibull(&flat, LocationPolicy::Zero),
            Err(FitError::Degenerate)
        ));
        // Nonpositive samples are dropped before counting.
        let mixed: Vec<f64> = (0..60).map(|i| if i < 20 { 0.0 } else { 1.0 + i as f64 }).collect();
        assert!(matches!(
            fit_weibull(&mixed, LocationPolicy::Zero),
            Err(FitError::TooFewSamples { got: 40, .. })
        ));
    }

    #[test]
    fn sample_min_location_policy_shifts_the_fit() {
        let truth = WeibullParams::new(1.0, 2.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = sample_weibull(&mut rng, &truth, 5_000);
        let fit = fit_weibull(&data, LocationPolicy::SampleMin).unwrap();
        assert!(fit.mu >= 3.0 && fit.mu <= 3.2, "mu {}", fit.mu);
        assert!((fit.gamma - 2.0).abs() <= 0.2, "gamma {}", fit.gamma);
    }

    #[test]
    fn threshold_respects_quantile_bounds() {
        let fit = WeibullParams::new(0.772, 3.613, 0.0).unwrap();
        let th = intensity_threshold(&fit, 0.15, 51).unwrap();
        assert_close(th.i_th, weibull_quantile(0.15, &fit).unwrap(), 0.0, "i_th");
        assert!(th.i_th >= fit.mu);
        assert!(intensity_threshold(&fit, 0.09, 51).is_err());
        assert!(intensity_threshold(&fit, 0.16, 51).is_err());
        let err = intensity_threshold(&fit, 0.5, 51).unwrap_err().to_string();
        assert!(err.contains("quantile_p"), "{err}");
    }

    #[test]
    fn reported_fit_fixtures_are_representable() {
        // Published fit rows: (alpha, gamma, mu, threshold, histogram bins).
        let rows = [
            (0.771938, 3.613051, 0.0, 1.873639, 51),
            (0.263573, 3.347880, 1.0, 5.276786, 28),
            (0.228001, 1.996240, 1.0, 4.614035, 57),
        ];
        for (alpha, gamma, mu, i_th, bins) in rows {
            let fit = WeibullParams::new(alpha, gamma, mu).unwrap();
            let th = IntensityThreshold {
                i_th,
                p: QUANTILE_P_DEFAULT,
                fit: Some(fit),
                histogram_bins: bins,
            };
            assert!(th.i_th >= fit.mu);
            assert!(th.histogram_bins >= 1);
        }
    }

    #[test]
    fn strict_threshold_keeps_boundary_points() {
        let cloud = PointCloud::new(vec![
            Point::new(1.0, 0.0, 0.0, 1.9999),
            Point::new(2.0, 0.0, 0.0, 2.0),
            Point::new(3.0, 0.0, 0.0, 2.0001),
        ]);
        let th = IntensityThreshold::default();
        let (kept, rejected) = filter_by_intensity(&cloud, &th);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected.points[0].intensity, 1.9999);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept.points[0].intensity, 2.0);
    }

    #[test]
    fn lower_threshold_never_rejects_more() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = PointCloud::new(
            (0..500)
                .map(|_| Point::new(0.0, 0.0, 0.0, rng.gen_range(0.0..10.0)))
                .collect(),
        );
        let all: Vec<usize> = (0..cloud.len()).collect();
        let mut previous = usize::MAX;
        for i_th in [8.0, 5.0, 3.0, 1.0, 0.0] {
            let th = IntensityThreshold::initial(i_th);
            let (_, rejected) = partition_by_intensity(&cloud, &th, &all);
            assert!(rejected.len() <= previous);
            previous = rejected.len();
        }
    }

    #[test]
    fn clip_keeps_low_fraction_of_range() {
        let values = vec![0.0, 1.0, 2.0, 3.0, 4.0, 10.0];
        let clipped = clip_low_fraction(&values, 0.25);
        // Range is [0, 10]; cut at 2.5.
        assert_eq!(clipped, vec![0.0, 1.0, 2.0]);
        assert_eq!(clip_low_fraction(&values, 1.0).len(), values.len());
    }

    #[test]
    fn histogram_counts_cover_all_values() {
        let values: Vec<f64> = (0..101).map(|i| i as f64 / 10.0).collect();
        let h = intensity_histogram(&values, 10).unwrap();
        assert_eq!(h.edges.len(), 11);
        assert_eq!(h.counts.iter().sum::<u64>(), 101);
        // The maximum value belongs to the last bin.
        assert!(h.counts[9] >= 1);
        assert!(intensity_histogram(&[], 5).is_err());
        assert!(intensity_histogram(&values, 0).is_err());
    }
}
