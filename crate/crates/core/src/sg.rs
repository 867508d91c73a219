//! Savitzky-Golay residual screening along scan lines.
//!
//! Ranges on one laser ring vary smoothly with azimuth when they come from
//! solid surfaces; aerosol returns and ranging glitches break that
//! smoothness. Each ring is treated as an ordered sequence, a least-squares
//! polynomial is evaluated at every interior sample via fixed convolution
//! weights, and samples whose residual exceeds a tolerance are rejected.
//! The filter flags points, it does not move them, unless the replacement
//! flag is set explicitly.

use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, SphericalPoint};
use crate::error::{Error, Result};

/// Degree/half-window pair for one segment preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgParams {
    pub poly_degree: usize,
    /// Window length is `2 * half_window + 1`.
    pub half_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgConfig {
    /// Preset for the close segment: cubic over 9 samples.
    pub close: SgParams,
    /// Preset for the long segment: quadratic over 15 samples.
    pub long: SgParams,
    /// Residual magnitude (meters) above which a sample is rejected.
    pub residual_tolerance: f64,
    /// Activation ranges: only points at or beyond these ranges take part.
    pub activation_range_close: f64,
    pub activation_range_long: f64,
    /// Derive the window length per sequence instead of using the presets.
    pub use_optimal_window: bool,
    /// Largest half-window the optimal-window rule may pick.
    pub max_half_window: usize,
    /// Replace kept ranges with their smoothed values (off: detect only).
    pub replace_with_smoothed: bool,
    /// Inclination spread (radians) above which a cluster is not treated as
    /// a scan ring and passes through unfiltered.
    pub ring_span_limit: f64,
}

impl Default for SgConfig {
    fn default() -> Self {
        SgConfig {
            close: SgParams {
                poly_degree: 3,
                half_window: 4,
            },
            long: SgParams {
                poly_degree: 2,
                half_window: 7,
            },
            residual_tolerance: 0.3,
            activation_range_close: 4.0,
            activation_range_long: 20.0,
            use_optimal_window: false,
            max_half_window: 12,
            replace_with_smoothed: false,
            ring_span_limit: 0.02,
        }
    }
}

impl SgConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("sg.close", self.close), ("sg.long", self.long)] {
            if 2 * p.half_window + 1 <= p.poly_degree {
                return Err(Error::Parameter {
                    name,
                    reason: format!(
                        "window {} must exceed polynomial degree {}",
                        2 * p.half_window + 1,
                        p.poly_degree
                    ),
                });
            }
        }
        if !self.residual_tolerance.is_finite() || self.residual_tolerance <= 0.0 {
            return Err(Error::parameter(
                "residual_tolerance",
                format!("{} must be > 0", self.residual_tolerance),
            ));
        }
        for (name, v) in [
            ("r_d (close)", self.activation_range_close),
            ("r_d (long)", self.activation_range_long),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parameter {
                    name,
                    reason: format!("{v} must be >= 0"),
                });
            }
        }
        if self.max_half_window == 0 {
            return Err(Error::parameter("max_half_window", "must be at least 1"));
        }
        if !self.ring_span_limit.is_finite() || self.ring_span_limit <= 0.0 {
            return Err(Error::parameter(
                "ring_span_limit",
                format!("{} must be > 0", self.ring_span_limit),
            ));
        }
        Ok(())
    }

    pub fn params_for(&self, segment: Segment) -> SgParams {
        match segment {
            Segment::Close => self.close,
            Segment::Long => self.long,
        }
    }

    pub fn activation_range(&self, segment: Segment) -> f64 {
        match segment {
            Segment::Close => self.activation_range_close,
            Segment::Long => self.activation_range_long,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Close,
    Long,
}

/// Solves a small dense linear system in place (Gaussian elimination with
/// partial pivoting). Matrices here are (degree+1)^2 moment matrices.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::parameter("window", "singular normal equations"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Convolution weights that evaluate the least-squares polynomial of degree
/// `poly_degree` at the center of a window of `2 * half_window + 1` samples.
///
/// Derived from the normal equations of the design matrix `A[i][k] = i^k`,
/// `i in [-m, m]`: the weights are the first row of `(A^T A)^-1 A^T`.
pub fn sg_coefficients(poly_degree: usize, half_window: usize) -> Result<Vec<f64>> {
    let window = 2 * half_window + 1;
    if window <= poly_degree {
        return Err(Error::parameter(
            "half_window",
            format!("window {window} must exceed polynomial degree {poly_degree}"),
        ));
    }
    let m = half_window as i64;
    let n = poly_degree;
    // Moment matrix G[j][k] = sum_i i^(j+k).
    let mut moments = vec![0.0; 2 * n + 1];
    for i in -m..=m {
        let mut power = 1.0;
        let x = i as f64;
        for entry in moments.iter_mut() {
            *entry += power;
            power *= x;
        }
    }
    let g: Vec<Vec<f64>> = (0..=n)
        .map(|j| (0..=n).map(|k| moments[j + k]).collect())
        .collect();
    let mut e0 = vec![0.0; n + 1];
    e0[0] = 1.0;
    let c = solve_dense(g, e0)?;
    // weight_i = sum_k c_k i^k, by symmetry of the moment matrix.
    Ok((-m..=m)
        .map(|i| {
            let x = i as f64;
            let mut power = 1.0;
            let mut acc = 0.0;
            for &ck in &c {
                acc += ck * power;
                power *= x;
            }
            acc
        })
        .collect())
}

/// Least-squares polynomial coefficients `b_0..b_n` fitted to one window of
/// samples at positions `-m..=m`. Window length must be odd and exceed the
/// degree.
pub fn fit_window_poly(poly_degree: usize, values: &[f64]) -> Result<Vec<f64>> {
    let window = values.len();
    if window % 2 == 0 || window <= poly_degree {
        return Err(Error::parameter(
            "values",
            format!("window length {window} must be odd and exceed degree {poly_degree}"),
        ));
    }
    let m = (window / 2) as i64;
    let n = poly_degree;
    let mut g = vec![vec![0.0; n + 1]; n + 1];
    let mut rhs = vec![0.0; n + 1];
    for (idx, i) in (-m..=m).enumerate() {
        let x = i as f64;
        let mut powers = vec![1.0; 2 * n + 1];
        for k in 1..=2 * n {
            powers[k] = powers[k - 1] * x;
        }
        for j in 0..=n {
            rhs[j] += powers[j] * values[idx];
            for k in 0..=n {
                g[j][k] += powers[j + k];
            }
        }
    }
    solve_dense(g, rhs)
}

/// Sum of squared residuals between a window of samples and a polynomial
/// `b_0 + b_1 i + ...` evaluated at positions `-m..=m`.
pub fn sg_cost(values: &[f64], coeffs: &[f64]) -> Result<f64> {
    if values.len() % 2 == 0 || values.is_empty() {
        return Err(Error::parameter(
            "values",
            format!("window length {} must be odd", values.len()),
        ));
    }
    let m = (values.len() / 2) as i64;
    let mut cost = 0.0;
    for (idx, i) in (-m..=m).enumerate() {
        let x = i as f64;
        let mut power = 1.0;
        let mut p = 0.0;
        for &b in coeffs {
            p += b * power;
            power *= x;
        }
        let r = p - values[idx];
        cost += r * r;
    }
    Ok(cost)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Estimated half-window minimizing the smoothing/noise trade-off.
///
/// The closed-form optimum balances noise variance `sigma2` against the
/// mean squared `(degree+2)`-th derivative of the sequence, estimated with
/// finite differences over at most `max_samples` positions. The window is
/// rounded to the nearest odd integer, floored at the smallest odd value
/// exceeding `poly_degree + 1`, and capped at `2 * max_half_window + 1`.
/// A flat sequence (zero curvature estimate) yields the cap.
pub fn optimal_window(
    poly_degree: usize,
    sigma2: f64,
    ranges: &[f64],
    max_samples: Option<usize>,
    max_half_window: usize,
) -> Result<usize> {
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(Error::parameter("sigma2", format!("{sigma2} must be > 0")));
    }
    if max_half_window == 0 {
        return Err(Error::parameter("max_half_window", "must be at least 1"));
    }
    let order = poly_degree + 2;
    if ranges.len() < order + 1 {
        return Err(Error::parameter(
            "ranges",
            format!(
                "need at least {} samples to estimate the order-{order} derivative, got {}",
                order + 1,
                ranges.len()
            ),
        ));
    }
    // Repeated first differences give the order-n finite difference.
    let mut diffs = ranges.to_vec();
    for _ in 0..order {
        diffs = diffs.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let take = max_samples.unwrap_or(diffs.len()).min(diffs.len()).max(1);
    let nu: f64 = diffs.iter().take(take).map(|d| d * d).sum::<f64>() / take as f64;

    let floor_window = if (poly_degree + 2) % 2 == 1 {
        poly_degree + 2
    } else {
        poly_degree + 3
    };
    let cap_window = 2 * max_half_window + 1;
    if nu == 0.0 {
        return Ok((cap_window.max(floor_window) - 1) / 2);
    }
    let n = poly_degree;
    let numerator =
        2.0 * (n as f64 + 2.0) * factorial(2 * n + 3).powi(2) / factorial(n + 1).powi(2) * sigma2
            / nu;
    let w = numerator.powf(1.0 / (2.0 * n as f64 + 5.0));
    // Nearest odd integer.
    let rounded = 2.0 * ((w - 1.0) / 2.0).round() + 1.0;
    let window = (rounded.max(1.0) as usize).clamp(floor_window, cap_window.max(floor_window));
    Ok((window - 1) / 2)
}

/// One laser ring ordered by azimuth; holds original cloud indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSequence {
    pub ring: usize,
    /// Original cloud indices in azimuth order.
    pub indices: Vec<usize>,
    pub ranges: Vec<f64>,
    pub azimuths: Vec<f64>,
    /// Inclination spread of the cluster; wide clusters are not scan rings.
    pub theta_span: f64,
}

/// How points are grouped into rings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RingBucketing {
    /// Split sorted inclinations at gaps well above the typical
    /// consecutive gap (20x the median, floored at 1e-9 rad so rings of
    /// numerically coincident inclination stay together).
    Auto,
    /// Split at inclination gaps larger than the given width (radians).
    Width(f64),
}

/// Groups `subset` into scan sequences by inclination, each ordered by
/// azimuth (ties by original index). Deterministic for a given input.
pub fn build_scan_sequences(
    spherical: &[SphericalPoint],
    subset: &[usize],
    bucketing: RingBucketing,
) -> Vec<ScanSequence> {
    if subset.is_empty() {
        return Vec::new();
    }
    let mut by_theta: Vec<usize> = subset.to_vec();
    by_theta.sort_by(|&a, &b| {
        spherical[a]
            .theta
            .total_cmp(&spherical[b].theta)
            .then(a.cmp(&b))
    });

    let threshold = match bucketing {
        RingBucketing::Width(w) => w.max(1e-12),
        RingBucketing::Auto => {
            // The median must see the near-zero gaps between same-ring
            // points; otherwise separated rings set their own scale and
            // no gap ever looks large.
            let mut gaps: Vec<f64> = by_theta
                .windows(2)
                .map(|w| spherical[w[1]].theta - spherical[w[0]].theta)
                .collect();
            if gaps.is_empty() {
                f64::INFINITY
            } else {
                gaps.sort_by(f64::total_cmp);
                let median = gaps[gaps.len() / 2];
                (20.0 * median).max(1e-9)
            }
        }
    };

    let mut sequences = Vec::new();
    let mut start = 0;
    for i in 1..=by_theta.len() {
        let boundary = i == by_theta.len()
            || spherical[by_theta[i]].theta - spherical[by_theta[i - 1]].theta > threshold;
        if !boundary {
            continue;
        }
        let mut cluster: Vec<usize> = by_theta[start..i].to_vec();
        cluster.sort_by(|&a, &b| {
            spherical[a]
                .phi
                .total_cmp(&spherical[b].phi)
                .then(a.cmp(&b))
        });
        let theta_span =
            spherical[by_theta[i - 1]].theta - spherical[by_theta[start]].theta;
        sequences.push(ScanSequence {
            ring: sequences.len(),
            ranges: cluster.iter().map(|&j| spherical[j].r).collect(),
            azimuths: cluster.iter().map(|&j| spherical[j].phi).collect(),
            indices: cluster,
            theta_span,
        });
        start = i;
    }
    sequences
}

/// Outcome of one smoothing pass over a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SgOutcome {
    /// Kept original indices, ascending.
    pub kept: Vec<usize>,
    /// Rejected original indices, ascending.
    pub rejected: Vec<usize>,
    /// Smoothed replacement coordinates, only when replacement is enabled.
    pub replacements: Vec<(usize, f64)>,
    /// Sequences that were actually convolved (long enough, ring-like).
    pub sequences_smoothed: usize,
}

/// Screens `subset` against per-ring polynomial fits.
///
/// Only points at or beyond the segment's activation range participate;
/// everything else passes through. Within each eligible sequence the first
/// and last `half_window` samples are never rejected, and sequences shorter
/// than one window (or wider than the ring span limit) pass through whole.
pub fn sg_partition(
    spherical: &[SphericalPoint],
    subset: &[usize],
    cfg: &SgConfig,
    segment: Segment,
    bucketing: RingBucketing,
) -> Result<SgOutcome> {
    cfg.validate()?;
    let params = cfg.params_for(segment);
    let activation = cfg.activation_range(segment);

    let mut eligible = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for &i in subset {
        if spherical[i].r >= activation {
            eligible.push(i);
        } else {
            kept.push(i);
        }
    }

    let mut rejected = Vec::new();
    let mut replacements = Vec::new();
    let mut sequences_smoothed = 0;
    for seq in build_scan_sequences(spherical, &eligible, bucketing) {
        let len = seq.indices.len();
        let (degree, half) = if cfg.use_optimal_window {
            // Pilot noise estimate: median squared residual of the preset
            // window; falls back to the preset on short sequences.
            match pilot_sigma2(&seq.ranges, params) {
                Some(sigma2) if sigma2 > 0.0 => {
                    let m = optimal_window(
                        params.poly_degree,
                        sigma2,
                        &seq.ranges,
                        None,
                        cfg.max_half_window,
                    )
                    .unwrap_or(params.half_window);
                    (params.poly_degree, m)
                }
                _ => (params.poly_degree, params.half_window),
            }
        } else {
            (params.poly_degree, params.half_window)
        };
        let window = 2 * half + 1;
        if len < window || seq.theta_span > cfg.ring_span_limit {
            kept.extend_from_slice(&seq.indices);
            continue;
        }
        sequences_smoothed += 1;
        let weights = sg_coefficients(degree, half)?;
        for pos in 0..len {
            if pos < half || pos + half >= len {
                kept.push(seq.indices[pos]);
                continue;
            }
            let mut smoothed = 0.0;
            for (w_idx, &w) in weights.iter().enumerate() {
                smoothed += w * seq.ranges[pos + w_idx - half];
            }
            if (seq.ranges[pos] - smoothed).abs() > cfg.residual_tolerance {
                rejected.push(seq.indices[pos]);
            } else {
                kept.push(seq.indices[pos]);
                if cfg.replace_with_smoothed {
                    replacements.push((seq.indices[pos], smoothed));
                }
            }
        }
    }
    kept.sort_unstable();
    rejected.sort_unstable();
    replacements.sort_unstable_by_key(|&(i, _)| i);
    Ok(SgOutcome {
        kept,
        rejected,
        replacements,
        sequences_smoothed,
    })
}

fn pilot_sigma2(ranges: &[f64], params: SgParams) -> Option<f64> {
    let window = 2 * params.half_window + 1;
    if ranges.len() < window {
        return None;
    }
    let weights = sg_coefficients(params.poly_degree, params.half_window).ok()?;
    let mut sq: Vec<f64> = (params.half_window..ranges.len() - params.half_window)
        .map(|pos| {
            let mut smoothed = 0.0;
            for (w_idx, &w) in weights.iter().enumerate() {
                smoothed += w * ranges[pos + w_idx - params.half_window];
            }
            let r = ranges[pos] - smoothed;
            r * r
        })
        .collect();
    if sq.is_empty() {
        return None;
    }
    sq.sort_by(f64::total_cmp);
    Some(sq[sq.len() / 2])
}

/// Cloud-level wrapper over [`sg_partition`].
pub fn sg_smooth_and_reject(
    cloud: &PointCloud,
    cfg: &SgConfig,
    segment: Segment,
) -> Result<(PointCloud, PointCloud)> {
    let spherical = cloud.to_spherical();
    let all: Vec<usize> = (0..cloud.len()).collect();
    let outcome = sg_partition(&spherical, &all, cfg, segment, RingBucketing::Auto)?;
    let mut kept_cloud = cloud.gather(&outcome.kept);
    if cfg.replace_with_smoothed && !outcome.replacements.is_empty() {
        use std::collections::HashMap;
        let smoothed: HashMap<usize, f64> = outcome.replacements.iter().copied().collect();
        for (slot, &orig) in outcome.kept.iter().enumerate() {
            if let Some(&r) = smoothed.get(&orig) {
                let s = SphericalPoint {
                    r,
                    ..spherical[orig]
                };
                let (x, y, z) = crate::cloud::sph_to_cart(&s);
                kept_cloud.points[slot].x = x;
                kept_cloud.points[slot].y = y;
                kept_cloud.points[slot].z = z;
            }
        }
    }
    Ok((kept_cloud, cloud.gather(&outcome.rejected)))
}
