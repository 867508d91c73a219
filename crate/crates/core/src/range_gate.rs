//! Range gating: how far the filter pipeline must look, and how the cloud is
//! split into a close and a long segment.
//!
//! The outer radius `r_max` is sized from a longitudinal safe-distance model
//! of the carrying platform: worst-case stopping distance of the robot minus
//! best-case stopping distance of whatever is ahead. The inner radius `r_min`
//! bounds the dense close-range segment and is re-tuned at most once per
//! second so that segment stays within a fixed point budget.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Hard bounds on the gate radii (meters).
pub const R_MAX_BOUNDS: (f64, f64) = (10.0, 100.0);
pub const R_MIN_BOUNDS: (f64, f64) = (2.0, 10.0);
/// Default outer radius when no velocity envelope is supplied.
pub const R_MAX_DEFAULT: f64 = 30.0;
/// Default close-segment point budget.
pub const CLOSE_BUDGET_DEFAULT: usize = 30_000;

/// Inputs to the longitudinal safe-distance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RssConfig {
    /// Rear (own) vehicle speed, m/s.
    pub v_r: f64,
    /// Front obstacle speed, m/s; 0 for static obstacles.
    pub v_f: f64,
    /// Response time before braking begins, seconds.
    pub response_time: f64,
    /// Acceleration during the response window, m/s^2.
    pub a_accel: f64,
    /// Weakest braking the rear vehicle can guarantee, m/s^2 (> 0).
    pub a_min_brake: f64,
    /// Strongest braking credited to the front obstacle, m/s^2 (> 0).
    pub a_max_brake: f64,
    /// Optional (v_r, v_f) pairs swept when sizing `r_max`.
    pub envelope: Vec<(f64, f64)>,
}

impl Default for RssConfig {
    fn default() -> Self {
        RssConfig {
            v_r: 1.2,
            v_f: 0.0,
            response_time: 1.0,
            a_accel: 1.0,
            a_min_brake: 2.0,
            a_max_brake: 4.0,
            envelope: Vec::new(),
        }
    }
}

impl RssConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_r", self.v_r),
            ("v_f", self.v_f),
            ("response_time", self.response_time),
            ("a_accel", self.a_accel),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::parameter(name, format!("{v} must be >= 0 and finite")));
            }
        }
        for (name, v) in [("a_min_brake", self.a_min_brake), ("a_max_brake", self.a_max_brake)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::parameter(
                    name,
                    format!("{v}: braking deceleration must be positive"),
                ));
            }
        }
        for &(vr, vf) in &self.envelope {
            if !vr.is_finite() || vr < 0.0 || !vf.is_finite() || vf < 0.0 {
                return Err(Error::parameter(
                    "envelope",
                    format!("({vr}, {vf}): speeds must be >= 0 and finite"),
                ));
            }
        }
        Ok(())
    }
}

/// Worst-case stopping gap for the configured `(v_r, v_f)` pair, clamped at
/// zero when the obstacle outruns the platform.
pub fn longitudinal_safe_distance(cfg: &RssConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(safe_distance_for(cfg, cfg.v_r, cfg.v_f))
}

/// Same model for an explicit speed pair; assumes `cfg` is validated.
pub fn safe_distance_for(cfg: &RssConfig, v_r: f64, v_f: f64) -> f64 {
    let eta = cfg.response_time;
    let v_peak = v_r + eta * cfg.a_accel;
    let d = v_r * eta + 0.5 * cfg.a_accel * eta * eta + v_peak * v_peak / (2.0 * cfg.a_min_brake)
        - v_f * v_f / (2.0 * cfg.a_max_brake);
    d.max(0.0)
}

/// Outer gate radius: the worst safe distance over the velocity envelope,
/// clamped to [`R_MAX_BOUNDS`]. Without an envelope the default applies.
pub fn compute_r_max(cfg: &RssConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.envelope.is_empty() {
        return Ok(R_MAX_DEFAULT);
    }
    let worst = cfg
        .envelope
        .iter()
        .map(|&(vr, vf)| safe_distance_for(cfg, vr, vf))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(worst.clamp(R_MAX_BOUNDS.0, R_MAX_BOUNDS.1))
}

/// Mutable gate state carried across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeGateState {
    pub r_min: f64,
    pub r_max: f64,
    /// Close-segment point budget enforced by the 1 Hz controller.
    pub close_budget: usize,
    /// Timestamp of the last adaptive sample, seconds.
    pub last_sample: Option<f64>,
}

/// Result of one adaptive `r_min` sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RminSample {
    pub previous: f64,
    pub current: f64,
    /// Points at or under the previous r_min when the sample fired.
    pub close_count: usize,
}

impl RangeGateState {
    pub fn new(r_min: f64, r_max: f64, close_budget: usize) -> Result<Self> {
        Error::check_range("r_min", r_min, R_MIN_BOUNDS.0, R_MIN_BOUNDS.1)?;
        Error::check_range("r_max", r_max, R_MAX_BOUNDS.0, R_MAX_BOUNDS.1)?;
        if r_min >= r_max {
            return Err(Error::parameter(
                "r_min",
                format!("{r_min} must be below r_max = {r_max}"),
            ));
        }
        if close_budget == 0 {
            return Err(Error::parameter("close_budget", "must be at least 1"));
        }
        Ok(RangeGateState {
            r_min,
            r_max,
            close_budget,
            last_sample: None,
        })
    }

    /// Re-tunes `r_min` from the frame at hand, at most once per second.
    ///
    /// Over budget, the radius shrinks by the cube-root density rule and the
    /// shrink repeats against the same frame until the budget holds or the
    /// lower bound is reached. Under half budget, it grows toward the middle
    /// of the hysteresis band; the band `[budget/2, budget]` leaves the
    /// radius untouched. Returns `None` when the cadence suppresses the
    /// sample.
    pub fn update_r_min(&mut self, cloud: &PointCloud, now: f64) -> Option<RminSample> {
        if let Some(last) = self.last_sample {
            if now - last < 1.0 - 1e-9 {
                return None;
            }
        }
        self.last_sample = Some(now);
        let ranges: Vec<f64> = cloud.points.iter().map(|p| p.range()).collect();
        let count_close = |r: f64| ranges.iter().filter(|&&x| x <= r).count();

        let previous = self.r_min;
        let budget = self.close_budget as f64;
        let mut count = count_close(self.r_min);
        if (count as f64) < 0.5 * budget && self.r_min < R_MIN_BOUNDS.1 {
            // Aim for 75% of budget so the next sample lands inside the band.
            let target = 0.75 * budget / (count.max(1) as f64);
            self.r_min = (self.r_min * target.cbrt()).clamp(R_MIN_BOUNDS.0, R_MIN_BOUNDS.1);
            count = count_close(self.r_min);
        }
        let mut guard = 0;
        while count > self.close_budget && self.r_min > R_MIN_BOUNDS.0 && guard < 16 {
            let factor = (budget / count as f64).cbrt();
            self.r_min = (self.r_min * factor).clamp(R_MIN_BOUNDS.0, R_MIN_BOUNDS.1);
            count = count_close(self.r_min);
            guard += 1;
        }
        Some(RminSample {
            previous,
            current: self.r_min,
            close_count: count_close(previous),
        })
    }
}

/// Index partition produced by the range gate.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSplit {
    /// r <= r_min
    pub close: Vec<usize>,
    /// r_min < r <= r_max
    pub long: Vec<usize>,
    /// r > r_max
    pub dropped: Vec<usize>,
}

/// Splits by range against precomputed per-point ranges, preserving order.
pub fn split_indices(ranges: &[f64], r_min: f64, r_max: f64) -> RangeSplit {
    let mut split = RangeSplit {
        close: Vec::new(),
        long: Vec::new(),
        dropped: Vec::new(),
    };
    for (i, &r) in ranges.iter().enumerate() {
        if r <= r_min {
            split.close.push(i);
        } else if r <= r_max {
            split.long.push(i);
        } else {
            split.dropped.push(i);
        }
    }
    split
}

/// Splits a cloud into (close, long, dropped) sub-clouds.
pub fn split_by_range(
    cloud: &PointCloud,
    state: &RangeGateState,
) -> (PointCloud, PointCloud, PointCloud) {
    let ranges: Vec<f64> = cloud.points.iter().map(|p| p.range()).collect();
    let split = split_indices(&ranges, state.r_min, state.r_max);
    (
        cloud.gather(&split.close),
        cloud.gather(&split.long),
        cloud.gather(&split.dropped),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn safe_distance_matches_hand_computation() {
        // 1.2*1 + 0.5*1*1 + (1.2 + 1)^2/(2*2) - 0 = 2.91
        let cfg = RssConfig::default();
        let d = longitudinal_safe_distance(&cfg).unwrap();
        assert!((d - 2.91).abs() <= 1e-9, "{d}");

        let moving = RssConfig {
            v_f: 2.0,
            ..RssConfig::default()
        };
        // subtract 4/(2*4) = 0.5
        let d2 = longitudinal_safe_distance(&moving).unwrap();
        assert!((d2 - 2.41).abs() <= 1e-9, "{d2}");
    }

    #[test]
    fn safe_distance_clamps_to_zero() {
        let cfg = RssConfig {
            v_r: 0.0,
            a_accel: 0.0,
            v_f: 10.0,
            ..RssConfig::default()
        };
        assert_eq!(longitudinal_safe_distance(&cfg).unwrap(), 0.0);
    }

    #[test]
    fn zero_braking_is_a_parameter_error() {
        let cfg = RssConfig {
            a_min_brake: 0.0,
            ..RssConfig::default()
        };
        let err = longitudinal_safe_distance(&cfg).unwrap_err();
        assert!(err.to_string().contains("a_min_brake"), "{err}");
    }

    #[test]
    fn r_max_defaults_and_clamps() {
        assert_eq!(compute_r_max(&RssConfig::default()).unwrap(), 30.0);

        let slow = RssConfig {
            envelope: vec![(1.2, 0.0)],
            ..RssConfig::default()
        };
        // 2.91 m clamps up to the lower bound.
        assert_eq!(compute_r_max(&slow).unwrap(), 10.0);

        let fast = RssConfig {
            envelope: vec![(30.0, 0.0), (1.2, 0.0)],
            ..RssConfig::default()
        };
        // 30*1 + 0.5 + 31^2/4 = 270.75 clamps down to 100.
        assert_eq!(compute_r_max(&fast).unwrap(), 100.0);

        let mid = RssConfig {
            envelope: vec![(10.0, 0.0)],
            ..RssConfig::default()
        };
        let d = compute_r_max(&mid).unwrap();
        assert!((d - (10.0 + 0.5 + 121.0 / 4.0)).abs() <= 1e-9, "{d}");
    }

    #[test]
    fn state_invariants_are_enforced() {
        assert!(RangeGateState::new(5.0, 30.0, 30_000).is_ok());
        assert!(RangeGateState::new(1.0, 30.0, 30_000).is_err());
        assert!(RangeGateState::new(5.0, 101.0, 30_000).is_err());
        assert!(RangeGateState::new(10.0, 10.0, 30_000).is_err());
        assert!(RangeGateState::new(5.0, 30.0, 0).is_err());
    }

    fn ball_cloud(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    // Uniform in a ball via rejection sampling.
                    loop {
                        let x = rng.gen_range(-radius..radius);
                        let y = rng.gen_range(-radius..radius);
                        let z = rng.gen_range(-radius..radius);
                        if x * x + y * y + z * z <= radius * radius {
                            return Point::new(x, y, z, 1.0);
                        }
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn over_budget_shrinks_within_bounds_and_meets_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = ball_cloud(&mut rng, 50_000, 5.0);
        let mut state = RangeGateState::new(5.0, 30.0, 30_000).unwrap();
        let sample = state.update_r_min(&cloud, 0.0).unwrap();
        assert_eq!(sample.previous, 5.0);
        assert!(state.r_min < 5.0 && state.r_min >= 2.0, "r_min {}", state.r_min);
        let close = cloud.points.iter().filter(|p| p.range() <= state.r_min).count();
        assert!(close <= 30_000, "close segment still {close}");
    }

    #[test]
    fn under_half_budget_grows_toward_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cloud = ball_cloud(&mut rng, 1_000, 5.0);
        let mut state = RangeGateState::new(5.0, 30.0, 30_000).unwrap();
        state.update_r_min(&cloud, 0.0).unwrap();
        assert!(state.r_min > 5.0 && state.r_min <= 10.0, "r_min {}", state.r_min);
    }

    #[test]
    fn in_band_leaves_r_min_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cloud = ball_cloud(&mut rng, 20_000, 4.0);
        let mut state = RangeGateState::new(5.0, 30.0, 30_000).unwrap();
        let sample = state.update_r_min(&cloud, 0.0).unwrap();
        assert_eq!(sample.current, 5.0);
    }

    #[test]
    fn sampling_respects_one_hertz_cadence() {
        let cloud = ball_cloud(&mut ChaCha8Rng::seed_from_u64(8), 100, 4.0);
        let mut state = RangeGateState::new(5.0, 30.0, 30_000).unwrap();
        assert!(state.update_r_min(&cloud, 0.0).is_some());
        assert!(state.update_r_min(&cloud, 0.4).is_none());
        assert!(state.update_r_min(&cloud, 0.999).is_none());
        assert!(state.update_r_min(&cloud, 1.0).is_some());
        assert!(state.update_r_min(&cloud, 1.5).is_none());
    }

    #[test]
    fn split_boundaries_are_inclusive_close_and_max() {
        let cloud = PointCloud::new(vec![
            Point::new(5.0, 0.0, 0.0, 0.0),            // exactly r_min -> close
            Point::new(5.0 + 1e-9, 0.0, 0.0, 0.0),     // just above -> long
            Point::new(30.0, 0.0, 0.0, 0.0),           // exactly r_max -> long
            Point::new(30.000001, 0.0, 0.0, 0.0),      // beyond -> dropped
            Point::new(0.0, 0.0, 0.0, 0.0),            // origin -> close
        ]);
        let state = RangeGateState::new(5.0, 30.0, 30_000).unwrap();
        let (close, long, dropped) = split_by_range(&cloud, &state);
        assert_eq!(close.len(), 2);
        assert_eq!(long.len(), 2);
        assert_eq!(dropped.len(), 1);
        assert_eq!(close.points[0].x, 5.0);
        assert_eq!(dropped.points[0].x, 30.000001);
    }

    #[test]
    fn split_is_an_order_preserving_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = PointCloud::new(
            (0..500)
                .map(|_| {
                    Point::new(
                        rng.gen_range(-40.0..40.0),
                        rng.gen_range(-40.0..40.0),
                        rng.gen_range(-40.0..40.0),
                        0.0,
                    )
                })
                .collect(),
        );
        let ranges: Vec<f64> = cloud.points.iter().map(|p| p.range()).collect();
        let split = split_indices(&ranges, 5.0, 30.0);
        let mut all: Vec<usize> = split
            .close
            .iter()
            .chain(&split.long)
            .chain(&split.dropped)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..cloud.len()).collect::<Vec<_>>());
        assert!(split.close.windows(2).all(|w| w[0] < w[1]));
        assert!(split.long.windows(2).all(|w| w[0] < w[1]));
        assert!(split.dropped.windows(2).all(|w| w[0] < w[1]));
    }
}
