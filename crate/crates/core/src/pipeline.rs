//! Frame orchestration: range gating, branch split, the filter stages, and
//! the once-per-second adaptive samplers.
//!
//! A frame travels through up to five stages. The range gate drops
//! everything beyond `r_max` and splits the rest at `r_min` into a close
//! and a long branch. Both branches pass the intensity gate and the
//! scan-line smoother; the neighbor-statistics stages (the density screen
//! and the planar screen) run on the long branch only, where point spacing
//! carries the discriminating signal and the closeness budget is not at
//! risk. Kept points from both branches merge back into one cloud; every
//! rejected point is retained and emitted alongside it.
//!
//! Stage failures never drop a frame: a stage that cannot run leaves its
//! input untouched and flags itself as degraded in the report.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::cloud::PointCloud;
use crate::doscor::{self, DoscorConfig};
use crate::error::{Error, Result};
use crate::filters::{self, Ror2dConfig};
use crate::intensity::{
    self, IntensityThreshold, LocationPolicy, WeibullParams, HISTOGRAM_BINS_DEFAULT,
    INITIAL_THRESHOLD, QUANTILE_P_BOUNDS, QUANTILE_P_DEFAULT,
};
use crate::range_gate::{
    self, RangeGateState, RssConfig, CLOSE_BUDGET_DEFAULT, R_MAX_BOUNDS, R_MAX_DEFAULT,
    R_MIN_BOUNDS,
};
use crate::sg::{RingBucketing, Segment, SgConfig};

/// Which stages run. The range gate itself is structural and always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StagePlan {
    pub intensity: bool,
    pub sg: bool,
    pub doscor: bool,
    pub ror2d: bool,
}

impl Default for StagePlan {
    fn default() -> Self {
        StagePlan {
            intensity: true,
            sg: true,
            doscor: true,
            ror2d: true,
        }
    }
}

/// Complete parameter set for one pipeline instance.
///
/// The flat keys carry the canonical parameter names used in configuration
/// files (`r_max`, `r_min`, `I_th`, `r_d`, `K_nn`, `r_th`, `c_th`, `r_nn`);
/// everything else is plumbing with spelled-out names. Unknown keys are
/// rejected at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Outer filtration radius, meters. Ignored when `rss` is present.
    pub r_max: f64,
    /// Initial close/long split radius, meters.
    pub r_min: f64,
    /// Initial intensity rejection threshold.
    #[serde(rename = "I_th")]
    pub i_th: f64,
    /// Smoothing activation ranges (close, long), meters.
    pub r_d: (f64, f64),
    /// Density-screen neighbor count gate.
    #[serde(rename = "K_nn")]
    pub k_nn: usize,
    /// Density-screen range-proportionality factor.
    pub r_th: f64,
    /// Density-screen spread weight.
    pub c_th: f64,
    /// Planar-screen neighborhood radius, meters.
    pub r_nn: f64,
    /// Quantile at which refits place the intensity threshold.
    pub quantile_p: f64,
    /// Close-segment point budget for the adaptive split controller.
    pub close_budget: usize,
    /// Fraction of the intensity range kept (from the bottom) when
    /// refitting the intensity model.
    pub clip_fraction: f64,
    /// Location handling for intensity refits.
    pub location_policy: LocationPolicy,
    /// Diagnostic histogram resolution.
    pub histogram_bins: usize,
    /// Density-screen ball radius, meters.
    pub doscor_query_radius: f64,
    /// Planar-screen neighbor count gate (independent of `K_nn`).
    pub ror2d_k_nn: usize,
    /// Velocity envelope; when present, `r_max` is derived from it.
    pub rss: Option<RssConfig>,
    /// Scan-line smoother settings. The activation ranges inside are
    /// overridden by `r_d`.
    pub sg: SgConfig,
    pub stages: StagePlan,
    /// Enable the 1 Hz split-radius controller on timestamped frames.
    pub adaptive_r_min: bool,
    /// Enable the 1 Hz intensity-threshold refit on timestamped frames.
    pub adaptive_intensity: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            r_max: R_MAX_DEFAULT,
            r_min: 5.0,
            i_th: INITIAL_THRESHOLD,
            r_d: (4.0, 20.0),
            k_nn: doscor::K_MIN_DEFAULT,
            r_th: doscor::R_TH_DEFAULT,
            c_th: doscor::C_TH_DEFAULT,
            r_nn: filters::R_NN_DEFAULT,
            quantile_p: QUANTILE_P_DEFAULT,
            close_budget: CLOSE_BUDGET_DEFAULT,
            clip_fraction: 0.25,
            location_policy: LocationPolicy::Zero,
            histogram_bins: HISTOGRAM_BINS_DEFAULT,
            doscor_query_radius: doscor::QUERY_RADIUS_DEFAULT,
            ror2d_k_nn: filters::K_NN_2D_DEFAULT,
            rss: None,
            sg: SgConfig::default(),
            stages: StagePlan::default(),
            adaptive_r_min: true,
            adaptive_intensity: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        Error::check_range("r_max", self.r_max, R_MAX_BOUNDS.0, R_MAX_BOUNDS.1)?;
        Error::check_range("r_min", self.r_min, R_MIN_BOUNDS.0, R_MIN_BOUNDS.1)?;
        if !self.i_th.is_finite() || self.i_th <= 0.0 {
            return Err(Error::parameter(
                "I_th",
                format!("{} must be > 0", self.i_th),
            ));
        }
        // The activation pair lives between the split radius and the outer
        // gate: [r_min - 1, r_max - 10].
        let (lo, hi) = (self.r_min - 1.0, self.r_max - 10.0);
        for v in [self.r_d.0, self.r_d.1] {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::parameter(
                    "r_d",
                    format!("{v} outside permitted interval [{lo}, {hi}]"),
                ));
            }
        }
        if self.r_d.0 > self.r_d.1 {
            return Err(Error::parameter(
                "r_d",
                format!("close value {} must not exceed long value {}", self.r_d.0, self.r_d.1),
            ));
        }
        Error::check_range(
            "quantile_p",
            self.quantile_p,
            QUANTILE_P_BOUNDS.0,
            QUANTILE_P_BOUNDS.1,
        )?;
        Error::check_range_usize(
            "ror2d_k_nn",
            self.ror2d_k_nn,
            filters::K_NN_2D_BOUNDS.0,
            filters::K_NN_2D_BOUNDS.1,
        )?;
        if !self.clip_fraction.is_finite()
            || self.clip_fraction <= 0.0
            || self.clip_fraction > 1.0
        {
            return Err(Error::parameter(
                "clip_fraction",
                format!("{} outside permitted interval (0, 1]", self.clip_fraction),
            ));
        }
        if self.histogram_bins == 0 {
            return Err(Error::parameter("histogram_bins", "must be at least 1"));
        }
        if self.close_budget == 0 {
            return Err(Error::parameter("close_budget", "must be at least 1"));
        }
        // K_nn, r_th, c_th via the density-screen rules; r_nn and the 2D
        // count via the planar-screen rules.
        self.doscor_config().validate()?;
        self.ror2d_config().validate()?;
        self.effective_sg().validate()?;
        if let Some(rss) = &self.rss {
            rss.validate()?;
        }
        Ok(())
    }

    pub fn doscor_config(&self) -> DoscorConfig {
        DoscorConfig {
            query_radius: self.doscor_query_radius,
            k_min: self.k_nn,
            c_th: self.c_th,
            r_th: self.r_th,
        }
    }

    pub fn ror2d_config(&self) -> Ror2dConfig {
        Ror2dConfig {
            r_nn: self.r_nn,
            k_nn: self.ror2d_k_nn,
        }
    }

    /// Smoother settings with the activation pair taken from `r_d`.
    pub fn effective_sg(&self) -> SgConfig {
        SgConfig {
            activation_range_close: self.r_d.0,
            activation_range_long: self.r_d.1,
            ..self.sg.clone()
        }
    }

    /// Outer radius in force: derived from the velocity envelope when one
    /// is configured, otherwise the configured `r_max`.
    pub fn effective_r_max(&self) -> Result<f64> {
        match &self.rss {
            Some(rss) => range_gate::compute_r_max(rss),
            None => Ok(self.r_max),
        }
    }
}

/// Mutable state threaded across frames of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub gate: RangeGateState,
    pub threshold: IntensityThreshold,
    /// Timestamp of the last intensity refit attempt, seconds.
    pub last_fit: Option<f64>,
}

impl PipelineState {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let r_max = cfg.effective_r_max()?;
        Ok(PipelineState {
            gate: RangeGateState::new(cfg.r_min, r_max, cfg.close_budget)?,
            threshold: IntensityThreshold {
                i_th: cfg.i_th,
                p: cfg.quantile_p,
                fit: None,
                histogram_bins: cfg.histogram_bins,
            },
            last_fit: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    RangeGate,
    Intensity,
    Sg,
    Doscor,
    Ror2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    /// Whole-frame stages (the range gate).
    Frame,
    Close,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: StageKind,
    pub branch: BranchKind,
    pub input: usize,
    pub kept: usize,
    pub rejected: usize,
    pub millis: f64,
    /// The stage could not run and passed its input through.
    pub degraded: bool,
}

/// Adaptive quantities in force after the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSnapshot {
    pub r_min: f64,
    pub r_max: f64,
    pub i_th: f64,
    pub quantile_p: f64,
    pub fit: Option<WeibullParams>,
    /// An adaptive sample fired after this frame (1 Hz cadence).
    pub updated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub frame_id: String,
    pub timestamp: Option<f64>,
    pub input_points: usize,
    pub filtered_points: usize,
    pub rejected_points: usize,
    /// Points beyond the outer gate, a subset of `rejected_points`.
    pub dropped_far: usize,
    pub stages: Vec<StageReport>,
    pub end_to_end_ms: f64,
    pub adaptive: AdaptiveSnapshot,
}

/// One processed frame: the partition plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub filtered: PointCloud,
    pub rejected: PointCloud,
    /// Original indices of kept points, ascending.
    pub kept_indices: Vec<usize>,
    /// Original indices of rejected points, ascending.
    pub rejected_indices: Vec<usize>,
    pub report: FilterReport,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs one frame through the enabled stages and, when the frame carries a
/// timestamp, lets the 1 Hz samplers retune `r_min` and the intensity
/// threshold afterwards (visible from the next frame on).
pub fn process_frame(
    cloud: &PointCloud,
    cfg: &PipelineConfig,
    state: &mut PipelineState,
) -> Result<FrameResult> {
    let frame_start = Instant::now();
    let n = cloud.len();
    let mut stages = Vec::new();
    let mut rejects: Vec<usize> = Vec::new();

    // Stage 1: outer gate and close/long split, on ranges.
    let t = Instant::now();
    let spherical = cloud.to_spherical();
    let ranges: Vec<f64> = spherical.iter().map(|s| s.r).collect();
    let split = range_gate::split_indices(&ranges, state.gate.r_min, state.gate.r_max);
    let dropped_far = split.dropped.len();
    rejects.extend_from_slice(&split.dropped);
    stages.push(StageReport {
        stage: StageKind::RangeGate,
        branch: BranchKind::Frame,
        input: n,
        kept: split.close.len() + split.long.len(),
        rejected: dropped_far,
        millis: ms_since(t),
        degraded: false,
    });

    let mut close = split.close;
    let mut long = split.long;

    // Stage 2: intensity gate on both branches.
    if cfg.stages.intensity {
        for (subset, branch) in [(&mut close, BranchKind::Close), (&mut long, BranchKind::Long)] {
            let t = Instant::now();
            let input = subset.len();
            let (kept, rejected) = intensity::partition_by_intensity(cloud, &state.threshold, subset);
            rejects.extend_from_slice(&rejected);
            stages.push(StageReport {
                stage: StageKind::Intensity,
                branch,
                input,
                kept: kept.len(),
                rejected: rejected.len(),
                millis: ms_since(t),
                degraded: false,
            });
            *subset = kept;
        }
    }

    // Stage 3: scan-line smoother on both branches, branch-specific
    // activation range and window preset.
    if cfg.stages.sg {
        let sg_cfg = cfg.effective_sg();
        for (subset, branch, segment) in [
            (&mut close, BranchKind::Close, Segment::Close),
            (&mut long, BranchKind::Long, Segment::Long),
        ] {
            let t = Instant::now();
            let input = subset.len();
            match crate::sg::sg_partition(&spherical, subset, &sg_cfg, segment, RingBucketing::Auto)
            {
                Ok(outcome) => {
                    rejects.extend_from_slice(&outcome.rejected);
                    stages.push(StageReport {
                        stage: StageKind::Sg,
                        branch,
                        input,
                        kept: outcome.kept.len(),
                        rejected: outcome.rejected.len(),
                        millis: ms_since(t),
                        degraded: false,
                    });
                    *subset = outcome.kept;
                }
                Err(_) => {
                    stages.push(StageReport {
                        stage: StageKind::Sg,
                        branch,
                        input,
                        kept: input,
                        rejected: 0,
                        millis: ms_since(t),
                        degraded: true,
                    });
                }
            }
        }
    }

    // Stage 4: density screen, long branch only. An empty branch skips the
    // call so the sparse-frame degradation flag stays meaningful.
    if cfg.stages.doscor {
        let t = Instant::now();
        let input = long.len();
        let (kept, rejected, degraded) = if long.is_empty() {
            (Vec::new(), 0, false)
        } else {
            let outcome =
                doscor::doscor_partition_or_passthrough(cloud, &long, &cfg.doscor_config());
            let nrej = outcome.phase1_rejected.len() + outcome.phase2_rejected.len();
            rejects.extend_from_slice(&outcome.phase1_rejected);
            rejects.extend_from_slice(&outcome.phase2_rejected);
            (outcome.kept, nrej, outcome.degraded)
        };
        stages.push(StageReport {
            stage: StageKind::Doscor,
            branch: BranchKind::Long,
            input,
            kept: kept.len(),
            rejected,
            millis: ms_since(t),
            degraded,
        });
        long = kept;
    }

    // Stage 5: planar screen, long branch only.
    if cfg.stages.ror2d {
        let t = Instant::now();
        let input = long.len();
        match filters::ror2d_partition(cloud, &long, cfg.r_nn, cfg.ror2d_k_nn) {
            Ok((kept, rejected)) => {
                rejects.extend_from_slice(&rejected);
                stages.push(StageReport {
                    stage: StageKind::Ror2d,
                    branch: BranchKind::Long,
                    input,
                    kept: kept.len(),
                    rejected: rejected.len(),
                    millis: ms_since(t),
                    degraded: false,
                });
                long = kept;
            }
            Err(_) => {
                stages.push(StageReport {
                    stage: StageKind::Ror2d,
                    branch: BranchKind::Long,
                    input,
                    kept: input,
                    rejected: 0,
                    millis: ms_since(t),
                    degraded: true,
                });
            }
        }
    }

    // Merge branches and close the partition.
    let mut kept_indices = close;
    kept_indices.extend_from_slice(&long);
    kept_indices.sort_unstable();
    rejects.sort_unstable();
    debug_assert_eq!(kept_indices.len() + rejects.len(), n, "partition lost points");

    // Adaptive samplers, after the frame so the current output is a pure
    // function of the state the frame arrived with.
    let mut updated = false;
    if let Some(now) = cloud.timestamp {
        if cfg.adaptive_r_min {
            updated |= state.gate.update_r_min(cloud, now).is_some();
        }
        if cfg.adaptive_intensity {
            let due = match state.last_fit {
                Some(last) => now - last >= 1.0 - 1e-9,
                None => true,
            };
            if due {
                state.last_fit = Some(now);
                updated = true;
                let intensities: Vec<f64> =
                    cloud.points.iter().map(|p| p.intensity).collect();
                let sample = intensity::clip_low_fraction(&intensities, cfg.clip_fraction);
                if let Ok(fit) = intensity::fit_weibull(&sample, cfg.location_policy) {
                    if let Ok(th) =
                        intensity::intensity_threshold(&fit, cfg.quantile_p, cfg.histogram_bins)
                    {
                        state.threshold = th;
                    }
                }
            }
        }
    }

    let report = FilterReport {
        frame_id: cloud.frame_id.clone(),
        timestamp: cloud.timestamp,
        input_points: n,
        filtered_points: kept_indices.len(),
        rejected_points: rejects.len(),
        dropped_far,
        stages,
        end_to_end_ms: ms_since(frame_start),
        adaptive: AdaptiveSnapshot {
            r_min: state.gate.r_min,
            r_max: state.gate.r_max,
            i_th: state.threshold.i_th,
            quantile_p: state.threshold.p,
            fit: state.threshold.fit,
            updated,
        },
    };
    Ok(FrameResult {
        filtered: cloud.gather(&kept_indices),
        rejected: cloud.gather(&rejects),
        kept_indices,
        rejected_indices: rejects,
        report,
    })
}

/// Processes a timestamped frame sequence, threading adaptive state.
///
/// Timestamps must be present and strictly increasing.
pub fn run_stream(
    frames: &[PointCloud],
    cfg: &PipelineConfig,
) -> Result<Vec<FrameResult>> {
    let mut state = PipelineState::new(cfg)?;
    let mut out = Vec::with_capacity(frames.len());
    let mut prev: Option<f64> = None;
    for (i, frame) in frames.iter().enumerate() {
        let ts = frame.timestamp.ok_or_else(|| {
            Error::Stream(format!("frame {i} ({}) carries no timestamp", frame.frame_id))
        })?;
        if let Some(p) = prev {
            if ts <= p {
                return Err(Error::Stream(format!(
                    "frame {i} timestamp {ts} does not advance past {p}"
                )));
            }
        }
        prev = Some(ts);
        out.push(process_frame(frame, cfg, &mut state)?);
    }
    Ok(out)
}
