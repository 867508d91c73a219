//! Two-phase density screen for airborne-particle returns.
//!
//! Solid surfaces produce tight, repeatable neighborhoods; returns from
//! suspended particles are sparse and loosely packed. Phase one drops every
//! point with too few companions inside a small fixed ball. Phase two
//! compares each remaining point's mean neighbor distance against a
//! threshold that scales with measured range, so the screen stays fair to
//! distant surfaces that are geometrically thinner on the sensor grid.
//!
//! The statistics behind phase two come from the frame itself: the mean and
//! spread of the mean neighbor distances over all phase-one survivors. A
//! frame without enough survivors cannot support those statistics; that
//! case is reported as [`StatsError`] and callers are expected to pass the
//! frame through untouched rather than guess.

use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud};
use crate::error::Error;
use crate::spatial::{IndexDims, SpatialIndex};

pub const QUERY_RADIUS_DEFAULT: f64 = 0.05;
pub const K_MIN_DEFAULT: usize = 6;
pub const K_MIN_BOUNDS: (usize, usize) = (3, 6);
pub const C_TH_DEFAULT: f64 = 0.4;
pub const C_TH_BOUNDS: (f64, f64) = (0.1, 0.5);
pub const R_TH_DEFAULT: f64 = 0.45;
pub const R_TH_BOUNDS: (f64, f64) = (0.2, 0.6);

/// Fewest phase-one survivors for which the spread statistic is defined.
pub const MIN_SURVIVORS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoscorConfig {
    /// Neighborhood ball radius in meters.
    pub query_radius: f64,
    /// Phase one removes every point with `k_min` or fewer neighbors; a
    /// point must exceed this count to survive. Known as `K_nn` in
    /// configuration files.
    pub k_min: usize,
    /// Weight of the spread term in the global threshold.
    pub c_th: f64,
    /// Range-proportionality factor for the per-point threshold.
    pub r_th: f64,
}

impl Default for DoscorConfig {
    fn default() -> Self {
        DoscorConfig {
            query_radius: QUERY_RADIUS_DEFAULT,
            k_min: K_MIN_DEFAULT,
            c_th: C_TH_DEFAULT,
            r_th: R_TH_DEFAULT,
        }
    }
}

impl DoscorConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !self.query_radius.is_finite() || self.query_radius <= 0.0 {
            return Err(Error::parameter(
                "query_radius",
                format!("{} must be > 0", self.query_radius),
            ));
        }
        Error::check_range_usize("K_nn", self.k_min, K_MIN_BOUNDS.0, K_MIN_BOUNDS.1)?;
        Error::check_range("c_th", self.c_th, C_TH_BOUNDS.0, C_TH_BOUNDS.1)?;
        Error::check_range("r_th", self.r_th, R_TH_BOUNDS.0, R_TH_BOUNDS.1)?;
        Ok(())
    }
}

/// The frame could not support the phase-two statistics.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error(
        "density screen needs at least {needed} well-supported points, got {got}; \
         frame should pass through unfiltered"
    )]
    InsufficientSurvivors { needed: usize, got: usize },
}

/// Per-point neighborhood statistics over one subset.
///
/// All vectors run parallel to the `subset` slice handed to
/// [`neighbor_stats`]. `mean_dists[i]` is 0 when `counts[i]` is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborStats {
    pub counts: Vec<usize>,
    pub mean_dists: Vec<f64>,
    /// `counts[i] > k_min`: the point survives phase one.
    pub survivor_mask: Vec<bool>,
    pub survivors: usize,
    /// Mean of survivor mean-neighbor-distances.
    pub mu: f64,
    /// Sample standard deviation (n - 1) of survivor mean distances.
    pub sigma: f64,
}

impl NeighborStats {
    /// Global distance threshold `mu + sigma * c_th`.
    pub fn static_threshold(&self, c_th: f64) -> f64 {
        self.mu + self.sigma * c_th
    }
}

/// Counts neighbors and mean neighbor distances inside the fixed ball for
/// every subset member, then folds the survivors into `mu`/`sigma`.
///
/// Neighborhoods are evaluated within the subset only (a rejected stage
/// upstream cannot lend support here), and a point never counts itself.
/// `cfg` must already satisfy [`DoscorConfig::validate`]; the pipeline
/// validates once at construction.
/// Neighbor count and mean neighbor distance inside a ball of `radius`
/// for each subset member, self excluded. Mean is 0 for lonely points.
pub fn neighborhood_counts(
    cloud: &PointCloud,
    subset: &[usize],
    radius: f64,
) -> crate::error::Result<(Vec<usize>, Vec<f64>)> {
    let index = SpatialIndex::build_subset(cloud, subset, IndexDims::Three);
    let mut counts = Vec::with_capacity(subset.len());
    let mut mean_dists = Vec::with_capacity(subset.len());
    for &id in subset {
        let p = &cloud.points[id];
        let neighbors = index.radius_query_excluding(p, id, radius)?;
        let count = neighbors.len();
        let mean = if count == 0 {
            0.0
        } else {
            let sum: f64 = neighbors
                .iter()
                .map(|&j| distance(p, &cloud.points[j]))
                .sum();
            sum / count as f64
        };
        counts.push(count);
        mean_dists.push(mean);
    }
    Ok((counts, mean_dists))
}

pub fn neighbor_stats(
    cloud: &PointCloud,
    subset: &[usize],
    cfg: &DoscorConfig,
) -> Result<NeighborStats, StatsError> {
    let (counts, mean_dists) = neighborhood_counts(cloud, subset, cfg.query_radius)
        .expect("query_radius validated positive");
    let mut survivor_mask = Vec::with_capacity(subset.len());
    let mut survivors = 0usize;
    let mut mu_acc = 0.0;
    for (&count, &mean) in counts.iter().zip(&mean_dists) {
        let survives = count > cfg.k_min;
        if survives {
            survivors += 1;
            mu_acc += mean;
        }
        survivor_mask.push(survives);
    }
    if survivors < MIN_SURVIVORS {
        return Err(StatsError::InsufficientSurvivors {
            needed: MIN_SURVIVORS,
            got: survivors,
        });
    }
    let mu = mu_acc / survivors as f64;
    let ss: f64 = survivor_mask
        .iter()
        .zip(&mean_dists)
        .filter(|(&m, _)| m)
        .map(|(_, &d)| (d - mu) * (d - mu))
        .sum();
    let sigma = (ss / (survivors - 1) as f64).sqrt();
    Ok(NeighborStats {
        counts,
        mean_dists,
        survivor_mask,
        survivors,
        mu,
        sigma,
    })
}

fn distance(a: &Point, b: &Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Result of the two-phase screen over one subset. Index vectors hold
/// original cloud indices, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DoscorOutcome {
    pub kept: Vec<usize>,
    /// Rejected for lacking neighbors.
    pub phase1_rejected: Vec<usize>,
    /// Rejected for a loose neighborhood relative to range.
    pub phase2_rejected: Vec<usize>,
    pub stats: Option<NeighborStats>,
    /// True when statistics were unavailable and the subset passed through.
    pub degraded: bool,
}

/// Runs both phases. Fails with [`StatsError`] when the frame cannot
/// support the phase-two statistics; see
/// [`doscor_partition_or_passthrough`] for the absorbing variant.
pub fn doscor_partition(
    cloud: &PointCloud,
    subset: &[usize],
    cfg: &DoscorConfig,
) -> Result<DoscorOutcome, StatsError> {
    let stats = neighbor_stats(cloud, subset, cfg)?;
    let s_th = stats.static_threshold(cfg.c_th);
    let mut kept = Vec::new();
    let mut phase1 = Vec::new();
    let mut phase2 = Vec::new();
    for (slot, &id) in subset.iter().enumerate() {
        if !stats.survivor_mask[slot] {
            phase1.push(id);
            continue;
        }
        let d_th = s_th * cloud.points[id].range() * cfg.r_th;
        if stats.mean_dists[slot] > d_th {
            phase2.push(id);
        } else {
            kept.push(id);
        }
    }
    kept.sort_unstable();
    phase1.sort_unstable();
    phase2.sort_unstable();
    Ok(DoscorOutcome {
        kept,
        phase1_rejected: phase1,
        phase2_rejected: phase2,
        stats: Some(stats),
        degraded: false,
    })
}

/// Like [`doscor_partition`], but absorbs the statistics failure by keeping
/// the whole subset and flagging the outcome as degraded. This is the
/// behavior a streaming pipeline wants: a sparse frame must not vanish.
pub fn doscor_partition_or_passthrough(
    cloud: &PointCloud,
    subset: &[usize],
    cfg: &DoscorConfig,
) -> DoscorOutcome {
    match doscor_partition(cloud, subset, cfg) {
        Ok(outcome) => outcome,
        Err(StatsError::InsufficientSurvivors { .. }) => {
            let mut kept = subset.to_vec();
            kept.sort_unstable();
            DoscorOutcome {
                kept,
                phase1_rejected: Vec::new(),
                phase2_rejected: Vec::new(),
                stats: None,
                degraded: true,
            }
        }
    }
}

/// Cloud-level wrapper: `(kept, rejected, outcome)` with rejected phases
/// merged. Pass-through semantics on sparse frames.
pub fn doscor_filter(
    cloud: &PointCloud,
    cfg: &DoscorConfig,
) -> crate::error::Result<(PointCloud, PointCloud, DoscorOutcome)> {
    cfg.validate()?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let outcome = doscor_partition_or_passthrough(cloud, &all, cfg);
    let mut rejected: Vec<usize> = outcome
        .phase1_rejected
        .iter()
        .chain(&outcome.phase2_rejected)
        .copied()
        .collect();
    rejected.sort_unstable();
    Ok((cloud.gather(&outcome.kept), cloud.gather(&rejected), outcome))
}
