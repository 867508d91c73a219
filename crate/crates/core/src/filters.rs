//! Planar radius screen and classical outlier filters.
//!
//! The planar screen (`ror2d`) is the pipeline's last stage: points are
//! projected onto the XY plane for the neighbor query only, which makes
//! vertically extended structures (walls, poles, people) self-supporting
//! even when any single laser ring samples them sparsely. The classical
//! filters exist for side-by-side comparison in the evaluation harness and
//! are not part of the pipeline.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::spatial::{IndexDims, SpatialIndex};

pub const R_NN_DEFAULT: f64 = 0.15;
pub const R_NN_BOUNDS: (f64, f64) = (0.1, 0.16);
pub const K_NN_2D_DEFAULT: usize = 6;
pub const K_NN_2D_BOUNDS: (usize, usize) = (3, 6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ror2dConfig {
    /// Planar neighborhood radius in meters.
    pub r_nn: f64,
    /// Fewest planar neighbors an acceptable point may have.
    pub k_nn: usize,
}

impl Default for Ror2dConfig {
    fn default() -> Self {
        Ror2dConfig {
            r_nn: R_NN_DEFAULT,
            k_nn: K_NN_2D_DEFAULT,
        }
    }
}

impl Ror2dConfig {
    pub fn validate(&self) -> Result<()> {
        Error::check_range("r_nn", self.r_nn, R_NN_BOUNDS.0, R_NN_BOUNDS.1)?;
        Error::check_range_usize("k_nn", self.k_nn, K_NN_2D_BOUNDS.0, K_NN_2D_BOUNDS.1)?;
        Ok(())
    }
}

/// Splits `subset` by planar neighbor support: a point stays when at least
/// `k_nn` other subset members project within `r_nn` of it in the XY plane.
/// Z coordinates are ignored by the query but preserved in the output.
/// Returns `(kept, rejected)` original indices, both ascending.
///
/// `k_nn` may sit outside the configured loading bounds here; bounds are a
/// property of configuration files, not of the geometry.
pub fn ror2d_partition(
    cloud: &PointCloud,
    subset: &[usize],
    r_nn: f64,
    k_nn: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !r_nn.is_finite() || r_nn <= 0.0 {
        return Err(Error::parameter("r_nn", format!("{r_nn} must be > 0")));
    }
    let index = SpatialIndex::build_subset(cloud, subset, IndexDims::Two);
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for &id in subset {
        let count = index
            .radius_query_excluding(&cloud.points[id], id, r_nn)?
            .len();
        if count < k_nn {
            rejected.push(id);
        } else {
            kept.push(id);
        }
    }
    kept.sort_unstable();
    rejected.sort_unstable();
    Ok((kept, rejected))
}

/// Cloud-level wrapper over [`ror2d_partition`].
pub fn ror2d_filter(cloud: &PointCloud, cfg: &Ror2dConfig) -> Result<(PointCloud, PointCloud)> {
    cfg.validate()?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let (kept, rejected) = ror2d_partition(cloud, &all, cfg.r_nn, cfg.k_nn)?;
    Ok((cloud.gather(&kept), cloud.gather(&rejected)))
}

/// Classical comparison filters with their published shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "UPPERCASE")]
pub enum BaselineConfig {
    /// Fixed-radius neighbor count.
    Ror { radius: f64, min_neighbors: usize },
    /// Global statistics over mean k-nearest-neighbor distances.
    Sor { k: usize, std_multiplier: f64 },
    /// Radius grows with range to stay fair to distant surfaces.
    Dror {
        beta: f64,
        /// Sensor angular resolution in radians.
        angular_resolution: f64,
        min_search_radius: f64,
        min_neighbors: usize,
    },
    /// Statistics gate with a range-proportional threshold.
    Dsor {
        k: usize,
        std_multiplier: f64,
        range_scale: f64,
    },
    /// Intensity gate confined to a range bound.
    Lior {
        intensity_threshold: f64,
        range_bound: f64,
    },
}

impl BaselineConfig {
    /// Published-convention defaults for each variant.
    pub fn default_for(variant: &str) -> Result<Self> {
        match variant {
            "ROR" => Ok(BaselineConfig::Ror {
                radius: 0.15,
                min_neighbors: 3,
            }),
            "SOR" => Ok(BaselineConfig::Sor {
                k: 10,
                std_multiplier: 1.0,
            }),
            "DROR" => Ok(BaselineConfig::Dror {
                beta: 3.0,
                angular_resolution: 0.005,
                min_search_radius: 0.04,
                min_neighbors: 3,
            }),
            "DSOR" => Ok(BaselineConfig::Dsor {
                k: 10,
                std_multiplier: 1.0,
                range_scale: 0.05,
            }),
            "LIOR" => Ok(BaselineConfig::Lior {
                intensity_threshold: 2.0,
                range_bound: 30.0,
            }),
            other => Err(Error::Parameter {
                name: "variant",
                reason: format!("unknown filter variant {other:?}, expected one of ROR, SOR, DROR, DSOR, LIOR"),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Parameter {
                    name,
                    reason: format!("{v} must be > 0"),
                });
            }
            Ok(())
        };
        match *self {
            BaselineConfig::Ror {
                radius,
                min_neighbors,
            } => {
                positive("radius", radius)?;
                if min_neighbors == 0 {
                    return Err(Error::parameter("min_neighbors", "must be at least 1"));
                }
            }
            BaselineConfig::Sor { k, std_multiplier } => {
                if k == 0 {
                    return Err(Error::parameter("k", "must be at least 1"));
                }
                if !std_multiplier.is_finite() || std_multiplier < 0.0 {
                    return Err(Error::parameter(
                        "std_multiplier",
                        format!("{std_multiplier} must be >= 0"),
                    ));
                }
            }
            BaselineConfig::Dror {
                beta,
                angular_resolution,
                min_search_radius,
                min_neighbors,
            } => {
                positive("beta", beta)?;
                positive("angular_resolution", angular_resolution)?;
                positive("min_search_radius", min_search_radius)?;
                if min_neighbors == 0 {
                    return Err(Error::parameter("min_neighbors", "must be at least 1"));
                }
            }
            BaselineConfig::Dsor {
                k,
                std_multiplier,
                range_scale,
            } => {
                if k == 0 {
                    return Err(Error::parameter("k", "must be at least 1"));
                }
                if !std_multiplier.is_finite() || std_multiplier < 0.0 {
                    return Err(Error::parameter(
                        "std_multiplier",
                        format!("{std_multiplier} must be >= 0"),
                    ));
                }
                positive("range_scale", range_scale)?;
            }
            BaselineConfig::Lior {
                intensity_threshold,
                range_bound,
            } => {
                positive("intensity_threshold", intensity_threshold)?;
                positive("range_bound", range_bound)?;
            }
        }
        Ok(())
    }
}

/// Per-point mean distance to the `k` nearest neighbors (or to every other
/// point when fewer exist), plus the global sample mean and spread of those
/// means. Returns `(means, mu, sigma)`.
fn knn_mean_stats(cloud: &PointCloud, k: usize) -> (Vec<f64>, f64, f64) {
    let n = cloud.len();
    let index = SpatialIndex::build(cloud, IndexDims::Three);
    let mut means = Vec::with_capacity(n);
    for (i, p) in cloud.points.iter().enumerate() {
        let neighbors = index
            .knn_query_excluding(p, i, k.min(n.saturating_sub(1)).max(1))
            .unwrap_or_default();
        let mean = if neighbors.is_empty() {
            0.0
        } else {
            neighbors.iter().map(|&(_, d)| d).sum::<f64>() / neighbors.len() as f64
        };
        means.push(mean);
    }
    let mu = means.iter().sum::<f64>() / n.max(1) as f64;
    let sigma = if n >= 2 {
        (means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (means, mu, sigma)
}

/// True at index `i` when the filter rejects point `i`.
pub fn baseline_reject_mask(cloud: &PointCloud, cfg: &BaselineConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let n = cloud.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mask = match *cfg {
        BaselineConfig::Ror {
            radius,
            min_neighbors,
        } => {
            let index = SpatialIndex::build(cloud, IndexDims::Three);
            cloud
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    index
                        .radius_query_excluding(p, i, radius)
                        .map(|ns| ns.len() < min_neighbors)
                })
                .collect::<Result<Vec<bool>>>()?
        }
        BaselineConfig::Sor { k, std_multiplier } => {
            let (means, mu, sigma) = knn_mean_stats(cloud, k);
            let threshold = mu + std_multiplier * sigma;
            means.iter().map(|&m| m > threshold).collect()
        }
        BaselineConfig::Dror {
            beta,
            angular_resolution,
            min_search_radius,
            min_neighbors,
        } => {
            let index = SpatialIndex::build(cloud, IndexDims::Three);
            cloud
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let radius = (beta * p.range() * angular_resolution).max(min_search_radius);
                    index
                        .radius_query_excluding(p, i, radius)
                        .map(|ns| ns.len() < min_neighbors)
                })
                .collect::<Result<Vec<bool>>>()?
        }
        BaselineConfig::Dsor {
            k,
            std_multiplier,
            range_scale,
        } => {
            let (means, mu, sigma) = knn_mean_stats(cloud, k);
            let global = mu + std_multiplier * sigma;
            means
                .iter()
                .zip(&cloud.points)
                .map(|(&m, p)| m > global * range_scale * p.range())
                .collect()
        }
        BaselineConfig::Lior {
            intensity_threshold,
            range_bound,
        } => cloud
            .points
            .iter()
            .map(|p| p.intensity < intensity_threshold && p.range() < range_bound)
            .collect(),
    };
    Ok(mask)
}

/// Partitions `cloud` with one classical filter: `(kept, rejected)`.
pub fn baseline_filter(
    cloud: &PointCloud,
    cfg: &BaselineConfig,
) -> Result<(PointCloud, PointCloud)> {
    let mask = baseline_reject_mask(cloud, cfg)?;
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (i, flag) in mask.iter().enumerate() {
        if *flag {
            rejected.push(i);
        } else {
            kept.push(i);
        }
    }
    Ok((cloud.gather(&kept), cloud.gather(&rejected)))
}
