//! Synthetic labeled scenes, detection scoring, and latency benchmarks.
//!
//! Scenes model a boxed corridor seen from a sensor at the origin looking
//! down +x: floor, ceiling, two side walls, and an end cap, sampled on a
//! regular grid with small radial jitter, plus spherical low-intensity
//! blobs suspended in the interior. Wall points carry bright, roughly
//! normal intensities; blob points draw from a heavy-low-tail model of
//! scattering returns. Every point is labeled at birth, which makes the
//! filter's rejection set directly scoreable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::intensity::{weibull_quantile, WeibullParams};
use crate::pipeline::{process_frame, PipelineConfig, PipelineState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    Environment,
    Aerosol,
}

/// A point cloud with ground truth attached, index-aligned with `cloud`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub labels: Vec<PointLabel>,
}

impl LabeledCloud {
    pub fn count(&self, label: PointLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Corridor geometry. The sensor sits at the origin; the corridor runs
/// along +x with its cross-section centered on the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunnelSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Nominal grid pitch of the wall sampling, meters.
    pub wall_spacing: f64,
}

/// One spherical aerosol cloudlet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub count: usize,
    /// 0 samples the ball uniformly; larger values concentrate points
    /// toward the center.
    pub density_falloff: f64,
}

impl BlobSpec {
    /// Mean inter-point spacing under the uniform-volume approximation.
    pub fn mean_spacing(&self) -> f64 {
        let volume = 4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3);
        (volume / self.count as f64).cbrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub tunnel: TunnelSpec,
    pub blobs: Vec<BlobSpec>,
    /// Wall intensity model: normal with this mean and spread, floored at
    /// a small positive value.
    pub env_intensity_mean: f64,
    pub env_intensity_spread: f64,
    /// Blob intensity model, sampled by inverse transform.
    pub aerosol_intensity: WeibullParams,
    /// Radial jitter applied to wall points, meters (one sigma).
    pub range_noise_sigma: f64,
    /// Every blob's mean spacing must be at least this multiple of the
    /// wall pitch, keeping the two populations separable by density.
    pub aerosol_spacing_ratio: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// The reference indoor scene: a 28 m corridor whose far corner stays
    /// inside the default 30 m gate, walls at roughly 0.105 m pitch, and
    /// three blobs totalling 2980 points at about twice that spacing.
    pub fn desk_default(seed: u64) -> Self {
        SceneSpec {
            tunnel: TunnelSpec {
                length: 28.0,
                width: 4.0,
                height: 3.0,
                wall_spacing: 0.105,
            },
            blobs: vec![
                BlobSpec {
                    center: [9.0, 0.0, 0.0],
                    radius: 1.5,
                    count: 1450,
                    density_falloff: 0.0,
                },
                BlobSpec {
                    center: [14.0, 0.4, -0.1],
                    radius: 1.3,
                    count: 950,
                    density_falloff: 0.0,
                },
                BlobSpec {
                    center: [19.0, -0.6, 0.2],
                    radius: 1.1,
                    count: 580,
                    density_falloff: 0.0,
                },
            ],
            env_intensity_mean: 20.0,
            env_intensity_spread: 5.0,
            aerosol_intensity: WeibullParams {
                alpha: 0.772,
                gamma: 3.613,
                mu: 0.0,
            },
            range_noise_sigma: 0.01,
            aerosol_spacing_ratio: 2.0,
            seed,
        }
    }

    /// A scene scaled to approximately `total` points, same geometry as
    /// [`SceneSpec::desk_default`]. Wall pitch is solved from the corridor
    /// surface area; blob sizes follow so their spacing stays just above
    /// twice the pitch.
    pub fn sized(total: usize, seed: u64) -> Self {
        let mut spec = Self::desk_default(seed);
        let t = &spec.tunnel;
        let area =
            2.0 * t.length * t.width + 2.0 * t.length * t.height + t.width * t.height;
        let env_target = (0.925 * total as f64).max(16.0);
        let spacing = (area / env_target).sqrt();
        spec.tunnel.wall_spacing = spacing;

        let aerosol_target = total as f64 - env_target;
        let blob_spacing = 1.025 * spec.aerosol_spacing_ratio * spacing;
        let fractions = [0.487, 0.319, 0.194];
        const RADIUS_CAP: f64 = 1.9;
        for (blob, f) in spec.blobs.iter_mut().zip(fractions) {
            let count = (f * aerosol_target).round().max(1.0);
            let mut radius = blob_spacing * (3.0 * count / (4.0 * std::f64::consts::PI)).cbrt();
            let count = if radius > RADIUS_CAP {
                radius = RADIUS_CAP;
                let volume = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
                (volume / blob_spacing.powi(3)).floor().max(1.0)
            } else {
                count
            };
            blob.radius = radius;
            blob.count = count as usize;
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tunnel;
        for (name, v) in [
            ("tunnel.length", t.length),
            ("tunnel.width", t.width),
            ("tunnel.height", t.height),
            ("tunnel.wall_spacing", t.wall_spacing),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Eval(format!("{name} must be positive, got {v}")));
            }
        }
        if t.wall_spacing * 2.0 > t.width.min(t.height) {
            return Err(Error::Eval(format!(
                "wall spacing {} too coarse for a {} x {} cross-section",
                t.wall_spacing, t.width, t.height
            )));
        }
        if !self.env_intensity_mean.is_finite() || self.env_intensity_mean <= 0.0 {
            return Err(Error::Eval("environment intensity mean must be positive".into()));
        }
        if !self.env_intensity_spread.is_finite() || self.env_intensity_spread < 0.0 {
            return Err(Error::Eval("environment intensity spread must be >= 0".into()));
        }
        if !self.range_noise_sigma.is_finite() || self.range_noise_sigma < 0.0 {
            return Err(Error::Eval("range noise sigma must be >= 0".into()));
        }
        if !self.aerosol_spacing_ratio.is_finite() || self.aerosol_spacing_ratio < 1.0 {
            return Err(Error::Eval("aerosol spacing ratio must be >= 1".into()));
        }
        WeibullParams::new(
            self.aerosol_intensity.alpha,
            self.aerosol_intensity.gamma,
            self.aerosol_intensity.mu,
        )?;
        for (i, blob) in self.blobs.iter().enumerate() {
            if !blob.radius.is_finite() || blob.radius <= 0.0 {
                return Err(Error::Eval(format!("blob {i}: radius must be positive")));
            }
            if blob.count == 0 {
                return Err(Error::Eval(format!("blob {i}: count must be at least 1")));
            }
            if !blob.density_falloff.is_finite() || blob.density_falloff < 0.0 {
                return Err(Error::Eval(format!("blob {i}: falloff must be >= 0")));
            }
            let spacing = blob.mean_spacing();
            let floor = self.aerosol_spacing_ratio * t.wall_spacing;
            if spacing < floor {
                return Err(Error::Eval(format!(
                    "blob {i}: mean spacing {spacing:.4} under the separation floor \
                     {floor:.4} ({}x wall pitch {})",
                    self.aerosol_spacing_ratio, t.wall_spacing
                )));
            }
        }
        Ok(())
    }
}

/// Evenly spread cell centers across `[lo, lo + extent)`, as close to
/// `spacing` apart as an integer cell count allows.
fn grid_centers(lo: f64, extent: f64, spacing: f64) -> Vec<f64> {
    let n = (extent / spacing).round().max(1.0) as usize;
    let step = extent / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * step).collect()
}

/// Builds the labeled scene. Identical specs (including the seed) yield
/// bit-identical clouds; points appear walls first, blobs after, so label
/// runs are contiguous.
pub fn generate_scene(spec: &SceneSpec) -> Result<LabeledCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let env_noise = Normal::new(0.0, spec.range_noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Eval(format!("range noise model: {e}")))?;
    let env_intensity = Normal::new(spec.env_intensity_mean, spec.env_intensity_spread.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Eval(format!("intensity model: {e}")))?;

    let t = &spec.tunnel;
    let (hw, hh) = (t.width / 2.0, t.height / 2.0);
    let xs = grid_centers(0.0, t.length, t.wall_spacing);
    let ys = grid_centers(-hw, t.width, t.wall_spacing);
    let zs = grid_centers(-hh, t.height, t.wall_spacing);

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let push_env = |rng: &mut ChaCha8Rng, x: f64, y: f64, z: f64,
                    points: &mut Vec<Point>, labels: &mut Vec<PointLabel>| {
        let intensity = env_intensity.sample(rng).max(0.01);
        let r = (x * x + y * y + z * z).sqrt();
        let scale = if r > 0.0 {
            (r + env_noise.sample(rng)).max(0.0) / r
        } else {
            1.0
        };
        points.push(Point::new(x * scale, y * scale, z * scale, intensity));
        labels.push(PointLabel::Environment);
    };

    // Floor and ceiling, then both side walls, then the end cap. The
    // sensor end stays open.
    for &z in [-hh, hh].iter() {
        for &x in &xs {
            for &y in &ys {
                push_env(&mut rng, x, y, z, &mut points, &mut labels);
            }
        }
    }
    for &y in [-hw, hw].iter() {
        for &x in &xs {
            for &z in &zs {
                push_env(&mut rng, x, y, z, &mut points, &mut labels);
            }
        }
    }
    for &y in &ys {
        for &z in &zs {
            push_env(&mut rng, t.length, y, z, &mut points, &mut labels);
        }
    }

    for blob in &spec.blobs {
        let exponent = (1.0 + blob.density_falloff) / 3.0;
        for _ in 0..blob.count {
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let d = blob.radius * rng.gen::<f64>().powf(exponent);
            let intensity = weibull_quantile(rng.gen::<f64>(), &spec.aerosol_intensity)?;
            points.push(Point::new(
                blob.center[0] + d * dir[0],
                blob.center[1] + d * dir[1],
                blob.center[2] + d * dir[2],
                intensity,
            ));
            labels.push(PointLabel::Aerosol);
        }
    }

    let mut cloud = PointCloud::new(points);
    cloud.frame_id = format!("scene-{}", spec.seed);
    Ok(LabeledCloud { cloud, labels })
}

/// Confusion counts and the derived rates for one frame, treating aerosol
/// as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Environment points rejected, as a fraction of all environment.
    pub false_positive_rate: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores a rejection set against ground truth. Indices must be unique
/// and in range; rejecting an aerosol point is a true positive.
pub fn score(rejected: &[usize], truth: &LabeledCloud) -> Result<EvalMetrics> {
    let n = truth.cloud.len();
    if truth.labels.len() != n {
        return Err(Error::Eval(format!(
            "labels ({}) do not align with points ({n})",
            truth.labels.len()
        )));
    }
    let mut is_rejected = vec![false; n];
    for &i in rejected {
        if i >= n {
            return Err(Error::Eval(format!(
                "rejected index {i} out of range for {n} points"
            )));
        }
        if is_rejected[i] {
            return Err(Error::Eval(format!("rejected index {i} appears twice")));
        }
        is_rejected[i] = true;
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (i, &label) in truth.labels.iter().enumerate() {
        match (label, is_rejected[i]) {
            (PointLabel::Aerosol, true) => tp += 1,
            (PointLabel::Aerosol, false) => fneg += 1,
            (PointLabel::Environment, true) => fp += 1,
            (PointLabel::Environment, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        true_negatives: tn,
        precision,
        recall,
        f1,
        false_positive_rate: ratio(fp, fp + tn),
    })
}

/// One benchmark measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// Actual generated frame size, points.
    pub size: usize,
    pub reps: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    /// Sustained frame rate implied by the median, frames per second.
    pub hz: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Times `process_frame` on freshly generated scenes of the requested
/// sizes. Each repetition starts from fresh pipeline state so no run can
/// warm a later one. At least 10 repetitions are required for the median
/// and p95 to mean anything.
pub fn benchmark(
    sizes: &[usize],
    cfg: &PipelineConfig,
    reps: usize,
) -> Result<Vec<BenchRow>> {
    if reps < 10 {
        return Err(Error::Eval(format!(
            "benchmark needs at least 10 repetitions, got {reps}"
        )));
    }
    if sizes.is_empty() {
        return Err(Error::Eval("benchmark needs at least one size".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for (k, &size) in sizes.iter().enumerate() {
        let scene = generate_scene(&SceneSpec::sized(size, 7 + k as u64))?;
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut state = PipelineState::new(cfg)?;
            let start = Instant::now();
            let result = process_frame(&scene.cloud, cfg, &mut state)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            assert_eq!(
                result.filtered.len() + result.rejected.len(),
                scene.cloud.len()
            );
            times.push(elapsed);
        }
        times.sort_by(f64::total_cmp);
        let median = percentile(&times, 0.5);
        rows.push(BenchRow {
            size: scene.cloud.len(),
            reps,
            median_ms: median,
            p95_ms: percentile(&times, 0.95),
            hz: 1e3 / median,
        });
    }
    Ok(rows)
}

/// Renders benchmark rows as CSV with a header line.
pub fn benchmark_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("size,reps,median_ms,p95_ms,hz\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.2}\n",
            r.size, r.reps, r.median_ms, r.p95_ms, r.hz
        ));
    }
    out
}
