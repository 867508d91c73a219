//! Point cloud containers and Cartesian/spherical conversion.
//!
//! Coordinates are sensor-frame meters: x forward, y left, z up, the sensor
//! at the origin. Spherical coordinates use the polar convention: `r` is the
//! Euclidean range, `theta` the inclination measured from the +z axis
//! (`[0, pi]`), `phi` the azimuth measured from +x toward +y (`(-pi, pi]`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Sensor reflectance, non-negative.
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point { x, y, z, intensity }
    }

    /// Euclidean range from the sensor origin.
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Range of the projection onto the x-y plane.
    pub fn planar_range(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    /// Range (meters), >= 0.
    pub r: f64,
    /// Inclination from +z (radians), in `[0, pi]`.
    pub theta: f64,
    /// Azimuth from +x (radians), in `(-pi, pi]`.
    pub phi: f64,
}

/// Converts a point to spherical coordinates.
///
/// The origin maps to `(0, 0, 0)` by convention; points on the +z axis get
/// `phi = 0`.
pub fn cart_to_sph(p: &Point) -> SphericalPoint {
    let rho = p.x * p.x + p.y * p.y;
    let r = (rho + p.z * p.z).sqrt();
    if r == 0.0 {
        return SphericalPoint {
            r: 0.0,
            theta: 0.0,
            phi: 0.0,
        };
    }
    let theta = rho.sqrt().atan2(p.z);
    let mut phi = p.y.atan2(p.x);
    // atan2 returns -pi for y = -0.0, x < 0; fold onto the (-pi, pi] branch.
    if phi <= -PI {
        phi = PI;
    }
    SphericalPoint { r, theta, phi }
}

/// Inverse of [`cart_to_sph`]; intensity is not part of the mapping.
pub fn sph_to_cart(s: &SphericalPoint) -> (f64, f64, f64) {
    let sin_theta = s.theta.sin();
    (
        s.r * sin_theta * s.phi.cos(),
        s.r * sin_theta * s.phi.sin(),
        s.r * s.theta.cos(),
    )
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point>,
    /// Free-form sensor/frame identifier carried through filtering.
    pub frame_id: String,
    /// Acquisition time in seconds, if known. Streams require it.
    pub timestamp: Option<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud {
            points,
            frame_id: String::new(),
            timestamp: None,
        }
    }

    pub fn with_timestamp(points: Vec<Point>, timestamp: f64) -> Self {
        PointCloud {
            points,
            frame_id: String::new(),
            timestamp: Some(timestamp),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Spherical coordinates for every point, aligned by index.
    pub fn to_spherical(&self) -> Vec<SphericalPoint> {
        self.points.iter().map(cart_to_sph).collect()
    }

    /// New cloud containing `indices` in the given order, carrying over
    /// frame id and timestamp.
    pub fn gather(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            frame_id: self.frame_id.clone(),
            timestamp: self.timestamp,
        }
    }
}
