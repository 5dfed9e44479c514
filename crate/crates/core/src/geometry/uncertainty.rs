//! Triangulation angles, first-order 3D uncertainty and ground resolution.

use nalgebra::{Matrix2x3, Matrix3, Point3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::camera::{Camera, CameraId};
use crate::{Error, Result};

/// Default pixel noise for uncertainty propagation.
pub const DEFAULT_PIXEL_NOISE: f64 = 1.0;

const MIN_POINT_DISTANCE: f64 = 1e-9;
const SINGULAR_RATIO: f64 = 1e-12;

/// Angle in degrees at `point` between the rays toward `center_a` and `center_b`.
pub fn triangulation_angle(
    center_a: &Point3<f64>,
    center_b: &Point3<f64>,
    point: &Point3<f64>,
) -> Result<f64> {
    let a = center_a - point;
    let b = center_b - point;
    if a.norm() <= MIN_POINT_DISTANCE || b.norm() <= MIN_POINT_DISTANCE {
        return Err(Error::DegenerateGeometry(
            "triangulation point coincides with a camera center".into(),
        ));
    }
    Ok(a.cross(&b).norm().atan2(a.dot(&b)).to_degrees())
}

/// Smallest pairwise triangulation angle of a camera set at `point`.
pub fn min_pairwise_angle(centers: &[Point3<f64>], point: &Point3<f64>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            best = best.min(triangulation_angle(&centers[i], &centers[j], point)?);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    pub covariance: Matrix3<f64>,
    /// Largest eigenvalue of `covariance`, m^2.
    pub u: f64,
}

impl UncertaintyEstimate {
    pub fn sigma(&self) -> f64 {
        self.u.sqrt()
    }
}

/// Jacobian of the pixel projection with respect to the world point.
pub fn projection_jacobian(camera: &Camera, point: &Point3<f64>) -> Option<Matrix2x3<f64>> {
    let pc = camera.pose.to_camera(point);
    if pc.z <= 0.0 {
        return None;
    }
    let r = camera.pose.rotation();
    let f = camera.intrinsics.focal();
    let iz = 1.0 / pc.z;
    let row0 = (r.row(0) - r.row(2) * (pc.x * iz)) * (f * iz);
    let row1 = (r.row(1) - r.row(2) * (pc.y * iz)) * (f * iz);
    Some(Matrix2x3::from_rows(&[row0, row1]))
}

/// `J^T J` contribution of one camera, in px^2/m^2.
pub fn information_matrix(camera: &Camera, point: &Point3<f64>) -> Option<Matrix3<f64>> {
    projection_jacobian(camera, point).map(|j| j.transpose() * j)
}

/// First-order covariance `sigma^2 (J^T J)^-1` of a point triangulated from `cameras`.
pub fn point_uncertainty(
    cameras: &[Camera],
    point: &Point3<f64>,
    pixel_noise_std: f64,
) -> Result<UncertaintyEstimate> {
    if cameras.len() < 2 {
        return Err(Error::SingularGeometry(
            "at least two cameras are required".into(),
        ));
    }
    let mut info = Matrix3::zeros();
    for c in cameras {
        info += information_matrix(c, point)
            .ok_or_else(|| Error::SingularGeometry(format!("point behind camera {}", c.id)))?;
    }
    let eig = SymmetricEigen::new(info);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > SINGULAR_RATIO * max) {
        return Err(Error::SingularGeometry(
            "information matrix is rank deficient".into(),
        ));
    }
    let inv = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    let covariance = inv * (pixel_noise_std * pixel_noise_std);
    let covariance = (covariance + covariance.transpose()) * 0.5;
    let u = SymmetricEigen::new(covariance).eigenvalues.max().max(0.0);
    Ok(UncertaintyEstimate { covariance, u })
}

/// Eigenvalues of a symmetric 3x3 matrix in ascending order (trigonometric closed form).
pub fn symmetric3_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let (a, b, c) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    if p1 == 0.0 {
        let mut e = [a, b, c];
        e.sort_by(|x, y| x.total_cmp(y));
        return e;
    }
    let q = (a + b + c) / 3.0;
    let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let bm = (m - Matrix3::identity() * q) / p;
    let r = (bm.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e3, e2, e1]
}

/// Fast path for `u` from a summed information matrix: `sigma^2 / lambda_min(J^T J)`.
/// Returns `None` when the geometry is singular.
pub fn max_variance_from_information(info: &Matrix3<f64>, pixel_noise_std: f64) -> Option<f64> {
    let [min, _, max] = symmetric3_eigenvalues(info);
    if !(min > SINGULAR_RATIO * max) {
        return None;
    }
    Some(pixel_noise_std * pixel_noise_std / min)
}

/// Projected pixel area per square meter of surface for one camera. Zero when the
/// triangle is back-facing or any vertex is behind the camera.
pub fn ground_resolution(camera: &Camera, triangle: &[Point3<f64>; 3]) -> f64 {
    let [a, b, c] = triangle;
    let n = (b - a).cross(&(c - a));
    let area3 = 0.5 * n.norm();
    if area3 <= 0.0 {
        return 0.0;
    }
    let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
    if n.dot(&(camera.center() - centroid)) <= 0.0 {
        return 0.0;
    }
    let mut px = [[0.0; 2]; 3];
    for (k, p) in triangle.iter().enumerate() {
        match camera.project_point(p) {
            Some(proj) => px[k] = [proj.pixel.x, proj.pixel.y],
            None => return 0.0,
        }
    }
    let area2 = 0.5
        * ((px[1][0] - px[0][0]) * (px[2][1] - px[0][1])
            - (px[2][0] - px[0][0]) * (px[1][1] - px[0][1]))
            .abs();
    area2 / area3
}

/// Mean center and mean focal length of a camera triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletSummary {
    pub mean_center: Point3<f64>,
    pub mean_focal: f64,
    pub members: Vec<CameraId>,
}

impl TripletSummary {
    pub fn from_cameras(cameras: &[Camera]) -> Self {
        let n = cameras.len().max(1) as f64;
        let sum = cameras
            .iter()
            .fold(nalgebra::Vector3::zeros(), |s, c| s + c.center().coords);
        Self {
            mean_center: Point3::from(sum / n),
            mean_focal: cameras.iter().map(|c| c.intrinsics.focal()).sum::<f64>() / n,
            members: cameras.iter().map(|c| c.id).collect(),
        }
    }

    /// `f / |c - p|`: focal length over distance to the point.
    pub fn resolution_at(&self, point: &Point3<f64>) -> f64 {
        self.mean_focal / (self.mean_center - point).norm()
    }
}
