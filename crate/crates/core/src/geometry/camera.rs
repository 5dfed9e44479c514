use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub u32);

impl std::fmt::Display for CameraId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Square-pixel pinhole intrinsics. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    focal: f64,
    principal_point: [f64; 2],
    width: u32,
    height: u32,
}

impl CameraIntrinsics {
    pub fn new(focal: f64, principal_point: [f64; 2], width: u32, height: u32) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal length {focal} must be > 0"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size {width}x{height} must be at least 1x1"
            )));
        }
        let [cx, cy] = principal_point;
        if !(cx >= 0.0 && cx <= width as f64 && cy >= 0.0 && cy <= height as f64) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            focal,
            principal_point,
            width,
            height,
        })
    }

    /// Centered principal point with the focal length chosen for a horizontal field of view.
    pub fn from_horizontal_fov(fov_deg: f64, width: u32, height: u32) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidCamera(format!(
                "field of view {fov_deg} out of range"
            )));
        }
        let focal = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self::new(
            focal,
            [0.5 * width as f64, 0.5 * height as f64],
            width,
            height,
        )
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn principal_point(&self) -> [f64; 2] {
        self.principal_point
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Intrinsics of the same camera rendered at `1/factor` resolution.
    pub fn downscaled(&self, factor: u32) -> Self {
        let s = factor.max(1) as f64;
        Self {
            focal: self.focal / s,
            principal_point: [self.principal_point[0] / s, self.principal_point[1] / s],
            width: (self.width / factor.max(1)).max(1),
            height: (self.height / factor.max(1)).max(1),
        }
    }

    pub fn horizontal_fov_deg(&self) -> f64 {
        let [cx, _] = self.principal_point;
        let w = self.width as f64;
        ((cx / self.focal).atan() + ((w - cx) / self.focal).atan()).to_degrees()
    }

    pub fn vertical_fov_deg(&self) -> f64 {
        let [_, cy] = self.principal_point;
        let h = self.height as f64;
        ((cy / self.focal).atan() + ((h - cy) / self.focal).atan()).to_degrees()
    }

    /// Half of the smaller field-of-view angle.
    pub fn min_opening_angle_deg(&self) -> f64 {
        0.5 * self.horizontal_fov_deg().min(self.vertical_fov_deg())
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }
}

/// World-to-camera rotation plus camera center. Camera frame: x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    center: Point3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, center: Point3<f64>) -> Result<Self> {
        let err = (rotation * rotation.transpose() - Matrix3::identity())
            .abs()
            .max();
        let det = rotation.determinant();
        if !(err <= 1e-9 && (det - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidCamera(format!(
                "rotation not orthonormal (err {err:.3e}, det {det:.6})"
            )));
        }
        if !center.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidCamera("camera center not finite".into()));
        }
        Ok(Self { rotation, center })
    }

    /// Pose at `center` with the optical axis through `target`. `up` fixes the roll; the
    /// image y axis points away from it.
    pub fn look_at(center: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - center;
        if forward.norm() < 1e-12 {
            return Err(Error::DegenerateGeometry(
                "look_at target equals center".into(),
            ));
        }
        Ok(Self::looking_along(center, forward, up))
    }

    /// Pose at `center` looking along `direction`. Falls back to another up vector when
    /// `up` is parallel to the direction.
    pub fn looking_along(center: Point3<f64>, direction: Vector3<f64>, up: Vector3<f64>) -> Self {
        let forward = direction.normalize();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 * up.norm().max(1e-300) {
            let alt = if forward.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            right = forward.cross(&alt.cross(&forward));
            if right.norm() < 1e-12 {
                right = forward.cross(&Vector3::z());
            }
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation =
            Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self { rotation, center }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> Point3<f64> {
        self.center
    }

    /// Unit optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.center)
    }

    pub fn to_world(&self, v: &Vector3<f64>) -> Point3<f64> {
        self.center + self.rotation.transpose() * v
    }

    /// Linear position / spherical orientation interpolation toward `other`.
    pub fn interpolate(&self, other: &CameraPose, t: f64) -> CameraPose {
        let qa =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let qb =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(other.rotation));
        let q = qa
            .try_slerp(&qb, t, 1e-9)
            .unwrap_or(if t < 0.5 { qa } else { qb });
        CameraPose {
            rotation: q.to_rotation_matrix().into_inner(),
            center: self.center + (other.center - self.center) * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    /// Depth along the optical axis in meters, always > 0.
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub id: CameraId,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl Camera {
    pub fn new(id: CameraId, intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Self {
            id,
            intrinsics,
            pose,
        }
    }

    pub fn center(&self) -> Point3<f64> {
        self.pose.center()
    }

    /// Pinhole projection; `None` when the point is not in front of the camera.
    pub fn project_point(&self, p: &Point3<f64>) -> Option<Projection> {
        let pc = self.pose.to_camera(p);
        if pc.z <= 0.0 {
            return None;
        }
        let f = self.intrinsics.focal;
        let [cx, cy] = self.intrinsics.principal_point;
        Some(Projection {
            pixel: Vector2::new(f * pc.x / pc.z + cx, f * pc.y / pc.z + cy),
            depth: pc.z,
        })
    }

    /// Point at `depth` along the optical axis through `pixel`.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Point3<f64> {
        let f = self.intrinsics.focal;
        let [cx, cy] = self.intrinsics.principal_point;
        let pc = Vector3::new(
            (pixel.x - cx) / f * depth,
            (pixel.y - cy) / f * depth,
            depth,
        );
        self.pose.to_world(&pc)
    }

    /// World-space ray direction through `pixel`, scaled so its optical-axis component is 1.
    pub fn ray_direction(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let f = self.intrinsics.focal;
        let [cx, cy] = self.intrinsics.principal_point;
        self.pose.rotation().transpose() * Vector3::new((pixel.x - cx) / f, (pixel.y - cy) / f, 1.0)
    }

    pub fn downscaled(&self, factor: u32) -> Camera {
        Camera {
            intrinsics: self.intrinsics.downscaled(factor),
            ..*self
        }
    }

    /// Angle in degrees between the optical axis and the direction to `p`.
    pub fn off_axis_angle_deg(&self, p: &Point3<f64>) -> f64 {
        let d = p - self.center();
        let n = d.norm();
        if n == 0.0 {
            return 0.0;
        }
        (self.pose.optical_axis().dot(&d) / n)
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_camera() -> Camera {
        let k = CameraIntrinsics::new(100.0, [50.0, 50.0], 100, 100).unwrap();
        let pose = CameraPose::new(Matrix3::identity(), Point3::origin()).unwrap();
        Camera::new(CameraId(0), k, pose)
    }

    #[test]
    fn principal_axis_projects_to_principal_point() {
        let p = axis_camera()
            .project_point(&Point3::new(0.0, 0.0, 2.0))
            .unwrap();
        assert_eq!(p.pixel, Vector2::new(50.0, 50.0));
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn behind_camera_is_rejected() {
        assert!(axis_camera()
            .project_point(&Point3::new(0.0, 0.0, -1.0))
            .is_none());
        assert!(axis_camera()
            .project_point(&Point3::new(1.0, 0.0, 0.0))
            .is_none());
    }

    #[test]
    fn off_axis_point() {
        let p = axis_camera()
            .project_point(&Point3::new(1.0, 0.0, 2.0))
            .unwrap();
        assert!((p.pixel - Vector2::new(100.0, 50.0)).norm() < 1e-12);
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn unproject_round_trip() {
        let k = CameraIntrinsics::from_horizontal_fov(60.0, 160, 120).unwrap();
        let pose = CameraPose::look_at(
            Point3::new(1.0, -2.0, 3.0),
            Point3::new(0.2, 0.1, 0.0),
            Vector3::z(),
        )
        .unwrap();
        let cam = Camera::new(CameraId(3), k, pose);
        let p = Point3::new(0.5, 0.3, 0.1);
        let proj = cam.project_point(&p).unwrap();
        let q = cam.unproject(&proj.pixel, proj.depth);
        assert!((p - q).norm() < 1e-9);
    }

    #[test]
    fn look_at_is_orthonormal_and_nadir_safe() {
        let pose = CameraPose::look_at(Point3::new(0.0, 0.0, 5.0), Point3::origin(), Vector3::z())
            .unwrap();
        assert!(CameraPose::new(*pose.rotation(), pose.center()).is_ok());
        assert!((pose.optical_axis() - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, [1.0, 1.0], 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, [1.0, 1.0], 0, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, [3.0, 1.0], 2, 2).is_err());
        let k = CameraIntrinsics::from_horizontal_fov(90.0, 200, 100).unwrap();
        assert!((k.focal() - 100.0).abs() < 1e-9);
        assert!((k.horizontal_fov_deg() - 90.0).abs() < 1e-9);
        assert!((k.min_opening_angle_deg() - 0.5 * k.vertical_fov_deg()).abs() < 1e-12);
    }

    #[test]
    fn interpolation_endpoints() {
        let a = CameraPose::look_at(Point3::new(0.0, 0.0, 5.0), Point3::origin(), Vector3::z())
            .unwrap();
        let b = CameraPose::look_at(
            Point3::new(4.0, 0.0, 5.0),
            Point3::new(4.0, 1.0, 0.0),
            Vector3::z(),
        )
        .unwrap();
        let m = a.interpolate(&b, 0.5);
        assert!((m.center() - Point3::new(2.0, 0.0, 5.0)).norm() < 1e-12);
        assert!(CameraPose::new(*m.rotation(), m.center()).is_ok());
        assert!(
            (a.interpolate(&b, 1.0).rotation() - b.rotation())
                .abs()
                .max()
                < 1e-9
        );
    }
}
