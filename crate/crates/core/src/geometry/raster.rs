//! Z-buffer software rasterization with a parallel face-id buffer.
//!
//! Faces are clipped against a near plane in camera space, projected, and
//! filled at pixel centers. Depth is interpolated as `1/z` in screen space,
//! which gives the exact optical-axis depth of the ray through each pixel
//! center.

use nalgebra::{Point3, Vector2, Vector3};

use super::camera::{Camera, CameraId};
use super::mesh::{FaceId, TriangleMesh};

/// Marker for pixels without geometry.
pub const INVALID_DEPTH: f64 = f64::INFINITY;
/// Marker for pixels without a face.
pub const NO_FACE: u32 = u32::MAX;

const NEAR_PLANE: f64 = 1e-4;

/// Per-pixel depth along the optical axis, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub depths: Vec<f64>,
    pub camera: CameraId,
    /// Integer factor between the source camera resolution and this map.
    pub downscale: u32,
}

impl DepthMap {
    pub fn new_invalid(width: u32, height: u32, camera: CameraId, downscale: u32) -> Self {
        Self {
            width,
            height,
            depths: vec![INVALID_DEPTH; width as usize * height as usize],
            camera,
            downscale,
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.depths[self.index(x, y)]
    }

    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        is_valid_depth(self.get(x, y))
    }

    pub fn valid_count(&self) -> usize {
        self.depths.iter().filter(|d| is_valid_depth(**d)).count()
    }

    /// Pixel index containing a full-resolution image coordinate.
    pub fn pixel_at(&self, pixel: &Vector2<f64>) -> Option<(u32, u32)> {
        let s = self.downscale.max(1) as f64;
        let (x, y) = ((pixel.x / s).floor(), (pixel.y / s).floor());
        (x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64)
            .then_some((x as u32, y as u32))
    }
}

#[inline]
pub fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Rendering result: depth and face ids, plus the (downscaled) camera used.
#[derive(Debug, Clone)]
pub struct Render {
    pub depth: DepthMap,
    pub face_ids: Vec<u32>,
    pub camera: Camera,
}

impl Render {
    #[inline]
    pub fn face_at(&self, x: u32, y: u32) -> Option<FaceId> {
        let f = self.face_ids[self.depth.index(x, y)];
        (f != NO_FACE).then_some(f)
    }

    /// Center of pixel `(x, y)` in the render's own pixel coordinates.
    pub fn pixel_center(x: u32, y: u32) -> Vector2<f64> {
        Vector2::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// 3D point seen at pixel `(x, y)`, if any.
    pub fn point_at(&self, x: u32, y: u32) -> Option<Point3<f64>> {
        let d = self.depth.get(x, y);
        is_valid_depth(d).then(|| self.camera.unproject(&Self::pixel_center(x, y), d))
    }
}

/// Renders `mesh` from `camera` at `1/downscale` resolution. Both sides of every face
/// are rasterized.
pub fn render_depth(camera: &Camera, mesh: &TriangleMesh, downscale: u32) -> Render {
    let downscale = downscale.max(1);
    let cam = camera.downscaled(downscale);
    let mut target = RenderTarget::new(&cam, downscale);
    for face in 0..mesh.face_count() as FaceId {
        let [a, b, c] = mesh.face_vertices(face);
        target.draw_triangle(&[a, b, c], face);
    }
    target.finish()
}

/// Renders only the listed faces.
pub fn render_faces(
    camera: &Camera,
    mesh: &TriangleMesh,
    faces: &[FaceId],
    downscale: u32,
) -> Render {
    let downscale = downscale.max(1);
    let cam = camera.downscaled(downscale);
    let mut target = RenderTarget::new(&cam, downscale);
    for &face in faces {
        target.draw_triangle(&mesh.face_vertices(face), face);
    }
    target.finish()
}

struct RenderTarget {
    camera: Camera,
    depth: DepthMap,
    face_ids: Vec<u32>,
}

impl RenderTarget {
    fn new(camera: &Camera, downscale: u32) -> Self {
        let (w, h) = (camera.intrinsics.width(), camera.intrinsics.height());
        Self {
            camera: *camera,
            depth: DepthMap::new_invalid(w, h, camera.id, downscale),
            face_ids: vec![NO_FACE; w as usize * h as usize],
        }
    }

    fn finish(self) -> Render {
        Render {
            depth: self.depth,
            face_ids: self.face_ids,
            camera: self.camera,
        }
    }

    fn draw_triangle(&mut self, world: &[Point3<f64>; 3], face: FaceId) {
        let pc = world.map(|p| self.camera.pose.to_camera(&p));
        if pc.iter().all(|v| v.z < NEAR_PLANE) {
            return;
        }
        if pc.iter().all(|v| v.z >= NEAR_PLANE) {
            self.fill(&pc, face);
            return;
        }
        let poly = clip_near(&pc);
        for k in 1..poly.len().saturating_sub(1) {
            self.fill(&[poly[0], poly[k], poly[k + 1]], face);
        }
    }

    fn fill(&mut self, pc: &[Vector3<f64>; 3], face: FaceId) {
        let f = self.camera.intrinsics.focal();
        let [cx, cy] = self.camera.intrinsics.principal_point();
        let (w, h) = (self.depth.width as i64, self.depth.height as i64);
        let s: [[f64; 2]; 3] = pc.map(|v| [f * v.x / v.z + cx, f * v.y / v.z + cy]);
        let inv_z = pc.map(|v| 1.0 / v.z);

        let area = edge(&s[0], &s[1], &s[2]);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = ((min_x - 0.5).ceil() as i64).max(0);
        let x1 = ((max_x - 0.5).floor() as i64).min(w - 1);
        let y0 = ((min_y - 0.5).ceil() as i64).max(0);
        let y1 = ((max_y - 0.5).floor() as i64).min(h - 1);
        if x0 > x1 || y0 > y1 {
            return;
        }
        let inv_area = 1.0 / area;
        for y in y0..=y1 {
            let py = y as f64 + 0.5;
            for x in x0..=x1 {
                let p = [x as f64 + 0.5, py];
                let w0 = edge(&s[1], &s[2], &p) * inv_area;
                let w1 = edge(&s[2], &s[0], &p) * inv_area;
                let w2 = edge(&s[0], &s[1], &p) * inv_area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let iz = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
                if iz <= 0.0 {
                    continue;
                }
                let z = 1.0 / iz;
                let idx = y as usize * w as usize + x as usize;
                if z < self.depth.depths[idx] {
                    self.depth.depths[idx] = z;
                    self.face_ids[idx] = face;
                }
            }
        }
    }
}

#[inline]
fn edge(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Sutherland-Hodgman clip of a camera-space triangle against `z >= NEAR_PLANE`.
fn clip_near(pc: &[Vector3<f64>; 3]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(4);
    for k in 0..3 {
        let a = pc[k];
        let b = pc[(k + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE;
            out.push(p);
        }
    }
    out
}
