use nalgebra::Vector2;

use super::camera::Camera;
use super::mesh::TriangleMesh;
use super::raster::{is_valid_depth, render_depth, Render};
use super::visibility::DEPTH_AGREEMENT;

/// Samples per image axis.
pub const OVERLAP_GRID: u32 = 32;

/// Render downscale used for overlap estimation: about 160 px across.
pub fn overlap_downscale(camera: &Camera) -> u32 {
    (camera.intrinsics.width() / 160).max(1)
}

/// Fraction of `a`'s geometry-covered grid samples whose 3D point is visible in `b`.
pub fn image_overlap(a: &Camera, b: &Camera, mesh: &TriangleMesh) -> f64 {
    let ra = render_depth(a, mesh, overlap_downscale(a));
    let rb = render_depth(b, mesh, overlap_downscale(b));
    overlap_from_renders(&ra, &rb)
}

/// [`image_overlap`] with precomputed full-mesh renders of both cameras.
pub fn overlap_from_renders(a: &Render, b: &Render) -> f64 {
    let (w, h) = (a.depth.width as f64, a.depth.height as f64);
    let mut seen = 0usize;
    let mut shared = 0usize;
    for j in 0..OVERLAP_GRID {
        for i in 0..OVERLAP_GRID {
            let px = Vector2::new(
                (i as f64 + 0.5) * w / OVERLAP_GRID as f64,
                (j as f64 + 0.5) * h / OVERLAP_GRID as f64,
            );
            let (x, y) = (px.x as u32, px.y as u32);
            let d = a.depth.get(x, y);
            if !is_valid_depth(d) {
                continue;
            }
            seen += 1;
            let point = a.camera.unproject(&px, d);
            let Some(proj) = b.camera.project_point(&point) else {
                continue;
            };
            if !b.camera.intrinsics.contains(&proj.pixel) {
                continue;
            }
            let db = b.depth.get(proj.pixel.x as u32, proj.pixel.y as u32);
            if is_valid_depth(db) && proj.depth <= db * (1.0 + DEPTH_AGREEMENT) {
                shared += 1;
            }
        }
    }
    if seen == 0 {
        0.0
    } else {
        shared as f64 / seen as f64
    }
}
