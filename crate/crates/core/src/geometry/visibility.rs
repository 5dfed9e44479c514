use std::collections::BTreeMap;

use super::camera::{Camera, CameraId};
use super::mesh::{FaceId, TriangleMesh};
use super::raster::{is_valid_depth, render_depth, Render};

/// Relative depth agreement accepted when the face-id buffer holds a different face.
pub const DEPTH_AGREEMENT: f64 = 0.01;

/// Triangle id to the sorted ids of the cameras that see its centroid.
pub type VisibilityTable = BTreeMap<FaceId, Vec<CameraId>>;

/// Centroid visibility of `face` in an existing render of the full mesh.
pub fn face_visible_in(render: &Render, mesh: &TriangleMesh, face: FaceId) -> bool {
    let cam = &render.camera;
    if !mesh.is_front_facing(face, &cam.center()) {
        return false;
    }
    let centroid = mesh.centroid(face);
    let Some(proj) = cam.project_point(&centroid) else {
        return false;
    };
    if !cam.intrinsics.contains(&proj.pixel) {
        return false;
    }
    let (x, y) = (proj.pixel.x as u32, proj.pixel.y as u32);
    if render.face_at(x, y) == Some(face) {
        return true;
    }
    let d = render.depth.get(x, y);
    is_valid_depth(d) && (d - proj.depth).abs() <= DEPTH_AGREEMENT * proj.depth
}

/// Visibility of each listed triangle in each camera, via one render per camera.
pub fn compute_visibility(
    mesh: &TriangleMesh,
    triangles: &[FaceId],
    cameras: &[Camera],
    downscale: u32,
) -> VisibilityTable {
    let renders: Vec<Render> = cameras
        .iter()
        .map(|c| render_depth(c, mesh, downscale))
        .collect();
    visibility_from_renders(mesh, triangles, &renders)
}

/// Same as [`compute_visibility`] with precomputed full-mesh renders.
pub fn visibility_from_renders(
    mesh: &TriangleMesh,
    triangles: &[FaceId],
    renders: &[Render],
) -> VisibilityTable {
    let mut table = VisibilityTable::new();
    for &t in triangles {
        let mut cams: Vec<CameraId> = renders
            .iter()
            .filter(|r| face_visible_in(r, mesh, t))
            .map(|r| r.camera.id)
            .collect();
        cams.sort();
        table.insert(t, cams);
    }
    table
}
