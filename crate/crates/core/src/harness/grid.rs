//! Nadir lawnmower grids, the standard survey baseline.

use nalgebra::{Point3, Vector3};

use crate::geometry::camera::CameraPose;
use crate::geometry::{Camera, CameraId, CameraIntrinsics};
use crate::planner::{PlannedView, ViewPlan, ViewRole};
use crate::{Error, Result};

/// Ground footprint `(width, height)` of a nadir image taken `height` above the ground.
pub fn footprint(camera: &CameraIntrinsics, height: f64) -> (f64, f64) {
    let half = |fov: f64| (fov.to_radians() / 2.0).tan();
    (
        2.0 * height * half(camera.horizontal_fov_deg()),
        2.0 * height * half(camera.vertical_fov_deg()),
    )
}

/// Positions along one axis: `floor(extent / spacing) + 1` samples centered on the extent.
fn axis_positions(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let extent = (hi - lo).max(0.0);
    let n = (extent / spacing + 1e-9).floor() as usize + 1;
    let start = lo + (extent - (n - 1) as f64 * spacing) / 2.0;
    (0..n).map(|i| start + i as f64 * spacing).collect()
}

/// Nadir grid over the horizontal extent of `bounds`, `height` above its lowest point,
/// with `overlap` between neighboring images along both axes. Rows run along x and are
/// flown alternately forward and back. Each run of three consecutive images within a
/// row forms one MVS triplet.
pub fn grid_plan(
    bounds: (Point3<f64>, Point3<f64>),
    overlap: f64,
    height: f64,
    camera: &CameraIntrinsics,
    first_id: u32,
) -> Result<ViewPlan> {
    if !(overlap > 0.0 && overlap < 1.0) {
        return Err(Error::Config(format!(
            "grid overlap must lie in (0, 1), got {overlap}"
        )));
    }
    if !(height > 0.0) {
        return Err(Error::Config(format!(
            "grid height must be positive, got {height}"
        )));
    }
    let (lo, hi) = bounds;
    let (fw, fh) = footprint(camera, height);
    let xs = axis_positions(lo.x, hi.x, (1.0 - overlap) * fw);
    let ys = axis_positions(lo.y, hi.y, (1.0 - overlap) * fh);
    let z = lo.z + height;

    let mut views = Vec::with_capacity(xs.len() * ys.len());
    let mut triplets = Vec::new();
    let mut id = first_id;
    for (row, &y) in ys.iter().enumerate() {
        let row_start = id;
        let mut row_xs = xs.clone();
        if row % 2 == 1 {
            row_xs.reverse();
        }
        for x in row_xs {
            let pose = CameraPose::looking_along(Point3::new(x, y, z), -Vector3::z(), Vector3::y());
            views.push(PlannedView {
                camera: Camera::new(CameraId(id), *camera, pose),
                role: ViewRole::Survey,
            });
            id += 1;
        }
        for a in row_start..id.saturating_sub(2) {
            triplets.push([CameraId(a), CameraId(a + 1), CameraId(a + 2)]);
        }
    }
    let total_path_m = views
        .windows(2)
        .map(|w| (w[1].camera.center() - w[0].camera.center()).norm())
        .sum();
    Ok(ViewPlan {
        views,
        triplets,
        total_path_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::image_overlap;
    use crate::geometry::mesh::planar_grid;

    #[test]
    fn spacing_is_the_non_overlapping_footprint_fraction() {
        let k = CameraIntrinsics::from_horizontal_fov(90.0, 100, 100).unwrap();
        // 90 degrees at 5 m: 10 m footprint, 2 m spacing at 80% overlap.
        let plan = grid_plan(
            (Point3::new(0.0, 0.0, 0.0), Point3::new(20.0, 20.0, 0.0)),
            0.8,
            5.0,
            &k,
            0,
        )
        .unwrap();
        assert_eq!(plan.views.len(), 121);
        let d = (plan.views[1].camera.center() - plan.views[0].camera.center()).norm();
        assert!((d - 2.0).abs() < 1e-9);
        // Second row flies back.
        assert!(plan.views[11].camera.center().x > plan.views[12].camera.center().x);
        assert_eq!(plan.triplets.len(), 11 * 9);
    }

    #[test]
    fn consecutive_poses_overlap_over_flat_ground() {
        let k = CameraIntrinsics::from_horizontal_fov(60.0, 160, 120).unwrap();
        let ground = planar_grid([-10.0, -10.0], [20.0, 20.0], 10, 10);
        let plan = grid_plan(
            (Point3::new(-2.0, -2.0, 0.0), Point3::new(2.0, 2.0, 0.0)),
            0.8,
            2.5,
            &k,
            0,
        )
        .unwrap();
        assert!(plan.views.len() > 10);
        for w in plan.views.windows(2) {
            let o = image_overlap(&w[0].camera, &w[1].camera, &ground);
            assert!(o >= 0.8, "overlap {o}");
        }
    }

    #[test]
    fn bad_overlap_is_rejected() {
        let k = CameraIntrinsics::from_horizontal_fov(60.0, 160, 120).unwrap();
        assert!(grid_plan(
            (Point3::origin(), Point3::new(1.0, 1.0, 0.0)),
            1.0,
            2.0,
            &k,
            0
        )
        .is_err());
    }
}
