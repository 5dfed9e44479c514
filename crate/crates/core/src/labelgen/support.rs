use nalgebra::{Matrix3, Point3};
use serde::{Deserialize, Serialize};

use crate::geometry::raster::Render;
use crate::geometry::uncertainty::{
    information_matrix, max_variance_from_information, triangulation_angle,
};
use crate::geometry::{Camera, CameraId, DepthMap, TripletSummary};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    /// Minimum view-angle difference, degrees (strict).
    pub alpha_min_deg: f64,
    /// Minimum resolution ratio of reference over query (strict).
    pub s_min: f64,
}

impl Default for SupportConfig {
    fn default() -> Self {
        Self {
            alpha_min_deg: 10.0,
            s_min: 1.5,
        }
    }
}

/// Thresholds for consistency, in multiples of the combined standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub agree_sigma: f64,
    pub block_sigma: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            agree_sigma: 1.0,
            block_sigma: 3.0,
        }
    }
}

/// View-angle difference (degrees) and resolution ratio `res_ref / res_query` at `point`.
pub fn support_metrics(
    query: &TripletSummary,
    reference: &TripletSummary,
    point: &Point3<f64>,
) -> Result<(f64, f64)> {
    let alpha = triangulation_angle(&reference.mean_center, &query.mean_center, point)?;
    Ok((
        alpha,
        reference.resolution_at(point) / query.resolution_at(point),
    ))
}

/// One depthmap of a triplet reconstruction with per-pixel 3D points, uncertainty and support.
#[derive(Debug, Clone)]
pub struct MeasurementGrid {
    pub camera: Camera,
    pub depth: DepthMap,
    pub points: Vec<Option<Point3<f64>>>,
    /// Largest covariance eigenvalue of each point under the triplet, m^2; infinite when invalid.
    pub uncertainty: Vec<f64>,
    pub support: Vec<u32>,
}

impl MeasurementGrid {
    pub fn new(camera: &Camera, depth: DepthMap, triplet: &[Camera], pixel_noise_std: f64) -> Self {
        let n = depth.depths.len();
        let mut points = vec![None; n];
        let mut uncertainty = vec![f64::INFINITY; n];
        let s = depth.downscale.max(1) as f64;
        for y in 0..depth.height {
            for x in 0..depth.width {
                let idx = depth.index(x, y);
                let d = depth.depths[idx];
                if !crate::geometry::is_valid_depth(d) {
                    continue;
                }
                let px = Render::pixel_center(x, y) * s;
                let p = camera.unproject(&px, d);
                let mut info = Matrix3::zeros();
                let mut ok = true;
                for c in triplet {
                    match information_matrix(c, &p) {
                        Some(m) => info += m,
                        None => ok = false,
                    }
                }
                if let Some(u) = ok
                    .then(|| max_variance_from_information(&info, pixel_noise_std))
                    .flatten()
                {
                    points[idx] = Some(p);
                    uncertainty[idx] = u;
                }
            }
        }
        Self {
            camera: *camera,
            depth,
            points,
            uncertainty,
            support: vec![0; n],
        }
    }

    /// Pixel index of a full-resolution image position, if inside the grid.
    pub fn index_at(&self, pixel: &nalgebra::Vector2<f64>) -> Option<usize> {
        self.depth
            .pixel_at(pixel)
            .map(|(x, y)| self.depth.index(x, y))
    }
}

/// A triplet reconstruction: its summary plus one grid per member image.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub summary: TripletSummary,
    pub grids: Vec<MeasurementGrid>,
}

impl Cluster {
    pub fn new(cameras: &[Camera; 3], depths: [DepthMap; 3], pixel_noise_std: f64) -> Self {
        let grids = cameras
            .iter()
            .zip(depths)
            .map(|(c, d)| MeasurementGrid::new(c, d, cameras, pixel_noise_std))
            .collect();
        Self {
            summary: TripletSummary::from_cameras(cameras),
            grids,
        }
    }

    pub fn shares_camera(&self, other: &Cluster) -> bool {
        self.summary
            .members
            .iter()
            .any(|m| other.summary.members.contains(m))
    }

    pub fn members(&self) -> &[CameraId] {
        &self.summary.members
    }
}

/// Geometric relation of a query point to the reference measurement it projects onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Relation {
    /// Reference point lies within the agreement band along the query ray.
    Agrees {
        index: usize,
    },
    /// Query point sits in front of the reference measurement on the reference ray.
    QueryBlocks {
        index: usize,
    },
    Unrelated,
}

pub(crate) fn relate(
    query_camera: &Camera,
    point: &Point3<f64>,
    query_depth: f64,
    query_u: f64,
    reference: &MeasurementGrid,
    cfg: &VoteConfig,
) -> Relation {
    let Some(proj) = reference.camera.project_point(point) else {
        return Relation::Unrelated;
    };
    let Some(index) = reference.index_at(&proj.pixel) else {
        return Relation::Unrelated;
    };
    let Some(r) = reference.points[index] else {
        return Relation::Unrelated;
    };
    let sigma = (query_u + reference.uncertainty[index]).sqrt();
    let along_query = query_camera.pose.to_camera(&r).z;
    if (along_query - query_depth).abs() <= cfg.agree_sigma * sigma {
        Relation::Agrees { index }
    } else if proj.depth < reference.depth.depths[index] - cfg.block_sigma * sigma {
        Relation::QueryBlocks { index }
    } else {
        Relation::Unrelated
    }
}

/// Per-grid support counts of `query` against `references`.
///
/// A reference cluster counts when it is sufficiently different from the query and one
/// of its measurements agrees with the query point. Counting references whose mean
/// centers are within `alpha_min` of each other at the point add at most one.
pub fn compute_support(
    query: &Cluster,
    references: &[&Cluster],
    cfg: &SupportConfig,
    votes: &VoteConfig,
) -> Vec<Vec<u32>> {
    let mut groups: Vec<Point3<f64>> = Vec::new();
    query
        .grids
        .iter()
        .map(|grid| {
            let mut support = vec![0u32; grid.points.len()];
            for (idx, p) in grid.points.iter().enumerate() {
                let Some(p) = p else { continue };
                let d = grid.depth.depths[idx];
                let u = grid.uncertainty[idx];
                groups.clear();
                for r in references {
                    let Ok((alpha, scale)) = support_metrics(&query.summary, &r.summary, p) else {
                        continue;
                    };
                    if !(alpha > cfg.alpha_min_deg || scale > cfg.s_min) {
                        continue;
                    }
                    let consistent = r.grids.iter().any(|g| {
                        matches!(
                            relate(&grid.camera, p, d, u, g, votes),
                            Relation::Agrees { .. }
                        )
                    });
                    if !consistent {
                        continue;
                    }
                    let similar = groups.iter().any(|c| {
                        triangulation_angle(c, &r.summary.mean_center, p)
                            .is_ok_and(|a| a < cfg.alpha_min_deg)
                    });
                    if !similar {
                        groups.push(r.summary.mean_center);
                    }
                }
                support[idx] = groups.len() as u32;
            }
            support
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::planar_grid;
    use crate::geometry::{render_depth, CameraIntrinsics, CameraPose};
    use nalgebra::Vector3;

    fn summary(center: Point3<f64>, focal: f64) -> TripletSummary {
        TripletSummary {
            mean_center: center,
            mean_focal: focal,
            members: vec![],
        }
    }

    #[test]
    fn identical_reference() {
        let q = summary(Point3::new(0.0, 0.0, 10.0), 100.0);
        let (a, s) = support_metrics(&q, &q, &Point3::origin()).unwrap();
        assert_eq!((a, s), (0.0, 1.0));
    }

    #[test]
    fn closer_reference_doubles_resolution() {
        let q = summary(Point3::new(0.0, 0.0, 10.0), 100.0);
        let r = summary(Point3::new(0.0, 0.0, 5.0), 100.0);
        assert!((support_metrics(&q, &r, &Point3::origin()).unwrap().1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_centers() {
        let q = summary(Point3::new(0.0, 0.0, 10.0), 100.0);
        let r = summary(Point3::new(10.0, 0.0, 0.0), 100.0);
        assert!((support_metrics(&q, &r, &Point3::origin()).unwrap().0 - 90.0).abs() < 1e-12);
    }

    fn triplet_at(id0: u32, center: Point3<f64>, spread: f64) -> [Camera; 3] {
        let k = CameraIntrinsics::from_horizontal_fov(60.0, 64, 48).unwrap();
        std::array::from_fn(|i| {
            let a = i as f64 * std::f64::consts::TAU / 3.0;
            let c = center + Vector3::new(spread * a.cos(), spread * a.sin(), 0.0);
            let pose = CameraPose::look_at(c, Point3::origin(), Vector3::y()).unwrap();
            Camera::new(CameraId(id0 + i as u32), k, pose)
        })
    }

    fn plane_cluster(cams: &[Camera; 3]) -> Cluster {
        let ground = planar_grid([-20.0, -20.0], [40.0, 40.0], 4, 4);
        let depths = cams.map(|c| render_depth(&c, &ground, 1).depth);
        Cluster::new(cams, depths, 1.0)
    }

    #[test]
    fn no_references_no_support() {
        let q = plane_cluster(&triplet_at(0, Point3::new(0.0, 0.0, 5.0), 0.5));
        let s = compute_support(&q, &[], &SupportConfig::default(), &VoteConfig::default());
        assert!(s.iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn four_distinct_consistent_references_on_a_plane() {
        let q = plane_cluster(&triplet_at(0, Point3::new(0.0, 0.0, 5.0), 0.5));
        // Tilted 30 degrees from the query direction, 90 degrees apart in azimuth.
        let refs: Vec<Cluster> = (0..4)
            .map(|i| {
                let (tilt, az) = (30f64.to_radians(), (90.0 * i as f64).to_radians());
                let c = Point3::new(
                    5.0 * tilt.sin() * az.cos(),
                    5.0 * tilt.sin() * az.sin(),
                    5.0 * tilt.cos(),
                );
                plane_cluster(&triplet_at(10 * (i + 1), c, 0.5))
            })
            .collect();
        let refs: Vec<&Cluster> = refs.iter().collect();
        let s = compute_support(&q, &refs, &SupportConfig::default(), &VoteConfig::default());
        // The pixel seeing the origin.
        let proj = q.grids[0].camera.project_point(&Point3::origin()).unwrap();
        let idx = q.grids[0].index_at(&proj.pixel).unwrap();
        assert_eq!(s[0][idx], 4);
        // Two copies of one viewpoint count once.
        let twice = [refs[0], refs[0]];
        assert_eq!(
            compute_support(
                &q,
                &twice,
                &SupportConfig::default(),
                &VoteConfig::default()
            )[0][idx],
            1
        );
    }

    #[test]
    fn boundary_angle_is_not_sufficient() {
        let q = summary(Point3::new(0.0, 0.0, 10.0), 100.0);
        let a = 10f64.to_radians();
        let r = summary(Point3::new(10.0 * a.sin(), 0.0, 10.0 * a.cos()), 100.0);
        let (alpha, scale) = support_metrics(&q, &r, &Point3::origin()).unwrap();
        let cfg = SupportConfig {
            alpha_min_deg: alpha,
            s_min: 1.5,
        };
        assert!(!(alpha > cfg.alpha_min_deg || scale > cfg.s_min));
    }
}
