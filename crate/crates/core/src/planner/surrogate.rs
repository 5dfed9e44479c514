//! Surrogate camera positions, inverse visibility, potential gains and orientation.

use log::warn;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::distance::DistanceField;
use super::fulfillment::{FulfillmentModel, TriangleInfo};
use super::triplet::{make_triplet, orthonormal_basis, triplet_radius, triplet_views};
use crate::geometry::raster::is_valid_depth;
use crate::geometry::{render_depth, Camera, CameraId, CameraIntrinsics, CameraPose, TriangleMesh};
use crate::{Error, Result};

/// A surrogate-to-triangle visibility link.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Model triangle index.
    pub triangle: usize,
    /// Potential gain per angle bin.
    pub gains: Vec<f64>,
    /// Largest entry of `gains`.
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateCamera {
    pub position: Point3<f64>,
    pub links: Vec<Link>,
    /// Unit viewing direction, set by orientation.
    pub orientation: Option<Vector3<f64>>,
    pub aim_distance: f64,
    /// Sum of `best` over the links.
    pub total_gain: f64,
}

impl SurrogateCamera {
    pub fn new(position: Point3<f64>) -> Self {
        Self {
            position,
            links: Vec::new(),
            orientation: None,
            aim_distance: 0.0,
            total_gain: 0.0,
        }
    }

    fn reset(&mut self) {
        self.links.clear();
        self.orientation = None;
        self.aim_distance = 0.0;
        self.total_gain = 0.0;
    }
}

/// Attempts per requested surrogate before giving up.
const RETRY_FACTOR: usize = 50;

/// Uniform positions in `bounds` whose clearance is at least `safety_distance`.
pub fn sample_surrogates(
    field: &DistanceField,
    count: usize,
    bounds: (Point3<f64>, Point3<f64>),
    safety_distance: f64,
    seed: u64,
) -> Result<Vec<SurrogateCamera>> {
    let (lo, hi) = bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < RETRY_FACTOR * count {
        attempts += 1;
        let p = Point3::from(Vector3::from_fn(|a, _| {
            if hi[a] > lo[a] {
                rng.random_range(lo[a]..hi[a])
            } else {
                lo[a]
            }
        }));
        if field.clearance(&p) >= safety_distance {
            out.push(SurrogateCamera::new(p));
        }
    }
    if out.is_empty() {
        return Err(Error::NoFreeSpace);
    }
    if out.len() < count {
        warn!(
            "only {} of {count} surrogate positions are in free space",
            out.len()
        );
    }
    Ok(out)
}

/// Virtual camera at a triangle's centroid looking along its normal.
pub fn virtual_camera(tri: &TriangleInfo, fov_deg: f64, size: u32) -> Result<Camera> {
    let k = CameraIntrinsics::from_horizontal_fov(fov_deg, size, size)?;
    let pose = CameraPose::looking_along(tri.centroid, tri.normal, Vector3::z());
    Ok(Camera::new(CameraId(u32::MAX), k, pose))
}

/// Surrogate indices visible from the triangle: inside the virtual frustum and nearer
/// than the rendered mesh.
pub fn linked_surrogates(
    mesh: &TriangleMesh,
    tri: &TriangleInfo,
    surrogates: &[SurrogateCamera],
    fov_deg: f64,
    size: u32,
) -> Result<Vec<usize>> {
    let cam = virtual_camera(tri, fov_deg, size)?;
    let render = render_depth(&cam, mesh, 1);
    Ok(surrogates
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let proj = cam.project_point(&s.position)?;
            if !cam.intrinsics.contains(&proj.pixel) {
                return None;
            }
            let d = render.depth.get(proj.pixel.x as u32, proj.pixel.y as u32);
            (!is_valid_depth(d) || proj.depth < d).then_some(i)
        })
        .collect())
}

/// Clears previous links and links every target (model triangle index) to the
/// surrogates it sees.
pub fn inverse_visibility(
    mesh: &TriangleMesh,
    model: &FulfillmentModel,
    targets: &[usize],
    surrogates: &mut [SurrogateCamera],
    fov_deg: f64,
    size: u32,
) -> Result<()> {
    for s in surrogates.iter_mut() {
        s.reset();
    }
    for &t in targets {
        for i in linked_surrogates(mesh, &model.triangles[t], surrogates, fov_deg, size)? {
            surrogates[i].links.push(Link {
                triangle: t,
                gains: Vec::new(),
                best: 0.0,
            });
        }
    }
    Ok(())
}

/// Exact potential gain of a triplet centered at `position` and facing the triangle
/// directly, per bin.
pub fn potential_gain(
    position: &Point3<f64>,
    t: usize,
    model: &FulfillmentModel,
) -> Result<Vec<f64>> {
    let cfg = &model.cfg;
    let tri = &model.triangles[t];
    let dir = tri.centroid - position;
    let d = dir.norm();
    let source = model.source_curve(t, position);
    let mut gains = Vec::with_capacity(cfg.bins);
    for bin in 0..cfg.bins {
        let cams = make_triplet(position, &dir, d, cfg.bin_angle_deg(bin), &cfg.camera, 0)?;
        let g = match triplet_views(&cams, tri) {
            Some(v) => {
                (model.candidate_with(t, [&v[0], &v[1], &v[2]], source).f - model.f(t)).max(0.0)
            }
            None => 0.0,
        };
        gains.push(g);
    }
    Ok(gains)
}

/// Closed-form stand-in for [`potential_gain`], used only to weight orientation.
/// Each camera is treated as looking straight at the centroid, so its ground resolution
/// is `f^2 cos / D^2` and the information matrix is `f^2/D^2 (I - v v^T)`.
pub fn approximate_potential_gain(
    position: &Point3<f64>,
    t: usize,
    model: &FulfillmentModel,
    out: &mut Vec<f64>,
) {
    let cfg = &model.cfg;
    let tri = &model.triangles[t];
    out.clear();
    let dir = tri.centroid - position;
    let d = dir.norm();
    if !(d > 0.0) {
        out.resize(cfg.bins, 0.0);
        return;
    }
    let o = dir / d;
    let (u, w) = orthonormal_basis(&o);
    let source = model.source_curve(t, position);
    let focal = cfg.camera.focal();
    let f_t = model.f(t);
    let a = cfg.resolution_weight;
    let covered = model.observers[t].len() + model.planned_visible[t] + 3 >= cfg.min_cameras;
    for bin in 0..cfg.bins {
        let angle = cfg.bin_angle_deg(bin);
        let rho = triplet_radius(d, angle).unwrap_or(0.0);
        let dd2 = d * d + rho * rho;
        let mut res = f64::INFINITY;
        for k in 0..3 {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            let cam = position + (u * theta.cos() + w * theta.sin()) * rho;
            let cos = tri.normal.dot(&(cam - tri.centroid)) / dd2.sqrt();
            res = res.min(if cos > 0.0 {
                focal * focal * cos / dd2
            } else {
                0.0
            });
        }
        let sin2 = rho * rho / dd2;
        let lambda = 3.0 * (focal * focal / dd2) * sin2.min(1.0 - 0.5 * sin2);
        let f_res = (res / cfg.desired_resolution).clamp(0.0, 1.0);
        let f_unc = if lambda > 0.0 {
            (cfg.desired_accuracy * lambda.sqrt() / cfg.pixel_noise_std).min(1.0)
        } else {
            0.0
        };
        let conf = match (cfg.use_confidence, source) {
            (false, _) => 1.0,
            (true, Some(c)) => c.at_angle(angle),
            (true, None) => cfg.confidence_prior,
        };
        let f = if covered {
            (a * f_res + (1.0 - a) * f_unc) * conf
        } else {
            0.0
        };
        out.push((f - f_t).max(0.0));
    }
}

/// Weighted flat-kernel mean shift on unit directions, started from every positive-weight
/// direction. Returns the mode with the largest summed weight within the bandwidth (the
/// earliest start on ties) and that weight.
pub fn mean_shift_direction(
    directions: &[Vector3<f64>],
    weights: &[f64],
    bandwidth_rad: f64,
    max_iterations: usize,
    tolerance_rad: f64,
) -> Option<(Vector3<f64>, f64)> {
    let cos_bw = bandwidth_rad.cos();
    let window = |m: &Vector3<f64>| -> (Vector3<f64>, f64) {
        let mut sum = Vector3::zeros();
        let mut weight = 0.0;
        for (v, &w) in directions.iter().zip(weights) {
            if w > 0.0 && v.dot(m) >= cos_bw {
                sum += v * w;
                weight += w;
            }
        }
        (sum, weight)
    };
    let mut best: Option<(Vector3<f64>, f64)> = None;
    let mut modes: Vec<Vector3<f64>> = Vec::new();
    for (start, &w) in directions.iter().zip(weights) {
        if !(w > 0.0) {
            continue;
        }
        let mut m = *start;
        for _ in 0..max_iterations {
            let (sum, _) = window(&m);
            let n = sum.norm();
            if n == 0.0 {
                break;
            }
            let next = sum / n;
            let step = next.cross(&m).norm().atan2(next.dot(&m));
            m = next;
            if step < tolerance_rad {
                break;
            }
        }
        if modes
            .iter()
            .any(|q| q.dot(&m) > (tolerance_rad * 10.0).cos())
        {
            continue;
        }
        modes.push(m);
        let (_, weight) = window(&m);
        if best.is_none_or(|(_, bw)| weight > bw) {
            best = Some((m, weight));
        }
    }
    best
}

/// Orients every surrogate toward its dominant cluster of linked targets, keeps the links
/// inside the oriented frustum, sets the aim distance and computes exact per-bin gains of
/// the oriented triplets. Surrogates without positive gain lose their links.
pub fn orient_surrogates(
    surrogates: &mut [SurrogateCamera],
    model: &FulfillmentModel,
) -> Result<()> {
    let cfg = &model.cfg;
    let bandwidth = cfg.bandwidth().to_radians();
    let mut approx = Vec::with_capacity(cfg.bins);
    for s in surrogates.iter_mut() {
        if s.links.is_empty() {
            continue;
        }
        let mut dirs = Vec::with_capacity(s.links.len());
        let mut weights = Vec::with_capacity(s.links.len());
        for link in &s.links {
            approximate_potential_gain(&s.position, link.triangle, model, &mut approx);
            let d = model.triangles[link.triangle].centroid - s.position;
            dirs.push(d.normalize());
            weights.push(approx.iter().copied().fold(0.0, f64::max));
        }
        let Some((dir, _)) = mean_shift_direction(
            &dirs,
            &weights,
            bandwidth,
            cfg.mean_shift_iterations,
            cfg.mean_shift_tolerance_rad,
        ) else {
            s.reset();
            continue;
        };
        let frustum = Camera::new(
            CameraId(u32::MAX),
            cfg.camera,
            CameraPose::looking_along(s.position, dir, Vector3::z()),
        );
        let mut kept = Vec::new();
        let mut kept_weights = Vec::new();
        for (link, w) in s.links.drain(..).zip(weights) {
            let c = model.triangles[link.triangle].centroid;
            if frustum
                .project_point(&c)
                .is_some_and(|p| cfg.camera.contains(&p.pixel))
            {
                kept.push(link);
                kept_weights.push(w);
            }
        }
        if kept.is_empty() {
            s.reset();
            continue;
        }
        let aim = match cfg.aim_distance {
            Some(d) => d,
            None => {
                let total: f64 = kept_weights.iter().sum();
                let centroid = if total > 0.0 {
                    kept.iter()
                        .zip(&kept_weights)
                        .fold(Vector3::zeros(), |acc, (l, &w)| {
                            acc + model.triangles[l.triangle].centroid.coords * w
                        })
                        / total
                } else {
                    kept.iter().fold(Vector3::zeros(), |acc, l| {
                        acc + model.triangles[l.triangle].centroid.coords
                    }) / kept.len() as f64
                };
                let d = (Point3::from(centroid) - s.position).norm();
                if d > 0.0 {
                    d
                } else {
                    1.0
                }
            }
        };
        s.orientation = Some(dir);
        s.aim_distance = aim;
        s.links = kept;
        oriented_gains(s, model)?;
    }
    Ok(())
}

/// Exact per-bin gains of the oriented triplets for every link, without occlusion; an
/// upper bound of each triplet's gain over the same links.
pub fn oriented_gains(s: &mut SurrogateCamera, model: &FulfillmentModel) -> Result<()> {
    let cfg = &model.cfg;
    let Some(dir) = s.orientation else {
        return Ok(());
    };
    let triplets = (0..cfg.bins)
        .map(|bin| {
            make_triplet(
                &s.position,
                &dir,
                s.aim_distance,
                cfg.bin_angle_deg(bin),
                &cfg.camera,
                0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for link in &mut s.links {
        let t = link.triangle;
        let tri = &model.triangles[t];
        let source = model.source_curve(t, &s.position);
        link.gains.clear();
        for cams in &triplets {
            let g = match triplet_views(cams, tri) {
                Some(v) => {
                    (model.candidate_with(t, [&v[0], &v[1], &v[2]], source).f - model.f(t)).max(0.0)
                }
                None => 0.0,
            };
            link.gains.push(g);
        }
        link.best = link.gains.iter().copied().fold(0.0, f64::max);
        total += link.best;
    }
    s.total_gain = total;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::distance::build_distance_field;

    fn wall() -> TriangleMesh {
        // Vertical wall in the plane x = 0 facing +x.
        let v = vec![
            Point3::new(0.0, -10.0, -10.0),
            Point3::new(0.0, 10.0, -10.0),
            Point3::new(0.0, 10.0, 10.0),
            Point3::new(0.0, -10.0, 10.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], None).unwrap()
    }

    #[test]
    fn empty_scene_accepts_everything() {
        let field = build_distance_field(&TriangleMesh::default(), 1.0).unwrap();
        let s = sample_surrogates(
            &field,
            100,
            (Point3::origin(), Point3::new(1.0, 1.0, 1.0)),
            5.0,
            1,
        )
        .unwrap();
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn points_near_a_wall_are_rejected() {
        let field = build_distance_field(&wall(), 0.5).unwrap();
        assert!(field.clearance(&Point3::new(4.0, 0.0, 0.0)) < 5.0);
        let s = sample_surrogates(
            &field,
            50,
            (Point3::new(-20.0, -5.0, -5.0), Point3::new(20.0, 5.0, 5.0)),
            5.0,
            2,
        )
        .unwrap();
        assert!(s.iter().all(|c| c.position.x.abs() >= 5.0));
        assert!(matches!(
            sample_surrogates(
                &field,
                5,
                (Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)),
                5.0,
                3
            ),
            Err(Error::NoFreeSpace)
        ));
    }

    #[test]
    fn links_respect_front_side_and_occlusion() {
        let mesh = wall();
        let tri = TriangleInfo::new(&mesh, 0);
        let mut front = tri.centroid;
        front.x += 3.0;
        let mut behind = tri.centroid;
        behind.x -= 3.0;
        let surrogates = [SurrogateCamera::new(front), SurrogateCamera::new(behind)];
        assert_eq!(
            linked_surrogates(&mesh, &tri, &surrogates, 120.0, 64).unwrap(),
            vec![0]
        );

        let mut blocked = mesh.clone();
        let occluder = TriangleMesh::new(
            vec![
                Point3::new(1.5, -20.0, -20.0),
                Point3::new(1.5, 20.0, -20.0),
                Point3::new(1.5, 0.0, 20.0),
            ],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        blocked.append(&occluder);
        assert!(linked_surrogates(&blocked, &tri, &surrogates, 120.0, 64)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_cluster_gives_weighted_mean() {
        let dirs = [
            Vector3::new(1.0, 0.1, 0.0),
            Vector3::new(1.0, -0.1, 0.0),
            Vector3::new(1.0, 0.0, 0.05),
        ]
        .map(|v| v.normalize());
        let w = [1.0, 2.0, 1.0];
        let (m, weight) = mean_shift_direction(&dirs, &w, 0.5, 50, 1e-9).unwrap();
        let mean = (dirs[0] * 1.0 + dirs[1] * 2.0 + dirs[2] * 1.0).normalize();
        assert!((m - mean).norm() < 1e-9);
        assert_eq!(weight, 4.0);
    }

    #[test]
    fn heavier_cluster_wins() {
        let dirs = [Vector3::x(), -Vector3::x()];
        let (m, weight) = mean_shift_direction(&dirs, &[1.0, 3.0], 0.3, 50, 1e-9).unwrap();
        assert!((m + Vector3::x()).norm() < 1e-12);
        assert_eq!(weight, 3.0);
        assert!(mean_shift_direction(&dirs, &[0.0, 0.0], 0.3, 50, 1e-9).is_none());
    }
}
