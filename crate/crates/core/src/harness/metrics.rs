//! Coverage, fulfillment and accuracy of an executed acquisition.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::acquisition::AcquisitionLog;
use super::scene::SyntheticScene;
use crate::geometry::mesh::closest_point_on_triangle;
use crate::geometry::raster::{is_valid_depth, render_depth, Render};
use crate::geometry::visibility::face_visible_in;
use crate::geometry::{
    shrink_expand_mesh, subdivide_to_edge, Camera, CameraId, DepthMap, FaceId, TriangleMesh,
};
use crate::planner::fulfillment::{combine, score_views, TriangleInfo, View};
use crate::planner::PlannerConfig;
use crate::Result;

/// 68.3% of a normal distribution lies within one standard deviation.
pub const ONE_SIGMA_QUANTILE: f64 = 0.683;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// A measurement counts when it is deeper than, or at most this much in front of, the
    /// triangle, m. An infinite tolerance disables the depth test.
    pub acceptance_tolerance: f64,
    /// Region triangles are split until no edge is longer, m.
    pub max_edge: f64,
    pub histogram_bins: usize,
    /// Upper end of the error histogram, m; larger errors land in the last bin.
    pub histogram_max: f64,
    /// Fulfillment requirements (cameras, resolution, accuracy, weighting).
    pub planner: PlannerConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            acceptance_tolerance: 0.03,
            max_edge: 0.05,
            histogram_bins: 50,
            histogram_max: 0.05,
            planner: PlannerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Percentages over the region triangles of one evaluation mesh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub coverage: f64,
    pub f_res: f64,
    pub f_unc: f64,
    pub f: f64,
    pub triangles: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub bin_centers: Vec<f64>,
    /// Fraction of points per bin; sums to one.
    pub mass: Vec<f64>,
    /// 68.3rd percentile of the unsigned error, m.
    pub one_sigma: f64,
    /// Percentage of reference faces with at least one point within tolerance.
    pub surface_coverage: f64,
    pub points: usize,
}

impl ErrorHistogram {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "bin_center,mass")?;
        for (c, m) in self.bin_centers.iter().zip(&self.mass) {
            writeln!(out, "{c},{m}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub coverage: Stat,
    pub f_res: Stat,
    pub f_unc: Stat,
    pub f: Stat,
    /// Base, shrunk and expanded mesh, in that order.
    pub per_mesh: Vec<MeshStats>,
    pub histogram: ErrorHistogram,
    /// Fraction of planned triplets with any output; `None` without planned triplets.
    pub success_rate: Option<f64>,
    pub images: usize,
    pub triplets: usize,
}

impl Metrics {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Depth maps grouped by camera: every output a camera took part in.
fn outputs_by_camera(log: &AcquisitionLog) -> HashMap<CameraId, Vec<&DepthMap>> {
    let mut map: HashMap<CameraId, Vec<&DepthMap>> = HashMap::new();
    for out in &log.outputs {
        for d in out {
            map.entry(d.camera).or_default().push(d);
        }
    }
    map
}

fn accepted(maps: &[&DepthMap], camera: &Camera, point: &Point3<f64>, tolerance: f64) -> bool {
    if tolerance.is_infinite() {
        return true;
    }
    let Some(proj) = camera.project_point(point) else {
        return false;
    };
    maps.iter().any(|m| {
        m.pixel_at(&proj.pixel).is_some_and(|(x, y)| {
            let d = m.get(x, y);
            is_valid_depth(d) && d >= proj.depth - tolerance
        })
    })
}

/// Statistics of one evaluation mesh, whose region is `roi`.
pub fn evaluate_mesh(
    log: &AcquisitionLog,
    mesh: &TriangleMesh,
    roi: &[FaceId],
    cfg: &EvaluationConfig,
) -> Result<MeshStats> {
    let sub = subdivide_to_edge(mesh, roi, cfg.max_edge)?;
    let n = sub.roi.len();
    if log.cameras.is_empty() {
        return Ok(MeshStats {
            triangles: n,
            ..Default::default()
        });
    }
    let renders: Vec<Render> = log
        .cameras
        .iter()
        .map(|c| render_depth(c, &sub.mesh, 1))
        .collect();
    let index: HashMap<CameraId, usize> = log
        .cameras
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id, i))
        .collect();
    let outputs = outputs_by_camera(log);
    let none: Vec<&DepthMap> = Vec::new();
    let pc = &cfg.planner;

    let (mut covered, mut f_res, mut f_unc, mut f) = (0usize, 0.0, 0.0, 0.0);
    for &t in &sub.roi {
        let info = TriangleInfo::new(&sub.mesh, t);
        let mut measured = vec![false; log.cameras.len()];
        let mut visible = vec![false; log.cameras.len()];
        for (i, (cam, r)) in log.cameras.iter().zip(&renders).enumerate() {
            if !face_visible_in(r, &sub.mesh, t) {
                continue;
            }
            visible[i] = true;
            let maps = outputs.get(&cam.id).unwrap_or(&none);
            measured[i] = accepted(maps, cam, &info.centroid, cfg.acceptance_tolerance);
        }
        let is_covered = measured.iter().filter(|&&m| m).count() >= pc.min_cameras;
        if !is_covered {
            continue;
        }
        covered += 1;
        let mut best: Option<(f64, f64, f64)> = None;
        for rec in &log.captures {
            let Some(ids) = rec
                .cameras
                .iter()
                .map(|c| index.get(&CameraId(*c)).copied())
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            if !rec.success || !ids.iter().all(|&i| visible[i]) || !ids.iter().any(|&i| measured[i])
            {
                continue;
            }
            let views: Option<Vec<View>> = ids
                .iter()
                .map(|&i| View::new(&log.cameras[i], &info))
                .collect();
            let Some(views) = views else { continue };
            let score = score_views(pc, [&views[0], &views[1], &views[2]]);
            let value = combine(pc, &score, true, 1.0);
            // Ties fall to the higher resolution term, which fixes the uncertainty term too.
            if best.is_none_or(|b| (value, score.f_res) > (b.0, b.1)) {
                best = Some((value, score.f_res, score.f_unc));
            }
        }
        if let Some((v, r, u)) = best {
            f += v;
            f_res += r;
            f_unc += u;
        }
    }
    let pct = |v: f64| if n == 0 { 0.0 } else { 100.0 * v / n as f64 };
    Ok(MeshStats {
        coverage: pct(covered as f64),
        f_res: pct(f_res),
        f_unc: pct(f_unc),
        f: pct(f),
        triangles: n,
    })
}

/// Metrics over the base, shrunk and expanded scene meshes, plus the error histogram of
/// accepted points against the ground truth.
pub fn evaluate_metrics(
    log: &AcquisitionLog,
    scene: &SyntheticScene,
    cfg: &EvaluationConfig,
) -> Result<Metrics> {
    let (shrunk, expanded) = shrink_expand_mesh(&scene.mesh);
    let per_mesh = [&scene.mesh, &shrunk, &expanded]
        .into_iter()
        .map(|m| evaluate_mesh(log, m, &scene.roi, cfg))
        .collect::<Result<Vec<_>>>()?;
    let stat = |f: fn(&MeshStats) -> f64| Stat::of(&per_mesh.iter().map(f).collect::<Vec<_>>());

    let truth = scene.ground_truth();
    let points = accepted_points(log, truth, &scene.roi, cfg.acceptance_tolerance);
    let reference = truth.extract(&scene.roi);
    let histogram = if points.is_empty() {
        ErrorHistogram {
            surface_coverage: 0.0,
            ..Default::default()
        }
    } else {
        error_histogram(
            &points,
            &reference,
            cfg.acceptance_tolerance,
            cfg.histogram_bins,
            cfg.histogram_max,
        )
    };
    Ok(Metrics {
        coverage: stat(|m| m.coverage),
        f_res: stat(|m| m.f_res),
        f_unc: stat(|m| m.f_unc),
        f: stat(|m| m.f),
        per_mesh,
        histogram,
        success_rate: log.success_rate(),
        images: log.cameras.len(),
        triplets: log.captures.len(),
    })
}

/// 3D points of all output pixels that see a region face and pass the acceptance rule
/// against the ground-truth depth.
pub fn accepted_points(
    log: &AcquisitionLog,
    truth: &TriangleMesh,
    roi: &[FaceId],
    tolerance: f64,
) -> Vec<Point3<f64>> {
    let in_roi: std::collections::HashSet<FaceId> = roi.iter().copied().collect();
    let cams: HashMap<CameraId, &Camera> = log.cameras.iter().map(|c| (c.id, c)).collect();
    let mut renders: HashMap<CameraId, Render> = HashMap::new();
    let mut points = Vec::new();
    for out in &log.outputs {
        for d in out {
            if d.valid_count() == 0 {
                continue;
            }
            let Some(cam) = cams.get(&d.camera) else {
                continue;
            };
            let r = renders
                .entry(d.camera)
                .or_insert_with(|| render_depth(cam, truth, d.downscale));
            for y in 0..d.height {
                for x in 0..d.width {
                    let m = d.get(x, y);
                    if !is_valid_depth(m) {
                        continue;
                    }
                    let Some(face) = r.face_at(x, y) else {
                        continue;
                    };
                    if !in_roi.contains(&face) || m < r.depth.get(x, y) - tolerance {
                        continue;
                    }
                    points.push(r.camera.unproject(&Render::pixel_center(x, y), m));
                }
            }
        }
    }
    points
}

/// Uniform grid over face bounding boxes for nearest-face queries.
struct FaceGrid<'a> {
    mesh: &'a TriangleMesh,
    origin: Point3<f64>,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<FaceId>>,
}

impl<'a> FaceGrid<'a> {
    fn new(mesh: &'a TriangleMesh) -> Self {
        let (lo, hi) = mesh
            .bounds()
            .unwrap_or((Point3::origin(), Point3::origin()));
        let extent = hi - lo;
        let mean_edge = (0..mesh.face_count() as FaceId)
            .flat_map(|f| mesh.edge_lengths(f))
            .sum::<f64>()
            / (3 * mesh.face_count().max(1)) as f64;
        let cap = (extent.x.max(extent.y).max(extent.z) / 128.0).max(1e-9);
        let cell = (2.0 * mean_edge).max(cap);
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as usize + 1).max(1));
        let mut grid = Self {
            mesh,
            origin: lo,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for f in 0..mesh.face_count() as FaceId {
            let v = mesh.face_vertices(f);
            let a = grid.cell_of(&v.iter().fold(v[0], |m, p| m.inf(p)));
            let b = grid.cell_of(&v.iter().fold(v[0], |m, p| m.sup(p)));
            for k in a[2]..=b[2] {
                for j in a[1]..=b[1] {
                    for i in a[0]..=b[0] {
                        let idx = grid.index([i, j, k]);
                        grid.cells[idx].push(f);
                    }
                }
            }
        }
        grid
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_of(&self, p: &Point3<f64>) -> [usize; 3] {
        let d: Vector3<f64> = (p - self.origin) / self.cell;
        [0, 1, 2].map(|k| (d[k].floor().max(0.0) as usize).min(self.dims[k] - 1))
    }

    /// Nearest face and its distance. Rings of cells are searched outward until no
    /// unsearched cell can hold a closer face.
    fn nearest(&self, p: &Point3<f64>) -> (FaceId, f64) {
        let c = self.cell_of(p);
        let max_ring = *self.dims.iter().max().unwrap();
        let mut best = (0, f64::INFINITY);
        for ring in 0..=max_ring {
            let r = ring as i64;
            for k in -r..=r {
                for j in -r..=r {
                    for i in -r..=r {
                        if i.abs().max(j.abs()).max(k.abs()) != r {
                            continue;
                        }
                        let q = [c[0] as i64 + i, c[1] as i64 + j, c[2] as i64 + k];
                        if (0..3).any(|a| q[a] < 0 || q[a] >= self.dims[a] as i64) {
                            continue;
                        }
                        for &f in &self.cells[self.index(q.map(|v| v as usize))] {
                            let [a, b, cc] = self.mesh.face_vertices(f);
                            let d = (closest_point_on_triangle(p, &a, &b, &cc) - p).norm();
                            if d < best.1 || (d == best.1 && f < best.0) {
                                best = (f, d);
                            }
                        }
                    }
                }
            }
            // Any face outside rings 0..=ring lies further than `ring * cell` from p's cell.
            if best.1 <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

/// Histogram of unsigned point-to-surface distances, the 68.3rd percentile and the share
/// of reference faces that received a point within `tolerance`.
pub fn error_histogram(
    points: &[Point3<f64>],
    reference: &TriangleMesh,
    tolerance: f64,
    bins: usize,
    max_error: f64,
) -> ErrorHistogram {
    let bins = bins.max(1);
    let grid = FaceGrid::new(reference);
    let mut hit = vec![false; reference.face_count()];
    let mut errors: Vec<f64> = points
        .iter()
        .map(|p| {
            let (f, d) = grid.nearest(p);
            if d <= tolerance {
                hit[f as usize] = true;
            }
            d
        })
        .collect();
    let width = max_error / bins as f64;
    let mut mass = vec![0.0; bins];
    for &e in &errors {
        let b = ((e / width).floor() as usize).min(bins - 1);
        mass[b] += 1.0;
    }
    let n = errors.len().max(1) as f64;
    mass.iter_mut().for_each(|m| *m /= n);
    errors.sort_by(f64::total_cmp);
    let one_sigma = if errors.is_empty() {
        0.0
    } else {
        let rank =
            ((ONE_SIGMA_QUANTILE * errors.len() as f64).ceil() as usize).clamp(1, errors.len());
        errors[rank - 1]
    };
    ErrorHistogram {
        bin_centers: (0..bins).map(|b| (b as f64 + 0.5) * width).collect(),
        mass,
        one_sigma,
        surface_coverage: 100.0 * hit.iter().filter(|&&h| h).count() as f64
            / reference.face_count().max(1) as f64,
        points: points.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::planar_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn points_on_the_mesh_have_zero_error() {
        let mesh = planar_grid([0.0, 0.0], [1.0, 1.0], 4, 4);
        let pts: Vec<_> = (0..mesh.face_count() as FaceId)
            .map(|f| mesh.centroid(f))
            .collect();
        let h = error_histogram(&pts, &mesh, 1e-6, 10, 0.01);
        assert!(h.one_sigma < 1e-12);
        assert_eq!(h.mass[0], 1.0);
        assert_eq!(h.surface_coverage, 100.0);
    }

    #[test]
    fn injected_noise_gives_its_sigma() {
        let mesh = planar_grid([0.0, 0.0], [2.0, 2.0], 20, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 0.005).unwrap();
        let pts: Vec<_> = (0..20_000)
            .map(|i| {
                Point3::new(
                    0.2 + (i % 157) as f64 * 0.01,
                    0.2 + (i / 157) as f64 * 0.0125,
                    normal.sample(&mut rng),
                )
            })
            .collect();
        let h = error_histogram(&pts, &mesh, 0.02, 50, 0.05);
        assert!((h.one_sigma - 0.005).abs() < 0.0005, "{}", h.one_sigma);
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_nearest_matches_brute_force() {
        let mut mesh = planar_grid([0.0, 0.0], [1.0, 1.0], 6, 6);
        mesh.append(&crate::geometry::mesh::ellipsoid(
            Point3::new(0.5, 0.5, 0.3),
            Vector3::new(0.2, 0.3, 0.1),
            12,
            6,
        ));
        let grid = FaceGrid::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        for _ in 0..500 {
            let p = Point3::new(
                rng.random_range(-0.5..1.5),
                rng.random_range(-0.5..1.5),
                rng.random_range(-0.5..1.0),
            );
            let brute = (0..mesh.face_count() as FaceId)
                .map(|f| {
                    let [a, b, c] = mesh.face_vertices(f);
                    (closest_point_on_triangle(&p, &a, &b, &c) - p).norm()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((grid.nearest(&p).1 - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn stat_is_population_mean_and_std() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert!((s.mean - 2.0).abs() < 1e-12);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
