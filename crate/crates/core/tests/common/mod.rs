//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod planning;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector2, Vector3};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use viewforge::confidence::ConfidenceImage;
use viewforge::geometry::mesh::{closest_point_on_triangle, planar_grid, ray_triangle};
use viewforge::geometry::{
    point_uncertainty, Camera, CameraId, CameraIntrinsics, CameraPose, FaceId, Render, TriangleMesh,
};
use viewforge::planner::PlannerConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ground grid plus up to `extra` random floating triangles.
pub fn random_mesh(rng: &mut impl Rng, extra: usize) -> TriangleMesh {
    let mut mesh = planar_grid([-1.5, -1.5], [3.0, 3.0], 5, 5);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for _ in 0..extra {
        let c = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.2..1.2),
        );
        let base = vertices.len() as u32;
        for _ in 0..3 {
            let d = Vector3::new(
                rng.random_range(-0.35..0.35),
                rng.random_range(-0.35..0.35),
                rng.random_range(-0.15..0.15),
            );
            vertices.push(c + d);
        }
        let [a, b, d] = [
            vertices[base as usize],
            vertices[base as usize + 1],
            vertices[base as usize + 2],
        ];
        if (b - a).cross(&(d - a)).norm() < 1e-3 {
            vertices.truncate(base as usize);
            continue;
        }
        faces.push([base, base + 1, base + 2]);
    }
    mesh.append(&TriangleMesh::new(vertices, faces, None).unwrap());
    mesh
}

/// Camera on the upper hemisphere around the origin looking near it.
pub fn random_camera(rng: &mut impl Rng, id: u32, intrinsics: CameraIntrinsics) -> Camera {
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let el = rng.random_range(20f64..85.0).to_radians();
    let r = rng.random_range(3.0..5.0);
    let center = Point3::new(
        r * el.cos() * az.cos(),
        r * el.cos() * az.sin(),
        r * el.sin(),
    );
    let target = Point3::new(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        0.3,
    );
    Camera::new(
        CameraId(id),
        intrinsics,
        CameraPose::look_at(center, target, Vector3::z()).unwrap(),
    )
}

/// Nearest face hit by the ray `origin + t dir`, `t > t_min`.
pub fn nearest_hit(
    mesh: &TriangleMesh,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    t_min: f64,
) -> Option<(FaceId, f64)> {
    let mut best: Option<(FaceId, f64)> = None;
    for f in 0..mesh.face_count() as FaceId {
        let [a, b, c] = mesh.face_vertices(f);
        if let Some(t) = ray_triangle(origin, dir, &a, &b, &c, t_min) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((f, t));
            }
        }
    }
    best
}

/// Face seen through the center of pixel `(x, y)` and its depth, by ray casting.
pub fn cast_pixel(mesh: &TriangleMesh, cam: &Camera, x: u32, y: u32) -> Option<(FaceId, f64)> {
    let dir = cam.ray_direction(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
    nearest_hit(mesh, &cam.center(), &dir, 1e-9)
}

/// Centroid visibility by a segment test. `None` for cases the pixel grid cannot decide:
/// a face-id change within one pixel of the projection, a projection within one pixel of
/// the image border, an occluder inside the depth-agreement band, or sub-pixel structure
/// where the pixel rays and the centroid segment disagree.
pub fn centroid_visible(mesh: &TriangleMesh, face: FaceId, cam: &Camera) -> Option<bool> {
    let centroid = mesh.centroid(face);
    let center = cam.center();
    if mesh.normal(face).dot(&(center - centroid)) <= 0.0 {
        return Some(false);
    }
    let Some(proj) = cam.project_point(&centroid) else {
        return Some(false);
    };
    let (w, h) = (
        cam.intrinsics.width() as f64,
        cam.intrinsics.height() as f64,
    );
    let p = proj.pixel;
    if p.x < 0.0 || p.y < 0.0 || p.x >= w || p.y >= h {
        return Some(false);
    }
    if p.x < 1.0 || p.y < 1.0 || p.x >= w - 1.0 || p.y >= h - 1.0 {
        return None;
    }
    let (px, py) = (p.x as u32, p.y as u32);
    let mut ids = Vec::new();
    for dy in -1i32..=1 {
        for dx in -1i32..=1 {
            ids.push(
                cast_pixel(mesh, cam, (px as i32 + dx) as u32, (py as i32 + dy) as u32)
                    .map(|h| h.0),
            );
        }
    }
    if ids.iter().any(|i| *i != ids[0]) {
        return None;
    }
    let dir = centroid - center;
    let mut visible = true;
    for f in 0..mesh.face_count() as FaceId {
        if f == face {
            continue;
        }
        let [a, b, c] = mesh.face_vertices(f);
        if let Some(t) = ray_triangle(&center, &dir, &a, &b, &c, 1e-9) {
            if (0.985..=1.015).contains(&t) {
                return None;
            }
            if t < 0.985 {
                visible = false;
            }
        }
    }
    if visible != (ids[0] == Some(face)) {
        return None;
    }
    Some(visible)
}

/// Smallest distance from `p` to any face.
pub fn distance_to_mesh(mesh: &TriangleMesh, p: &Point3<f64>) -> f64 {
    (0..mesh.face_count() as FaceId)
        .map(|f| {
            let [a, b, c] = mesh.face_vertices(f);
            (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Reprojection-error minimizing triangulation by Gauss-Newton with numeric Jacobians.
pub fn triangulate(cams: &[Camera], pixels: &[Vector2<f64>], start: Point3<f64>) -> Point3<f64> {
    let residual = |x: &Point3<f64>| -> Vec<f64> {
        cams.iter()
            .zip(pixels)
            .flat_map(|(c, m)| {
                let q = c.pose.to_camera(x);
                let f = c.intrinsics.focal();
                let [cx, cy] = c.intrinsics.principal_point();
                [f * q.x / q.z + cx - m.x, f * q.y / q.z + cy - m.y]
            })
            .collect()
    };
    let mut x = start;
    for _ in 0..8 {
        let r0 = residual(&x);
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        let h = 1e-6 * (1.0 + x.coords.norm());
        let mut cols = Vec::new();
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let (rp, rm) = (residual(&xp), residual(&xm));
            cols.push(
                rp.iter()
                    .zip(&rm)
                    .map(|(p, m)| (p - m) / (2.0 * h))
                    .collect::<Vec<f64>>(),
            );
        }
        for a in 0..3 {
            for b in 0..3 {
                jtj[(a, b)] = cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum();
            }
            jtr[a] = cols[a].iter().zip(&r0).map(|(u, v)| u * v).sum();
        }
        let Some(step) = jtj.try_inverse().map(|m| m * jtr) else {
            break;
        };
        x -= step;
        if step.norm() < 1e-12 {
            break;
        }
    }
    x
}

/// Largest eigenvalue of the sample covariance of noisy triangulations of `point`.
pub fn monte_carlo_u(
    cams: &[Camera],
    point: &Point3<f64>,
    noise: f64,
    trials: usize,
    seed: u64,
) -> f64 {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let clean: Vec<Vector2<f64>> = cams
        .iter()
        .map(|c| c.project_point(point).unwrap().pixel)
        .collect();
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let noisy: Vec<Vector2<f64>> = clean
            .iter()
            .map(|p| p + Vector2::new(normal.sample(&mut r), normal.sample(&mut r)))
            .collect();
        samples.push(triangulate(cams, &noisy, *point).coords);
    }
    let mean = samples.iter().sum::<Vector3<f64>>() / trials as f64;
    let cov = samples
        .iter()
        .map(|s| (s - mean) * (s - mean).transpose())
        .sum::<Matrix3<f64>>()
        / (trials - 1) as f64;
    SymmetricEigen::new(cov).eigenvalues.max()
}

/// Sparsification area by enumerating every removal order consistent with ascending
/// confidence and averaging the resulting curves.
pub fn brute_force_ausc(confidence: &[f64], errors: &[bool]) -> f64 {
    fn walk(
        conf: &[f64],
        err: &[bool],
        left: &mut Vec<usize>,
        acc: f64,
        total: &mut f64,
        count: &mut f64,
    ) {
        if left.is_empty() {
            *total += acc;
            *count += 1.0;
            return;
        }
        let retained_errors = left.iter().filter(|&&i| err[i]).count() as f64;
        let rate = retained_errors / left.len() as f64;
        let lowest = left.iter().map(|&i| conf[i]).fold(f64::INFINITY, f64::min);
        let candidates: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| conf[i] == lowest)
            .collect();
        for i in candidates {
            let pos = left.iter().position(|&j| j == i).unwrap();
            left.remove(pos);
            walk(conf, err, left, acc + rate, total, count);
            left.insert(pos, i);
        }
    }
    let mut left: Vec<usize> = (0..confidence.len()).collect();
    let (mut total, mut count) = (0.0, 0.0);
    walk(confidence, errors, &mut left, 0.0, &mut total, &mut count);
    total / count / confidence.len() as f64
}

/// Fraction of `a`'s geometry-covered samples on a 32x32 grid whose point `b` sees,
/// with the point at most 1% behind `b`'s depth.
pub fn overlap(a: &Render, b: &Render) -> f64 {
    let n = 32;
    let (w, h) = (a.depth.width as f64, a.depth.height as f64);
    let (mut seen, mut shared) = (0, 0);
    for j in 0..n {
        for i in 0..n {
            let px = Vector2::new(
                (i as f64 + 0.5) * w / n as f64,
                (j as f64 + 0.5) * h / n as f64,
            );
            let d = a.depth.depths[px.y as usize * a.depth.width as usize + px.x as usize];
            if !d.is_finite() {
                continue;
            }
            seen += 1;
            let f = a.camera.intrinsics.focal();
            let [cx, cy] = a.camera.intrinsics.principal_point();
            let world =
                a.camera
                    .pose
                    .to_world(&Vector3::new((px.x - cx) / f * d, (px.y - cy) / f * d, d));
            let q = b.camera.pose.to_camera(&world);
            if q.z <= 0.0 {
                continue;
            }
            let fb = b.camera.intrinsics.focal();
            let [bx, by] = b.camera.intrinsics.principal_point();
            let (u, v) = (fb * q.x / q.z + bx, fb * q.y / q.z + by);
            let (bw, bh) = (b.depth.width as f64, b.depth.height as f64);
            if !(u >= 0.0 && v >= 0.0 && u < bw && v < bh) {
                continue;
            }
            let db = b.depth.depths[v as usize * b.depth.width as usize + u as usize];
            if db.is_finite() && q.z <= db * 1.01 {
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

/// Pairwise angle at `p` between the rays to `a` and `b`, degrees.
pub fn angle_at(a: &Point3<f64>, b: &Point3<f64>, p: &Point3<f64>) -> f64 {
    let (u, v) = ((a - p).normalize(), (b - p).normalize());
    u.dot(&v).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Confidence grid for `cam` with node values drawn uniformly from `lo..1`.
pub fn random_confidence(
    rng: &mut impl Rng,
    cam: &Camera,
    bins: usize,
    gamma_max_deg: f64,
    lo: f32,
) -> ConfidenceImage {
    let step = 8;
    let (w, h) = (cam.intrinsics.width(), cam.intrinsics.height());
    let (nx, ny) = ((w - 1) / step + 1, (h - 1) / step + 1);
    ConfidenceImage {
        image: cam.id,
        step,
        bins,
        gamma_max_deg,
        width: w,
        height: h,
        nodes_x: nx,
        nodes_y: ny,
        values: (0..bins as u32 * nx * ny)
            .map(|_| rng.random_range(lo..1.0))
            .collect(),
    }
}

/// Confidence at the grid node nearest to where `cam` sees `p`, in the bin holding `angle_deg`.
pub fn read_confidence(
    img: &ConfidenceImage,
    cam: &Camera,
    p: &Point3<f64>,
    angle_deg: f64,
) -> f64 {
    let px = cam.project_point(p).unwrap().pixel;
    let node = |v: f64, n: u32| ((v / img.step as f64).round().max(0.0) as u32).min(n - 1);
    let (i, j) = (node(px.x, img.nodes_x), node(px.y, img.nodes_y));
    let width = img.gamma_max_deg / img.bins as f64;
    let bin = ((angle_deg / width).floor() as usize).min(img.bins - 1);
    img.values[bin * (img.nodes_x * img.nodes_y) as usize + (j * img.nodes_x + i) as usize] as f64
}

/// Pixel area of the projected triangle per square meter of its surface.
pub fn pixels_per_area(cam: &Camera, tri: &[Point3<f64>; 3]) -> f64 {
    let [a, b, c] = tri;
    let n = (b - a).cross(&(c - a));
    let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
    if n.dot(&(cam.center() - centroid)) <= 0.0 {
        return 0.0;
    }
    let mut px = Vec::new();
    for p in tri {
        match cam.project_point(p) {
            Some(q) => px.push(q.pixel),
            None => return 0.0,
        }
    }
    let e1 = px[1] - px[0];
    let e2 = px[2] - px[0];
    0.5 * (e1.x * e2.y - e1.y * e2.x).abs() / (0.5 * n.norm())
}

/// Weighted fulfillment of one triplet with the given confidence, before the coverage gate.
pub fn triplet_quality(
    cfg: &PlannerConfig,
    cams: &[Camera; 3],
    tri: &[Point3<f64>; 3],
    confidence: f64,
) -> f64 {
    let centroid = Point3::from((tri[0].coords + tri[1].coords + tri[2].coords) / 3.0);
    let r = cams
        .iter()
        .map(|c| pixels_per_area(c, tri))
        .fold(f64::INFINITY, f64::min);
    let f_res = (r / cfg.desired_resolution).min(1.0);
    let f_unc = point_uncertainty(cams, &centroid, cfg.pixel_noise_std)
        .map_or(0.0, |e| (cfg.desired_accuracy / e.u.sqrt()).min(1.0));
    let a = cfg.resolution_weight;
    (a * f_res + (1.0 - a) * f_unc) * confidence
}

/// Smallest pairwise angle at `p` between the three camera centers, degrees.
pub fn min_pair_angle(cams: &[Camera; 3], p: &Point3<f64>) -> f64 {
    let c = cams.each_ref().map(|c| c.center());
    angle_at(&c[0], &c[1], p)
        .min(angle_at(&c[0], &c[2], p))
        .min(angle_at(&c[1], &c[2], p))
}
