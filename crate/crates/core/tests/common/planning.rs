//! Random planning instances and term-by-term recomputations of planner quantities.

use std::collections::HashMap;

use nalgebra::Point3;

use super::{
    min_pair_angle, random_camera, random_confidence, random_mesh, read_confidence, rng,
    triplet_quality,
};
use viewforge::confidence::ConfidenceImage;
use viewforge::geometry::visibility::face_visible_in;
use viewforge::geometry::{render_depth, Camera, CameraId, CameraIntrinsics, FaceId, TriangleMesh};
use viewforge::planner::fulfillment::{estimate_fulfillment, FulfillmentRecord};
use viewforge::planner::targets::select_target_indices;
use viewforge::planner::triplet::CameraTriplet;
use viewforge::planner::{
    build_distance_field, inverse_visibility, orient_surrogates, sample_surrogates, DistanceField,
    FulfillmentModel, PlannerConfig, SurrogateCamera,
};

pub fn tiny() -> CameraIntrinsics {
    CameraIntrinsics::from_horizontal_fov(60.0, 80, 60).unwrap()
}

pub fn small_cfg() -> PlannerConfig {
    PlannerConfig {
        camera: tiny(),
        desired_resolution: 600.0,
        desired_accuracy: 0.1,
        bins: 5,
        gamma_max_deg: 45.0,
        safety_distance: 0.3,
        voxel_resolution: 0.1,
        ..Default::default()
    }
}

/// Captured cameras that see `face` and carry a confidence grid.
pub fn observers_with_confidence<'a>(
    mesh: &TriangleMesh,
    face: FaceId,
    cams: &'a [Camera],
    confs: &'a HashMap<CameraId, ConfidenceImage>,
) -> Vec<(&'a Camera, &'a ConfidenceImage)> {
    cams.iter()
        .filter(|c| face_visible_in(&render_depth(c, mesh, 1), mesh, face))
        .filter_map(|c| confs.get(&c.id).map(|img| (c, img)))
        .collect()
}

/// Best fulfillment over all triplets of captured cameras seeing the triangle.
pub fn brute_force_f(
    cfg: &PlannerConfig,
    mesh: &TriangleMesh,
    face: FaceId,
    cams: &[Camera],
    confs: &HashMap<CameraId, ConfidenceImage>,
) -> f64 {
    let tri = mesh.face_vertices(face);
    let centroid = mesh.centroid(face);
    let seen: Vec<&Camera> = cams
        .iter()
        .filter(|c| face_visible_in(&render_depth(c, mesh, 1), mesh, face))
        .collect();
    if seen.len() < cfg.min_cameras {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for i in 0..seen.len() {
        for j in i + 1..seen.len() {
            for k in j + 1..seen.len() {
                let trip = [*seen[i], *seen[j], *seen[k]];
                let angle = min_pair_angle(&trip, &centroid);
                let nearest = trip
                    .iter()
                    .filter(|c| confs.contains_key(&c.id))
                    .min_by(|a, b| {
                        (a.center() - centroid)
                            .norm()
                            .total_cmp(&(b.center() - centroid).norm())
                    });
                let conf = match nearest {
                    Some(c) if cfg.use_confidence => {
                        read_confidence(&confs[&c.id], c, &centroid, angle)
                    }
                    _ if cfg.use_confidence => unreachable!("every camera has a grid"),
                    _ => 1.0,
                };
                best = best.max(triplet_quality(cfg, &trip, &tri, conf));
            }
        }
    }
    best
}

/// Components in range and `f` equal to its defining product.
pub fn record_consistent(cfg: &PlannerConfig, r: &FulfillmentRecord) -> bool {
    let a = cfg.resolution_weight;
    let expected = (a * r.f_res + (1.0 - a) * r.f_unc) * r.f_cov as f64 * r.f_conf;
    [r.f_res, r.f_unc, r.f_conf, r.f]
        .iter()
        .all(|v| (0.0..=1.0).contains(v))
        && r.f_cov <= 1
        && (r.f - expected).abs() < 1e-12
}

pub struct Instance {
    pub mesh: TriangleMesh,
    pub cams: Vec<Camera>,
    pub confs: HashMap<CameraId, ConfidenceImage>,
    pub field: DistanceField,
    pub model: FulfillmentModel,
    pub targets: Vec<usize>,
    pub surrogates: Vec<SurrogateCamera>,
}

pub fn instance(seed: u64) -> Instance {
    let mut r = rng(1000 + seed);
    let mesh = random_mesh(&mut r, 12);
    let cams: Vec<Camera> = (0..4).map(|i| random_camera(&mut r, i, tiny())).collect();
    let confs: HashMap<CameraId, ConfidenceImage> = cams
        .iter()
        .map(|c| (c.id, random_confidence(&mut r, c, 5, 45.0, 0.2)))
        .collect();
    let list: Vec<ConfidenceImage> = cams.iter().map(|c| confs[&c.id].clone()).collect();
    let cfg = small_cfg();
    let faces: Vec<FaceId> = (0..mesh.face_count() as FaceId).collect();
    let model = estimate_fulfillment(&cams, &mesh, &faces, &list, &cfg).unwrap();
    let field = build_distance_field(&mesh, cfg.voxel_resolution).unwrap();
    let targets = select_target_indices(&model.records, 30, seed);
    let mut surrogates = sample_surrogates(
        &field,
        15,
        (Point3::new(-2.5, -2.5, 1.0), Point3::new(2.5, 2.5, 4.0)),
        cfg.safety_distance,
        seed,
    )
    .unwrap();
    inverse_visibility(
        &mesh,
        &model,
        &targets,
        &mut surrogates,
        cfg.virtual_fov_deg,
        cfg.virtual_resolution,
    )
    .unwrap();
    orient_surrogates(&mut surrogates, &model).unwrap();
    Instance {
        mesh,
        cams,
        confs,
        field,
        model,
        targets,
        surrogates,
    }
}

/// Gain of a planned triplet summed term by term over the surrogate's links.
pub fn recomputed_gain(inst: &Instance, s: &SurrogateCamera, trip: &CameraTriplet) -> f64 {
    let model = &inst.model;
    let cfg = &model.cfg;
    let renders: Vec<_> = trip
        .cameras
        .iter()
        .map(|c| render_depth(c, &inst.mesh, 1))
        .collect();
    let mut g = 0.0;
    for link in &s.links {
        let t = link.triangle;
        let face = model.triangles[t].face;
        let tri = inst.mesh.face_vertices(face);
        let centroid = inst.mesh.centroid(face);
        if !renders.iter().all(|r| face_visible_in(r, &inst.mesh, face)) {
            continue;
        }
        if trip
            .cameras
            .iter()
            .any(|c| c.project_point(&centroid).is_none())
        {
            continue;
        }
        let angle = min_pair_angle(&trip.cameras, &centroid);
        let source = observers_with_confidence(&inst.mesh, face, &inst.cams, &inst.confs)
            .into_iter()
            .min_by(|a, b| {
                (a.0.center() - trip.center)
                    .norm()
                    .total_cmp(&(b.0.center() - trip.center).norm())
            });
        let conf = match source {
            Some((c, img)) => read_confidence(img, c, &centroid, angle),
            None => cfg.confidence_prior,
        };
        g += (triplet_quality(cfg, &trip.cameras, &tri, conf) - model.f(t)).max(0.0);
    }
    g
}
