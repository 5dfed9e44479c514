//! The iterative planning loop.

use std::collections::HashSet;
use std::time::Instant;

use log::info;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PlannerConfig;
use super::distance::{build_distance_field, DistanceField};
use super::fulfillment::{estimate_fulfillment, select_triangles, warn_on_prior, FulfillmentModel};
use super::surrogate::{inverse_visibility, orient_surrogates, sample_surrogates, SurrogateCamera};
use super::targets::select_target_indices;
use super::triplet::{best_triplet, triplet_views, CameraTriplet, SearchStats};
use crate::confidence::ConfidenceImage;
use crate::geometry::visibility::face_visible_in;
use crate::geometry::{render_depth, subdivide_roi, Camera, FaceId, Render, TriangleMesh};
use crate::Result;

/// Planner input: current cameras, mesh, region and per-image confidence.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub cameras: &'a [Camera],
    pub mesh: &'a TriangleMesh,
    pub roi: &'a [FaceId],
    pub confidences: &'a [ConfidenceImage],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub targets: usize,
    pub linked_surrogates: usize,
    pub oriented_surrogates: usize,
    pub gain: f64,
    /// Sum of `f` over the iteration's targets before and after the append.
    pub target_fulfillment_before: f64,
    pub target_fulfillment_after: f64,
    pub stats: SearchStats,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub triplets: Vec<CameraTriplet>,
    /// Mesh with the region subdivided; planned views refer to it.
    pub mesh: TriangleMesh,
    pub roi: Vec<FaceId>,
    pub field: DistanceField,
    pub model: FulfillmentModel,
    pub initial_fulfillment: f64,
    pub iterations: Vec<IterationReport>,
    pub seconds: f64,
}

/// Sampling box for surrogates: the region's bounds grown by the configured margins.
pub fn surrogate_bounds(
    mesh: &TriangleMesh,
    roi: &[FaceId],
    cfg: &PlannerConfig,
) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::from(Vector3::repeat(f64::INFINITY));
    let mut hi = Point3::from(Vector3::repeat(f64::NEG_INFINITY));
    for &f in roi {
        for v in mesh.face_vertices(f) {
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
    }
    let top = mesh.bounds().map_or(hi.z, |(_, h)| h.z.max(hi.z));
    let m = cfg.horizontal_margin;
    (
        Point3::new(lo.x - m, lo.y - m, lo.z),
        Point3::new(hi.x + m, hi.y + m, top + cfg.vertical_margin),
    )
}

/// Plans up to `triplets_per_call` triplets. Each accepted triplet is credited to the
/// fulfillment state before the next one is searched.
pub fn plan_views(snapshot: &Snapshot, cfg: &PlannerConfig, seed: u64) -> Result<PlanOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let sub = subdivide_roi(snapshot.mesh, snapshot.roi)?;
    let mesh = sub.mesh;
    let field = build_distance_field(&mesh, cfg.voxel_resolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triangles = select_triangles(&sub.roi, cfg.fulfillment_samples, &mut rng)?;
    let mut model = estimate_fulfillment(
        snapshot.cameras,
        &mesh,
        &triangles,
        snapshot.confidences,
        cfg,
    )?;
    warn_on_prior(&model.records);
    let initial_fulfillment = model.total();
    let bounds = surrogate_bounds(&mesh, &sub.roi, cfg);
    let mut surrogates = sample_surrogates(
        &field,
        cfg.surrogate_samples,
        bounds,
        cfg.safety_distance,
        rng.random(),
    )?;
    let mut next_id = snapshot
        .cameras
        .iter()
        .map(|c| c.id.0 + 1)
        .max()
        .unwrap_or(0);

    let mut triplets = Vec::new();
    let mut iterations = Vec::new();
    for _ in 0..cfg.triplets_per_call {
        let t0 = Instant::now();
        let targets = select_target_indices(&model.records, cfg.target_samples, rng.random());
        let before: f64 = targets.iter().map(|&t| model.f(t)).sum();
        let report = plan_one(
            &mut model,
            &mut surrogates,
            &targets,
            &mesh,
            &field,
            next_id,
        )?;
        let Some((triplet, stats, linked, oriented)) = report else {
            break;
        };
        let after: f64 = targets.iter().map(|&t| model.f(t)).sum();
        next_id += 3;
        info!(
            "planned triplet {} (bin {}, gain {:.4}) in {:.2}s",
            triplets.len(),
            triplet.bin,
            triplet.gain,
            t0.elapsed().as_secs_f64()
        );
        iterations.push(IterationReport {
            targets: targets.len(),
            linked_surrogates: linked,
            oriented_surrogates: oriented,
            gain: triplet.gain,
            target_fulfillment_before: before,
            target_fulfillment_after: after,
            stats,
            seconds: t0.elapsed().as_secs_f64(),
        });
        triplets.push(triplet);
    }
    Ok(PlanOutcome {
        triplets,
        mesh,
        roi: sub.roi,
        field,
        model,
        initial_fulfillment,
        iterations,
        seconds: start.elapsed().as_secs_f64(),
    })
}

type StepResult = Option<(CameraTriplet, SearchStats, usize, usize)>;

/// One search-and-append step over the given targets.
pub fn plan_one(
    model: &mut FulfillmentModel,
    surrogates: &mut [SurrogateCamera],
    targets: &[usize],
    mesh: &TriangleMesh,
    field: &DistanceField,
    first_id: u32,
) -> Result<StepResult> {
    let cfg = model.cfg.clone();
    inverse_visibility(
        mesh,
        model,
        targets,
        surrogates,
        cfg.virtual_fov_deg,
        cfg.virtual_resolution,
    )?;
    let linked = surrogates.iter().filter(|s| !s.links.is_empty()).count();
    orient_surrogates(surrogates, model)?;
    let oriented = surrogates
        .iter()
        .filter(|s| s.orientation.is_some())
        .count();
    let (best, stats) = best_triplet(surrogates, model, mesh, field, first_id)?;
    let Some(best) = best else {
        return Ok(None);
    };
    append_triplet(
        model,
        &best.triplet,
        &best.evaluation.credited,
        targets,
        mesh,
    );
    Ok(Some((best.triplet, stats, linked, oriented)))
}

/// Credits a planned triplet: the triangles counted in its gain get the evaluated
/// candidates, other targets only count the cameras that see them, and the remaining
/// scored triangles are credited by rendered visibility.
pub fn append_triplet(
    model: &mut FulfillmentModel,
    triplet: &CameraTriplet,
    credited: &[(usize, super::fulfillment::Candidate)],
    targets: &[usize],
    mesh: &TriangleMesh,
) {
    let ids = triplet.cameras.map(|c| c.id);
    let done: HashSet<usize> = credited.iter().map(|(t, _)| *t).collect();
    for (t, cand) in credited {
        model.credit(*t, ids, cand);
    }
    let renders: Vec<Render> = triplet
        .cameras
        .iter()
        .map(|c| render_depth(c, mesh, model.cfg.visibility_downscale))
        .collect();
    let targets: HashSet<usize> = targets.iter().copied().collect();
    for t in 0..model.triangles.len() {
        if done.contains(&t) {
            continue;
        }
        let face = model.triangles[t].face;
        let seen = renders
            .iter()
            .filter(|r| face_visible_in(r, mesh, face))
            .count();
        if seen == 3 && !targets.contains(&t) {
            if let Some(v) = triplet_views(&triplet.cameras, &model.triangles[t]) {
                let cand = model.candidate(t, [&v[0], &v[1], &v[2]], &triplet.center);
                model.credit(t, ids, &cand);
                continue;
            }
        }
        model.note_planned_view(t, seen);
    }
}
