//! Greedy ordering of planned views with registration-pose insertion.

use serde::{Deserialize, Serialize};

use super::distance::DistanceField;
use super::triplet::CameraTriplet;
use crate::geometry::overlap::overlap_downscale;
use crate::geometry::{overlap_from_renders, render_depth, Camera, CameraId, Render, TriangleMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewRole {
    TripletMember,
    Registration,
    /// Pose of a fixed survey pattern such as a nadir grid.
    Survey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedView {
    pub camera: Camera,
    pub role: ViewRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPlan {
    pub views: Vec<PlannedView>,
    /// Member ids of each planned triplet.
    pub triplets: Vec<[CameraId; 3]>,
    /// Path length from the anchor through every view, m.
    pub total_path_m: f64,
}

impl ViewPlan {
    pub fn cameras(&self) -> Vec<Camera> {
        self.views.iter().map(|v| v.camera).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    pub min_overlap: f64,
    pub max_insertions: usize,
    pub safety_distance: f64,
}

/// Bisection steps per inserted pose.
const BISECTION_STEPS: usize = 12;
/// Smallest interpolation step accepted as progress.
const MIN_STEP: f64 = 1e-3;
/// Earlier cameras tried as chain sources, nearest first.
const MAX_SOURCES: usize = 3;

struct Registry<'a> {
    mesh: &'a TriangleMesh,
    cameras: Vec<Camera>,
    renders: Vec<Render>,
}

impl<'a> Registry<'a> {
    fn render(&self, cam: &Camera) -> Render {
        render_depth(cam, self.mesh, overlap_downscale(cam))
    }

    fn push(&mut self, cam: Camera) {
        self.renders.push(self.render(&cam));
        self.cameras.push(cam);
    }

    fn registers(&self, render: &Render, min_overlap: f64) -> bool {
        self.renders
            .iter()
            .any(|e| overlap_from_renders(render, e) >= min_overlap)
    }
}

/// Orders the triplet cameras greedily by distance from the last previous camera and
/// inserts registration poses wherever a camera would not overlap any earlier one.
pub fn optimize_path(
    planned: &[CameraTriplet],
    previous: &[Camera],
    mesh: &TriangleMesh,
    field: Option<&DistanceField>,
    cfg: &PathConfig,
) -> Result<ViewPlan> {
    let anchor = previous.last().ok_or_else(|| {
        Error::Config("path optimization needs at least one previous camera".into())
    })?;
    let mut next_id = previous
        .iter()
        .chain(planned.iter().flat_map(|t| t.cameras.iter()))
        .map(|c| c.id.0 + 1)
        .max()
        .unwrap_or(0);
    let mut remaining: Vec<Camera> = planned.iter().flat_map(|t| t.cameras).collect();
    let mut order = Vec::with_capacity(remaining.len());
    let mut cur = anchor.center();
    while !remaining.is_empty() {
        let mut best = 0;
        for (i, c) in remaining.iter().enumerate() {
            if (c.center() - cur).norm() < (remaining[best].center() - cur).norm() {
                best = i;
            }
        }
        let c = remaining.remove(best);
        cur = c.center();
        order.push(c);
    }

    let safe = |c: &Camera| field.is_none_or(|f| f.clearance(&c.center()) >= cfg.safety_distance);
    let mut registry = Registry {
        mesh,
        cameras: Vec::new(),
        renders: Vec::new(),
    };
    for c in previous {
        registry.push(*c);
    }
    let mut views = Vec::new();
    for target in order {
        let target_render = registry.render(&target);
        if !registry.registers(&target_render, cfg.min_overlap) {
            let chain =
                registration_chain(&target, &target_render, &registry, &safe, cfg, &mut next_id)
                    .ok_or(Error::ChainImpossible(target.id))?;
            for c in chain {
                registry.push(c);
                views.push(PlannedView {
                    camera: c,
                    role: ViewRole::Registration,
                });
            }
        }
        registry.cameras.push(target);
        registry.renders.push(target_render);
        views.push(PlannedView {
            camera: target,
            role: ViewRole::TripletMember,
        });
    }
    let mut total = 0.0;
    let mut cur = anchor.center();
    for v in &views {
        total += (v.camera.center() - cur).norm();
        cur = v.camera.center();
    }
    Ok(ViewPlan {
        views,
        triplets: planned.iter().map(|t| t.cameras.map(|c| c.id)).collect(),
        total_path_m: total,
    })
}

/// Poses interpolated from the nearest earlier cameras toward `target`, each overlapping
/// its predecessor, until the target overlaps the last one.
fn registration_chain(
    target: &Camera,
    target_render: &Render,
    registry: &Registry,
    safe: &dyn Fn(&Camera) -> bool,
    cfg: &PathConfig,
    next_id: &mut u32,
) -> Option<Vec<Camera>> {
    let mut sources: Vec<usize> = (0..registry.cameras.len()).collect();
    sources.sort_by(|&a, &b| {
        let da = (registry.cameras[a].center() - target.center()).norm();
        let db = (registry.cameras[b].center() - target.center()).norm();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    'sources: for &src in sources.iter().take(MAX_SOURCES) {
        let mut chain: Vec<Camera> = Vec::new();
        let mut cur = registry.cameras[src];
        let mut cur_render = registry.renders[src].clone();
        for _ in 0..cfg.max_insertions {
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut found: Option<(Camera, Render)> = None;
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                let cand = Camera {
                    id: target.id,
                    intrinsics: target.intrinsics,
                    pose: cur.pose.interpolate(&target.pose, mid),
                };
                let render = registry.render(&cand);
                if safe(&cand) && overlap_from_renders(&render, &cur_render) >= cfg.min_overlap {
                    lo = mid;
                    found = Some((cand, render));
                } else {
                    hi = mid;
                }
            }
            let Some((mut cam, render)) = found.filter(|_| lo >= MIN_STEP) else {
                continue 'sources;
            };
            cam.id = CameraId(*next_id);
            *next_id += 1;
            chain.push(cam);
            cur = cam;
            cur_render = render;
            if overlap_from_renders(target_render, &cur_render) >= cfg.min_overlap {
                return Some(chain);
            }
        }
    }
    None
}
