//! Equilateral camera triplets, their fulfillment gain and the pruned best-triplet search.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::distance::DistanceField;
use super::fulfillment::{Candidate, FulfillmentModel, View};
use super::surrogate::SurrogateCamera;
use crate::geometry::visibility::face_visible_in;
use crate::geometry::{
    render_depth, Camera, CameraId, CameraIntrinsics, CameraPose, Render, TriangleMesh,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CameraTriplet {
    pub cameras: [Camera; 3],
    /// Circumcenter of the camera positions (the surrogate position).
    pub center: Point3<f64>,
    /// Unit viewing direction shared by the triplet.
    pub direction: Vector3<f64>,
    pub aim_distance: f64,
    pub bin: usize,
    pub design_angle_deg: f64,
    pub gain: f64,
    /// Index of the generating surrogate.
    pub surrogate: usize,
}

/// Circle radius that gives pairwise angle `angle_deg` at the aim point.
pub fn triplet_radius(aim_distance: f64, angle_deg: f64) -> Result<f64> {
    if !(aim_distance > 0.0) {
        return Err(Error::Config(format!(
            "aim distance {aim_distance} must be positive"
        )));
    }
    if !(0.0..120.0).contains(&angle_deg) {
        return Err(Error::Infeasible(format!(
            "equilateral triplets cannot reach {angle_deg} degrees"
        )));
    }
    let s = (0.5 * angle_deg).to_radians().sin();
    Ok(s * aim_distance / (0.75 - s * s).sqrt())
}

/// Unit vectors spanning the plane orthogonal to `direction`.
pub(crate) fn orthonormal_basis(direction: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let o = direction.normalize();
    let mut u = o.cross(&Vector3::z());
    if u.norm() < 1e-9 {
        u = o.cross(&Vector3::x());
    }
    let u = u.normalize();
    (u, o.cross(&u))
}

/// Three cameras on a circle around `center` orthogonal to `direction`, all aimed at the
/// point `aim_distance` ahead. Ids are `first_id`, `first_id + 1`, `first_id + 2`.
pub fn make_triplet(
    center: &Point3<f64>,
    direction: &Vector3<f64>,
    aim_distance: f64,
    angle_deg: f64,
    intrinsics: &CameraIntrinsics,
    first_id: u32,
) -> Result<[Camera; 3]> {
    let rho = triplet_radius(aim_distance, angle_deg)?;
    let o = direction.normalize();
    let aim = center + o * aim_distance;
    let (u, w) = orthonormal_basis(&o);
    let mut out = [Camera::new(
        CameraId(first_id),
        *intrinsics,
        CameraPose::looking_along(*center, o, Vector3::z()),
    ); 3];
    for (k, cam) in out.iter_mut().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        let pos = center + (u * theta.cos() + w * theta.sin()) * rho;
        let pose = CameraPose::looking_along(pos, aim - pos, Vector3::z());
        *cam = Camera::new(CameraId(first_id + k as u32), *intrinsics, pose);
    }
    Ok(out)
}

/// Gain of a triplet and the per-triangle candidates it was credited with.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEvaluation {
    /// `-inf` when a camera violates the safety distance.
    pub gain: f64,
    /// Model triangle index and candidate for every counted triangle, in input order.
    pub credited: Vec<(usize, Candidate)>,
}

/// Gain over the `candidates` (model triangle indices) visible from all three cameras.
pub fn triplet_gain(
    cameras: &[Camera; 3],
    center: &Point3<f64>,
    candidates: &[usize],
    model: &FulfillmentModel,
    mesh: &TriangleMesh,
    field: &DistanceField,
) -> GainEvaluation {
    let cfg = &model.cfg;
    if cameras
        .iter()
        .any(|c| field.clearance(&c.center()) < cfg.safety_distance)
    {
        return GainEvaluation {
            gain: f64::NEG_INFINITY,
            credited: Vec::new(),
        };
    }
    let renders: Vec<Render> = cameras
        .iter()
        .map(|c| render_depth(c, mesh, cfg.visibility_downscale))
        .collect();
    gain_from_renders(cameras, &renders, center, candidates, model, mesh)
}

pub(crate) fn gain_from_renders(
    cameras: &[Camera; 3],
    renders: &[Render],
    center: &Point3<f64>,
    candidates: &[usize],
    model: &FulfillmentModel,
    mesh: &TriangleMesh,
) -> GainEvaluation {
    let mut gain = 0.0;
    let mut credited = Vec::new();
    for &t in candidates {
        let tri = &model.triangles[t];
        if !renders.iter().all(|r| face_visible_in(r, mesh, tri.face)) {
            continue;
        }
        let Some(views) = triplet_views(cameras, tri) else {
            continue;
        };
        let cand = model.candidate(t, [&views[0], &views[1], &views[2]], center);
        gain += (cand.f - model.f(t)).max(0.0);
        credited.push((t, cand));
    }
    GainEvaluation { gain, credited }
}

pub(crate) fn triplet_views(
    cameras: &[Camera; 3],
    tri: &super::fulfillment::TriangleInfo,
) -> Option<[View; 3]> {
    Some([
        View::new(&cameras[0], tri)?,
        View::new(&cameras[1], tri)?,
        View::new(&cameras[2], tri)?,
    ])
}

/// Counters from one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub surrogates_visited: usize,
    pub triplets_evaluated: usize,
    /// Largest `g - bound` seen; never positive for a sound bound.
    pub max_bound_excess: f64,
}

/// Result of [`best_triplet`].
#[derive(Debug, Clone)]
pub struct BestTriplet {
    pub triplet: CameraTriplet,
    pub evaluation: GainEvaluation,
}

/// Triplet of the surrogate's bin `bin`, with fresh ids from `first_id`.
pub fn surrogate_triplet(
    s: &SurrogateCamera,
    index: usize,
    bin: usize,
    model: &FulfillmentModel,
    first_id: u32,
) -> Result<Option<CameraTriplet>> {
    let Some(direction) = s.orientation else {
        return Ok(None);
    };
    let angle = model.cfg.bin_angle_deg(bin);
    let cameras = make_triplet(
        &s.position,
        &direction,
        s.aim_distance,
        angle,
        &model.cfg.camera,
        first_id,
    )?;
    Ok(Some(CameraTriplet {
        cameras,
        center: s.position,
        direction,
        aim_distance: s.aim_distance,
        bin,
        design_angle_deg: angle,
        gain: 0.0,
        surrogate: index,
    }))
}

/// Gain of one surrogate bin, counted over the surrogate's linked targets.
pub fn evaluate_surrogate_bin(
    s: &SurrogateCamera,
    index: usize,
    bin: usize,
    model: &FulfillmentModel,
    mesh: &TriangleMesh,
    field: &DistanceField,
    first_id: u32,
) -> Result<Option<(CameraTriplet, GainEvaluation)>> {
    let Some(mut triplet) = surrogate_triplet(s, index, bin, model, first_id)? else {
        return Ok(None);
    };
    let linked: Vec<usize> = s.links.iter().map(|l| l.triangle).collect();
    let eval = triplet_gain(
        &triplet.cameras,
        &triplet.center,
        &linked,
        model,
        mesh,
        field,
    );
    triplet.gain = eval.gain;
    Ok(Some((triplet, eval)))
}

/// Whether `(g, s, bin)` beats the current best under the tie rule.
fn better(g: f64, s: usize, bin: usize, best: Option<(f64, usize, usize)>) -> bool {
    match best {
        None => g > 0.0,
        Some((bg, bs, bb)) => g > bg || (g == bg && (s, bin) < (bs, bb)),
    }
}

/// Highest-gain triplet over all oriented surrogates and bins. Surrogates are visited in
/// descending bound order and the search stops once no remaining bound can win. Ties go
/// to the lower surrogate index, then the lower bin. `None` when no gain is positive.
pub fn best_triplet(
    surrogates: &[SurrogateCamera],
    model: &FulfillmentModel,
    mesh: &TriangleMesh,
    field: &DistanceField,
    first_id: u32,
) -> Result<(Option<BestTriplet>, SearchStats)> {
    let mut order: Vec<usize> = (0..surrogates.len())
        .filter(|&i| surrogates[i].orientation.is_some())
        .collect();
    order.sort_by(|&a, &b| {
        surrogates[b]
            .total_gain
            .total_cmp(&surrogates[a].total_gain)
            .then(a.cmp(&b))
    });
    let mut stats = SearchStats {
        max_bound_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best: Option<(f64, usize, usize)> = None;
    let mut result: Option<BestTriplet> = None;
    for &i in &order {
        let s = &surrogates[i];
        let bound = s.total_gain;
        match best {
            None if bound <= 0.0 => break,
            Some((bg, _, _)) if bound < bg => break,
            Some((bg, bs, _)) if bound == bg && i > bs => continue,
            _ => {}
        }
        stats.surrogates_visited += 1;
        for bin in 0..model.cfg.bins {
            let Some((triplet, eval)) =
                evaluate_surrogate_bin(s, i, bin, model, mesh, field, first_id)?
            else {
                continue;
            };
            stats.triplets_evaluated += 1;
            if eval.gain.is_finite() {
                stats.max_bound_excess = stats.max_bound_excess.max(eval.gain - bound);
            }
            if better(eval.gain, i, bin, best) {
                best = Some((eval.gain, i, bin));
                result = Some(BestTriplet {
                    triplet,
                    evaluation: eval,
                });
            }
        }
    }
    Ok((result, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::triangulation_angle;

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::from_horizontal_fov(60.0, 160, 120).unwrap()
    }

    #[test]
    fn design_angle_is_realized() {
        let center = Point3::new(1.0, 2.0, 10.0);
        let dir = Vector3::new(0.1, -0.2, -1.0);
        let cams = make_triplet(&center, &dir, 10.0, 20.0, &intrinsics(), 0).unwrap();
        let aim = center + dir.normalize() * 10.0;
        let a = [(0, 1), (0, 2), (1, 2)]
            .map(|(i, j)| triangulation_angle(&cams[i].center(), &cams[j].center(), &aim).unwrap());
        for v in a {
            assert!((v - 20.0).abs() < 0.1);
            assert!((v - a[0]).abs() <= 1e-9 * a[0]);
        }
        for c in &cams {
            assert!(c.off_axis_angle_deg(&aim) < 1e-6);
            assert!(((c.center() - center).dot(&dir.normalize())).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_angle_collapses_and_large_angles_fail() {
        let center = Point3::new(0.0, 0.0, 5.0);
        let cams = make_triplet(&center, &-Vector3::z(), 5.0, 0.0, &intrinsics(), 7).unwrap();
        for (k, c) in cams.iter().enumerate() {
            assert!((c.center() - center).norm() < 1e-12);
            assert_eq!(c.id, CameraId(7 + k as u32));
        }
        assert!(matches!(
            make_triplet(&center, &-Vector3::z(), 5.0, 120.0, &intrinsics(), 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn tie_rule() {
        assert!(!better(0.0, 0, 0, None));
        assert!(better(0.5, 3, 2, None));
        assert!(better(0.5, 2, 5, Some((0.5, 3, 0))));
        assert!(!better(0.5, 3, 1, Some((0.5, 3, 0))));
        assert!(better(0.6, 9, 9, Some((0.5, 3, 0))));
    }
}
