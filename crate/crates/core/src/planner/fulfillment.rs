//! Per-triangle quality fulfillment of a camera set.

use std::collections::HashMap;

use log::warn;
use nalgebra::{Matrix3, Point3, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::PlannerConfig;
use crate::confidence::{angle_bin, ConfidenceImage};
use crate::geometry::uncertainty::{information_matrix, max_variance_from_information};
use crate::geometry::visibility::face_visible_in;
use crate::geometry::{
    ground_resolution, render_depth, Camera, CameraId, FaceId, Render, TriangleMesh,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FulfillmentRecord {
    pub triangle: FaceId,
    pub f_cov: u8,
    pub f_res: f64,
    pub f_unc: f64,
    pub f_conf: f64,
    pub f: f64,
    /// Triplet achieving `f`; the first in enumeration order on ties.
    pub best: Option<[CameraId; 3]>,
    /// `f_conf` came from the prior because no captured image observes the triangle.
    pub prior_confidence: bool,
}

impl FulfillmentRecord {
    /// Target-selection weight `1 - f / f_conf`.
    pub fn weight(&self) -> f64 {
        if self.f_conf > 0.0 {
            (1.0 - self.f / self.f_conf).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleInfo {
    pub face: FaceId,
    pub vertices: [Point3<f64>; 3],
    pub centroid: Point3<f64>,
    pub normal: Vector3<f64>,
}

impl TriangleInfo {
    pub fn new(mesh: &TriangleMesh, face: FaceId) -> Self {
        Self {
            face,
            vertices: mesh.face_vertices(face),
            centroid: mesh.centroid(face),
            normal: mesh.normal(face),
        }
    }
}

/// One camera's contribution to a triangle's score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    /// Projection information at the centroid, px^2/m^2.
    pub info: Matrix3<f64>,
    /// Ground resolution, px/m^2.
    pub resolution: f64,
    /// Unit direction from the centroid to the camera.
    pub direction: Vector3<f64>,
}

impl View {
    /// `None` when the centroid is not in front of the camera.
    pub fn new(camera: &Camera, tri: &TriangleInfo) -> Option<Self> {
        let info = information_matrix(camera, &tri.centroid)?;
        Some(Self {
            info,
            resolution: ground_resolution(camera, &tri.vertices),
            direction: (camera.center() - tri.centroid).normalize(),
        })
    }
}

/// Geometric part of a triplet's fulfillment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletScore {
    pub f_res: f64,
    pub f_unc: f64,
    /// Minimum pairwise triangulation angle at the centroid, degrees.
    pub angle_deg: f64,
}

pub fn score_views(cfg: &PlannerConfig, views: [&View; 3]) -> TripletScore {
    let res = views
        .iter()
        .map(|v| v.resolution)
        .fold(f64::INFINITY, f64::min);
    let f_res = (res / cfg.desired_resolution).clamp(0.0, 1.0);
    let info = views[0].info + views[1].info + views[2].info;
    let f_unc = max_variance_from_information(&info, cfg.pixel_noise_std)
        .map_or(0.0, |u| (cfg.desired_accuracy / u.sqrt()).min(1.0));
    let [a, b, c] = views.map(|v| v.direction);
    let cos = a.dot(&b).max(a.dot(&c)).max(b.dot(&c)).clamp(-1.0, 1.0);
    TripletScore {
        f_res,
        f_unc,
        angle_deg: cos.acos().to_degrees(),
    }
}

/// Combined fulfillment of one triplet.
#[inline]
pub fn combine(cfg: &PlannerConfig, score: &TripletScore, covered: bool, confidence: f64) -> f64 {
    if !covered {
        return 0.0;
    }
    let a = cfg.resolution_weight;
    (a * score.f_res + (1.0 - a) * score.f_unc) * confidence
}

/// Per-bin confidence read at one projected pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCurve {
    pub values: Vec<f64>,
    pub gamma_max_deg: f64,
}

impl ConfidenceCurve {
    pub fn read(image: &ConfidenceImage, camera: &Camera, point: &Point3<f64>) -> Option<Self> {
        let proj = camera.project_point(point)?;
        Some(Self {
            values: (0..image.bins)
                .map(|b| image.at(proj.pixel.x, proj.pixel.y, b))
                .collect(),
            gamma_max_deg: image.gamma_max_deg,
        })
    }

    #[inline]
    pub fn at_angle(&self, angle_deg: f64) -> f64 {
        self.values[angle_bin(angle_deg, self.values.len(), self.gamma_max_deg)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// A captured camera that sees a triangle.
#[derive(Debug, Clone)]
pub struct Observer {
    /// Index into the model's cameras.
    pub camera: usize,
    pub view: View,
    pub center: Point3<f64>,
    pub curve: Option<ConfidenceCurve>,
}

/// A planned (not yet captured) triplet credited to a triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualHit {
    pub cameras: [CameraId; 3],
    pub score: TripletScore,
    pub confidence: f64,
    pub prior: bool,
}

/// Fulfillment candidate of a single triplet for a triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub score: TripletScore,
    pub confidence: f64,
    pub prior: bool,
    pub f: f64,
}

/// Fulfillment state over a fixed triangle sample and camera set.
#[derive(Debug, Clone)]
pub struct FulfillmentModel {
    pub cfg: PlannerConfig,
    pub triangles: Vec<TriangleInfo>,
    pub cameras: Vec<Camera>,
    pub observers: Vec<Vec<Observer>>,
    /// Planned cameras seeing each triangle.
    pub planned_visible: Vec<usize>,
    pub hits: Vec<Vec<VirtualHit>>,
    pub records: Vec<FulfillmentRecord>,
    index: HashMap<FaceId, usize>,
}

/// Uniform choice of up to `n` faces of `roi`, in ascending id order.
pub fn select_triangles(roi: &[FaceId], n: usize, rng: &mut impl Rng) -> Result<Vec<FaceId>> {
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let mut picked: Vec<FaceId> = sample(rng, roi.len(), n.min(roi.len()))
        .into_iter()
        .map(|i| roi[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Scores `triangles` against `cameras`.
pub fn estimate_fulfillment(
    cameras: &[Camera],
    mesh: &TriangleMesh,
    triangles: &[FaceId],
    confidences: &[ConfidenceImage],
    cfg: &PlannerConfig,
) -> Result<FulfillmentModel> {
    let renders: Vec<Render> = cameras
        .iter()
        .map(|c| render_depth(c, mesh, cfg.visibility_downscale))
        .collect();
    FulfillmentModel::from_renders(cameras, &renders, mesh, triangles, confidences, cfg)
}

impl FulfillmentModel {
    pub fn from_renders(
        cameras: &[Camera],
        renders: &[Render],
        mesh: &TriangleMesh,
        triangles: &[FaceId],
        confidences: &[ConfidenceImage],
        cfg: &PlannerConfig,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyRoi);
        }
        let conf_of: HashMap<CameraId, &ConfidenceImage> =
            confidences.iter().map(|c| (c.image, c)).collect();
        let infos: Vec<TriangleInfo> = triangles
            .iter()
            .map(|&f| TriangleInfo::new(mesh, f))
            .collect();
        let observers = infos
            .iter()
            .map(|tri| {
                cameras
                    .iter()
                    .zip(renders)
                    .enumerate()
                    .filter(|(_, (_, r))| face_visible_in(r, mesh, tri.face))
                    .filter_map(|(k, (cam, _))| {
                        let view = View::new(cam, tri)?;
                        let curve = if cfg.use_confidence {
                            conf_of
                                .get(&cam.id)
                                .and_then(|ci| ConfidenceCurve::read(ci, cam, &tri.centroid))
                        } else {
                            None
                        };
                        Some(Observer {
                            camera: k,
                            view,
                            center: cam.center(),
                            curve,
                        })
                    })
                    .collect()
            })
            .collect();
        let n = infos.len();
        let mut model = Self {
            cfg: cfg.clone(),
            index: infos.iter().enumerate().map(|(i, t)| (t.face, i)).collect(),
            triangles: infos,
            cameras: cameras.to_vec(),
            observers,
            planned_visible: vec![0; n],
            hits: vec![Vec::new(); n],
            records: Vec::with_capacity(n),
        };
        model.records = (0..n).map(|t| model.evaluate(t)).collect();
        Ok(model)
    }

    pub fn index_of(&self, face: FaceId) -> Option<usize> {
        self.index.get(&face).copied()
    }

    pub fn total(&self) -> f64 {
        self.records.iter().map(|r| r.f).sum()
    }

    fn visible_count(&self, t: usize) -> usize {
        self.observers[t].len() + self.planned_visible[t]
    }

    /// Confidence from the captured observer with a confidence curve closest to `from`.
    fn nearest_curve(&self, t: usize, from: &Point3<f64>) -> Option<&ConfidenceCurve> {
        let mut best: Option<(f64, &ConfidenceCurve)> = None;
        for o in &self.observers[t] {
            if let Some(c) = &o.curve {
                let d = (o.center - from).norm_squared();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn confidence_from(&self, t: usize, from: &Point3<f64>, angle_deg: f64) -> (f64, bool) {
        if !self.cfg.use_confidence {
            return (1.0, false);
        }
        match self.nearest_curve(t, from) {
            Some(c) => (c.at_angle(angle_deg), false),
            None => (self.cfg.confidence_prior, true),
        }
    }

    /// Current fulfillment of triangle `t`.
    #[inline]
    pub fn f(&self, t: usize) -> f64 {
        self.records[t].f
    }

    /// Confidence for a captured triplet: the member nearest the triangle, else the rule
    /// for planned triplets.
    fn member_confidence(&self, t: usize, members: [usize; 3], angle_deg: f64) -> (f64, bool) {
        if !self.cfg.use_confidence {
            return (1.0, false);
        }
        let tri = &self.triangles[t];
        let obs = &self.observers[t];
        let mut best: Option<(f64, &ConfidenceCurve)> = None;
        for &m in &members {
            if let Some(c) = &obs[m].curve {
                let d = (obs[m].center - tri.centroid).norm_squared();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
        match best {
            Some((_, c)) => (c.at_angle(angle_deg), false),
            None => {
                let center = Point3::from(
                    members
                        .iter()
                        .map(|&m| obs[m].center.coords)
                        .sum::<Vector3<f64>>()
                        / 3.0,
                );
                self.confidence_from(t, &center, angle_deg)
            }
        }
    }

    /// Upper bound of any confidence this triangle can receive.
    fn confidence_bound(&self, t: usize) -> f64 {
        if !self.cfg.use_confidence {
            return 1.0;
        }
        let curves = self.observers[t].iter().filter_map(|o| o.curve.as_ref());
        let mut any = false;
        let mut m: f64 = 0.0;
        for c in curves {
            any = true;
            m = m.max(c.max());
        }
        if any {
            m
        } else {
            self.cfg.confidence_prior
        }
    }

    /// Confidence source for a planned triplet centered at `center`: the closest captured
    /// image observing the triangle.
    pub fn source_curve(&self, t: usize, center: &Point3<f64>) -> Option<&ConfidenceCurve> {
        if self.cfg.use_confidence {
            self.nearest_curve(t, center)
        } else {
            None
        }
    }

    /// Fulfillment of a planned triplet with `views`, centered at `center`.
    pub fn candidate(&self, t: usize, views: [&View; 3], center: &Point3<f64>) -> Candidate {
        self.candidate_with(t, views, self.source_curve(t, center))
    }

    /// [`Self::candidate`] with the confidence source already resolved.
    pub fn candidate_with(
        &self,
        t: usize,
        views: [&View; 3],
        source: Option<&ConfidenceCurve>,
    ) -> Candidate {
        let score = score_views(&self.cfg, views);
        let covered = self.visible_count(t) + 3 >= self.cfg.min_cameras;
        let (confidence, prior) = match (self.cfg.use_confidence, source) {
            (false, _) => (1.0, false),
            (true, Some(c)) => (c.at_angle(score.angle_deg), false),
            (true, None) => (self.cfg.confidence_prior, true),
        };
        Candidate {
            score,
            confidence,
            prior,
            f: combine(&self.cfg, &score, covered, confidence),
        }
    }

    /// Full evaluation of one triangle over captured triplets and credited planned ones.
    pub fn evaluate(&self, t: usize) -> FulfillmentRecord {
        let cfg = &self.cfg;
        let tri = &self.triangles[t];
        let obs = &self.observers[t];
        let covered = self.visible_count(t) >= cfg.min_cameras;
        let mut rec = FulfillmentRecord {
            triangle: tri.face,
            f_cov: 0,
            f_res: 0.0,
            f_unc: 0.0,
            f_conf: 0.0,
            f: 0.0,
            best: None,
            prior_confidence: false,
        };
        let conf_bound = self.confidence_bound(t);
        let a = cfg.resolution_weight;
        let mut found = false;
        let n = obs.len();
        for i in 0..n {
            for j in i + 1..n {
                let res_ij = obs[i].view.resolution.min(obs[j].view.resolution);
                for k in j + 1..n {
                    if found && covered {
                        let res = res_ij.min(obs[k].view.resolution);
                        let bound = (a * (res / cfg.desired_resolution).clamp(0.0, 1.0)
                            + (1.0 - a))
                            * conf_bound;
                        if bound <= rec.f {
                            continue;
                        }
                    }
                    let score = score_views(cfg, [&obs[i].view, &obs[j].view, &obs[k].view]);
                    let (conf, prior) = self.member_confidence(t, [i, j, k], score.angle_deg);
                    let f = combine(cfg, &score, covered, conf);
                    if !found || f > rec.f {
                        found = true;
                        let ids = [i, j, k].map(|m| self.cameras[obs[m].camera].id);
                        set_best(&mut rec, covered, &score, conf, prior, f, ids);
                    }
                }
            }
        }
        for hit in &self.hits[t] {
            let f = combine(cfg, &hit.score, covered, hit.confidence);
            if !found || f > rec.f {
                found = true;
                set_best(
                    &mut rec,
                    covered,
                    &hit.score,
                    hit.confidence,
                    hit.prior,
                    f,
                    hit.cameras,
                );
            }
        }
        if !found {
            // No triplet at all: report the best confidence any observer offers.
            let (conf, prior) = if !cfg.use_confidence {
                (1.0, false)
            } else {
                match self.nearest_curve(t, &tri.centroid) {
                    Some(c) => (c.max(), false),
                    None => (cfg.confidence_prior, true),
                }
            };
            rec.f_conf = conf;
            rec.prior_confidence = prior;
        }
        rec
    }

    /// Credits a planned triplet to triangle `t` with a precomputed candidate.
    pub fn credit(&mut self, t: usize, cameras: [CameraId; 3], candidate: &Candidate) {
        self.planned_visible[t] += 3;
        self.hits[t].push(VirtualHit {
            cameras,
            score: candidate.score,
            confidence: candidate.confidence,
            prior: candidate.prior,
        });
        if self.cfg.min_cameras > 3 {
            self.records[t] = self.evaluate(t);
            return;
        }
        let f = combine(&self.cfg, &candidate.score, true, candidate.confidence);
        let rec = &mut self.records[t];
        if rec.best.is_none() || f > rec.f {
            set_best(
                rec,
                true,
                &candidate.score,
                candidate.confidence,
                candidate.prior,
                f,
                cameras,
            );
        }
    }

    /// Counts planned cameras that see `t` without forming a credited triplet.
    pub fn note_planned_view(&mut self, t: usize, count: usize) {
        if count == 0 {
            return;
        }
        self.planned_visible[t] += count;
        if self.cfg.min_cameras > 3 {
            self.records[t] = self.evaluate(t);
        }
    }
}

fn set_best(
    rec: &mut FulfillmentRecord,
    covered: bool,
    score: &TripletScore,
    conf: f64,
    prior: bool,
    f: f64,
    ids: [CameraId; 3],
) {
    rec.f_cov = covered as u8;
    rec.f_res = if covered { score.f_res } else { 0.0 };
    rec.f_unc = if covered { score.f_unc } else { 0.0 };
    rec.f_conf = conf;
    rec.prior_confidence = prior;
    rec.f = f;
    rec.best = Some(ids);
}

/// Logs a warning when many triangles rely on the confidence prior.
pub(crate) fn warn_on_prior(records: &[FulfillmentRecord]) {
    let n = records.iter().filter(|r| r.prior_confidence).count();
    if n > 0 {
        warn!(
            "{n} of {} triangles use the confidence prior",
            records.len()
        );
    }
}
