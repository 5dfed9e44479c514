//! A controllable MVS stand-in: matching succeeds per material below an angle cutoff.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::{SyntheticScene, ROUGH};
use crate::geometry::raster::{is_valid_depth, render_depth, Render};
use crate::geometry::uncertainty::min_pairwise_angle;
use crate::geometry::{point_uncertainty, Camera, DepthMap, MaterialId};
use crate::labelgen::MvsBackend;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleModel {
    /// Largest minimum pairwise triangulation angle that still matches, degrees,
    /// indexed by material (smooth, rough).
    pub gamma_cut_deg: [f64; 2],
    /// Depth noise as a multiple of the geometric standard deviation.
    pub noise_multiplier: f64,
    /// Fraction of emitted pixels replaced by wrong depths.
    pub outlier_rate: f64,
    /// Member views a point must be visible in.
    pub min_views: usize,
    /// Width of a logistic transition around the cutoff, degrees. `None` is a hard cutoff.
    pub softness_deg: Option<f64>,
    pub pixel_noise_std: f64,
}

impl Default for OracleModel {
    fn default() -> Self {
        Self {
            gamma_cut_deg: [60.0, 15.0],
            noise_multiplier: 1.0,
            outlier_rate: 0.0,
            min_views: 3,
            softness_deg: None,
            pixel_noise_std: 1.0,
        }
    }
}

impl OracleModel {
    pub fn validate(&self) -> Result<()> {
        let [smooth, rough] = self.gamma_cut_deg;
        if !(smooth > rough && rough >= 0.0) {
            return Err(Error::Config(format!(
                "oracle cutoff for smooth ({smooth}) must exceed rough ({rough})"
            )));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(Error::Config("outlier_rate must lie in [0, 1]".into()));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::Config(
                "noise_multiplier must be non-negative".into(),
            ));
        }
        if !(1..=3).contains(&self.min_views) {
            return Err(Error::Config("min_views must lie in 1..=3".into()));
        }
        if self.softness_deg.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Config("softness_deg must be positive".into()));
        }
        Ok(())
    }

    pub fn gamma_cut(&self, material: MaterialId) -> f64 {
        if material == ROUGH {
            self.gamma_cut_deg[1]
        } else {
            self.gamma_cut_deg[0]
        }
    }

    /// Probability that a point of `material` seen under `angle_deg` is matched.
    pub fn match_probability(&self, material: MaterialId, angle_deg: f64) -> f64 {
        let cut = self.gamma_cut(material);
        match self.softness_deg {
            None => f64::from(angle_deg <= cut),
            Some(s) => 1.0 / (1.0 + ((angle_deg - cut) / s).exp()),
        }
    }
}

/// Seed for one member image: depends only on the run seed and the member ids.
fn image_seed(seed: u64, cameras: &[Camera; 3], k: usize) -> u64 {
    let mut ids = cameras.map(|c| c.id.0 as u64);
    ids.sort_unstable();
    let mut h = seed;
    for v in ids.into_iter().chain([cameras[k].id.0 as u64]) {
        h = (h ^ v).wrapping_mul(0x100_0000_01b3).rotate_left(29) ^ 0xcbf2_9ce4_8422_2325;
    }
    h
}

/// Relative depth slack of the occlusion test.
const OCCLUSION_TOLERANCE: f64 = 0.02;

fn sees(render: &Render, p: &nalgebra::Point3<f64>) -> bool {
    let Some(proj) = render.camera.project_point(p) else {
        return false;
    };
    let Some((x, y)) = render.depth.pixel_at(&proj.pixel) else {
        return false;
    };
    // One-sided: only nearer geometry hides the point. Grazing surfaces change depth
    // by more than a percent across one pixel.
    let d = render.depth.get(x, y);
    is_valid_depth(d) && proj.depth <= d * (1.0 + OCCLUSION_TOLERANCE)
}

/// Depthmaps the oracle produces for a camera triplet.
pub fn oracle_mvs(
    cameras: &[Camera; 3],
    scene: &SyntheticScene,
    model: &OracleModel,
    seed: u64,
) -> [DepthMap; 3] {
    let renders = cameras.map(|c| render_depth(&c, &scene.mesh, 1));
    oracle_from_renders(cameras, &renders, scene, model, seed)
}

pub(crate) fn oracle_from_renders(
    cameras: &[Camera; 3],
    renders: &[Render; 3],
    scene: &SyntheticScene,
    model: &OracleModel,
    seed: u64,
) -> [DepthMap; 3] {
    let centers = cameras.map(|c| c.center());
    std::array::from_fn(|k| {
        let r = &renders[k];
        let mut rng = ChaCha8Rng::seed_from_u64(image_seed(seed, cameras, k));
        let mut out = DepthMap::new_invalid(r.depth.width, r.depth.height, cameras[k].id, 1);
        for y in 0..r.depth.height {
            for x in 0..r.depth.width {
                let (Some(face), Some(p)) = (r.face_at(x, y), r.point_at(x, y)) else {
                    continue;
                };
                let views = (0..3)
                    .filter(|&j| {
                        scene.mesh.is_front_facing(face, &centers[j])
                            && (j == k || sees(&renders[j], &p))
                    })
                    .count();
                if views < model.min_views {
                    continue;
                }
                let Ok(angle) = min_pairwise_angle(&centers, &p) else {
                    continue;
                };
                let prob = model.match_probability(scene.material(face), angle);
                let matched = if model.softness_deg.is_some() {
                    rng.random::<f64>() < prob
                } else {
                    prob > 0.0
                };
                if !matched {
                    continue;
                }
                let truth = r.depth.get(x, y);
                let mut d = truth;
                if model.noise_multiplier > 0.0 {
                    if let Ok(u) = point_uncertainty(cameras, &p, model.pixel_noise_std) {
                        let sigma = model.noise_multiplier * u.sigma();
                        if sigma > 0.0 {
                            d += Normal::new(0.0, sigma)
                                .expect("finite sigma")
                                .sample(&mut rng);
                        }
                    }
                }
                if model.outlier_rate > 0.0 && rng.random::<f64>() < model.outlier_rate {
                    let offset = rng.random_range(0.1..0.5);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    d = truth * (1.0 + sign * offset);
                }
                if d > 0.0 {
                    let i = out.index(x, y);
                    out.depths[i] = d;
                }
            }
        }
        out
    })
}

/// The oracle as a pluggable MVS backend.
#[derive(Debug, Clone)]
pub struct OracleBackend<'a> {
    pub scene: &'a SyntheticScene,
    pub model: OracleModel,
}

impl MvsBackend for OracleBackend<'_> {
    fn reconstruct(&self, cameras: &[Camera; 3], seed: u64) -> Result<[DepthMap; 3]> {
        Ok(oracle_mvs(cameras, self.scene, &self.model, seed))
    }
}

/// True when any member depthmap holds a valid depth.
pub fn any_output(depths: &[DepthMap; 3]) -> bool {
    depths.iter().any(|d| d.valid_count() > 0)
}
