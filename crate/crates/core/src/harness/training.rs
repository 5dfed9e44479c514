//! Forest training on a synthetic scene: views, oracle labels, color patches.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{OracleBackend, OracleModel};
use super::scene::SyntheticScene;
use crate::confidence::{
    extract_samples, restructure_leaves, train_forest, ConfidenceForest, ForestConfig, LabImage,
    PatchSample,
};
use crate::geometry::camera::CameraPose;
use crate::geometry::{Camera, CameraId};
use crate::labelgen::{generate_labels, LabelConfig, LabelImage, LabelReport, SamplingConfig};
use crate::planner::build_distance_field;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Scene points that groups of views look at.
    pub stations: usize,
    pub views_per_station: usize,
    /// Camera distance range to the station point, m.
    pub distance: [f64; 2],
    /// Largest angle between a view and its station's axis, degrees.
    pub spread_deg: f64,
    /// Smallest distance from a view to the scene, m.
    pub clearance: f64,
    pub oracle: OracleModel,
    pub labels: LabelConfig,
    pub forest: ForestConfig,
    /// Samples per class used to grow the trees.
    pub samples_per_class: usize,
    /// Samples per class routed through the grown trees to fill the angle bins of the
    /// leaves; more than the growing set so that sparse bins are better populated.
    pub leaf_samples_per_class: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            stations: 20,
            views_per_station: 6,
            distance: [1.5, 2.5],
            spread_deg: 30.0,
            clearance: 0.2,
            oracle: OracleModel::default(),
            labels: LabelConfig {
                sampling: SamplingConfig {
                    per_bin: 20,
                    ..SamplingConfig::default()
                },
                ..LabelConfig::default()
            },
            forest: ForestConfig {
                trees: 10,
                max_depth: 20,
                min_leaf: 50,
                node_tests: 300,
                thresholds: 20,
                node_samples: 500,
                ..ForestConfig::default()
            },
            samples_per_class: 12000,
            leaf_samples_per_class: 50000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub forest: ConfidenceForest,
    pub cameras: Vec<Camera>,
    pub images: Vec<LabImage>,
    pub labels: Vec<LabelImage>,
    pub samples: Vec<PatchSample>,
    pub report: LabelReport,
}

/// Groups of views around random region points, each group spread around a random
/// elevated axis so that its triplets cover a range of triangulation angles.
pub fn training_cameras(
    scene: &SyntheticScene,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<Vec<Camera>> {
    let field = build_distance_field(&scene.mesh, cfg.clearance / 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cameras = Vec::new();
    for _ in 0..cfg.stations {
        let face = scene.roi[rng.random_range(0..scene.roi.len())];
        let target = scene.mesh.centroid(face);
        let normal = scene.mesh.normal(face);
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let elevation = rng.random_range(35f64..80.0).to_radians();
        let mut axis = Vector3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        );
        if axis.dot(&normal) < 0.2 {
            axis = (axis + normal).normalize();
        }
        let mut placed = 0;
        let mut attempts = 0;
        while placed < cfg.views_per_station && attempts < 50 * cfg.views_per_station {
            attempts += 1;
            let tilt = rng.random_range(0.0..cfg.spread_deg).to_radians();
            let turn = rng.random_range(0.0..std::f64::consts::TAU);
            let side = Unit::new_normalize(
                axis.cross(&Vector3::z())
                    .try_normalize(1e-9)
                    .unwrap_or(Vector3::x()),
            );
            let dir = Rotation3::from_axis_angle(&Unit::new_normalize(axis), turn)
                * (Rotation3::from_axis_angle(&side, tilt) * axis);
            let center = target + dir * rng.random_range(cfg.distance[0]..cfg.distance[1]);
            if center.z < cfg.clearance || field.clearance(&center) < cfg.clearance {
                continue;
            }
            let aim = target
                + Vector3::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    0.0,
                );
            let Ok(pose) = CameraPose::look_at(center, aim, Vector3::z()) else {
                continue;
            };
            cameras.push(Camera::new(
                CameraId(cameras.len() as u32),
                scene.camera,
                pose,
            ));
            placed += 1;
        }
    }
    if cameras.len() < 3 {
        return Err(Error::Infeasible(
            "fewer than three training views fit the scene".into(),
        ));
    }
    Ok(cameras)
}

/// Oracle-labeled training images and the forest grown on them.
pub fn train_scene_forest(
    scene: &SyntheticScene,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<TrainingRun> {
    let cameras = training_cameras(scene, cfg, seed)?;
    let backend = OracleBackend {
        scene,
        model: cfg.oracle.clone(),
    };
    let mut label_cfg = cfg.labels.clone();
    label_cfg.sampling.seed = seed;
    let out = generate_labels(
        &cameras,
        &scene.mesh,
        &backend,
        &label_cfg,
        Some(scene.ground_truth()),
    )?;
    let by_id: std::collections::HashMap<CameraId, &Camera> =
        cameras.iter().map(|c| (c.id, c)).collect();
    let images: Vec<LabImage> = out
        .images
        .iter()
        .map(|l| scene.render_color(by_id[&l.image]).to_lab())
        .collect();
    let samples = extract_samples(&images, &out.images, cfg.samples_per_class, seed)?;
    let mut forest = train_forest(&images, &samples, &cfg.forest, seed)?;
    if cfg.leaf_samples_per_class > cfg.samples_per_class {
        let leaf_samples = extract_samples(
            &images,
            &out.images,
            cfg.leaf_samples_per_class,
            seed.wrapping_add(1),
        )?;
        forest = restructure_leaves(
            forest,
            &images,
            &leaf_samples,
            cfg.forest.bins,
            cfg.forest.gamma_max_deg,
        );
    }
    Ok(TrainingRun {
        forest,
        cameras,
        images,
        labels: out.images,
        samples,
        report: out.report,
    })
}
