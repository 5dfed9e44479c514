//! Plan, region and snapshot files.

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::config::PlannerConfig;
use super::path::{PlannedView, ViewPlan, ViewRole};
use crate::confidence::ConfidenceImage;
use crate::geometry::io::{load_cameras, load_ply, CameraRecord};
use crate::geometry::{Camera, CameraId, FaceId, TriangleMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub cameras: Vec<CameraRecord>,
    pub roles: Vec<ViewRole>,
    /// Camera ids in flight order.
    pub order: Vec<u32>,
    pub triplets: Vec<[u32; 3]>,
    pub total_path_m: f64,
    pub config_echo: PlannerConfig,
    pub seed: u64,
}

impl PlanFile {
    pub fn new(plan: &ViewPlan, cfg: &PlannerConfig, seed: u64) -> Self {
        Self {
            cameras: plan
                .views
                .iter()
                .map(|v| CameraRecord::from(&v.camera))
                .collect(),
            roles: plan.views.iter().map(|v| v.role).collect(),
            order: plan.views.iter().map(|v| v.camera.id.0).collect(),
            triplets: plan.triplets.iter().map(|t| t.map(|c| c.0)).collect(),
            total_path_m: plan.total_path_m,
            config_echo: cfg.clone(),
            seed,
        }
    }

    pub fn to_plan(&self) -> Result<ViewPlan> {
        if self.cameras.len() != self.roles.len() {
            return Err(Error::parse("plan", "cameras and roles differ in length"));
        }
        let views = self
            .cameras
            .iter()
            .zip(&self.roles)
            .map(|(c, &role)| {
                Ok(PlannedView {
                    camera: Camera::try_from(c)?,
                    role,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ViewPlan {
            views,
            triplets: self.triplets.iter().map(|t| t.map(CameraId)).collect(),
            total_path_m: self.total_path_m,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Image polygon marking the region of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiFile {
    pub image_id: u32,
    pub polygon: Vec<[f64; 2]>,
}

impl RoiFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Faces whose centroid projects inside the polygon in the marked image. Occluded
    /// faces are included so that hidden parts of the marked structure count.
    pub fn faces(&self, mesh: &TriangleMesh, cameras: &[Camera]) -> Result<Vec<FaceId>> {
        let cam = cameras
            .iter()
            .find(|c| c.id.0 == self.image_id)
            .ok_or_else(|| {
                Error::Config(format!(
                    "region image {} not among the cameras",
                    self.image_id
                ))
            })?;
        if self.polygon.len() < 3 {
            return Err(Error::parse("roi", "polygon needs at least three vertices"));
        }
        let faces: Vec<FaceId> = (0..mesh.face_count() as FaceId)
            .filter(|&f| {
                cam.project_point(&mesh.centroid(f))
                    .is_some_and(|p| point_in_polygon(&p.pixel, &self.polygon))
            })
            .collect();
        if faces.is_empty() {
            return Err(Error::EmptyRoi);
        }
        Ok(faces)
    }
}

/// Even-odd rule.
pub fn point_in_polygon(p: &Vector2<f64>, polygon: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    for i in 0..n {
        let [xi, yi] = polygon[i];
        let [xj, yj] = polygon[(i + n - 1) % n];
        if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

/// Snapshot file: paths relative to the file itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub mesh: PathBuf,
    pub cameras: PathBuf,
    #[serde(default)]
    pub confidence_dir: Option<PathBuf>,
}

/// Loaded snapshot contents.
#[derive(Debug, Clone)]
pub struct LoadedSnapshot {
    pub mesh: TriangleMesh,
    pub cameras: Vec<Camera>,
    pub confidences: Vec<ConfidenceImage>,
}

impl SnapshotFile {
    pub fn load(path: &Path) -> Result<LoadedSnapshot> {
        let file: SnapshotFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let confidences = match &file.confidence_dir {
            Some(dir) => ConfidenceImage::load_dir(&base.join(dir))?,
            None => Vec::new(),
        };
        Ok(LoadedSnapshot {
            mesh: load_ply(&base.join(&file.mesh))?,
            cameras: load_cameras(&base.join(&file.cameras))?,
            confidences,
        })
    }
}
