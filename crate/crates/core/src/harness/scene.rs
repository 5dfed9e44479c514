//! Synthetic scenes with per-face materials and a procedural texture.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::RgbImage;
use crate::geometry::io::{load_ply, save_ply};
use crate::geometry::mesh::{ellipsoid, planar_grid};
use crate::geometry::raster::render_depth;
use crate::geometry::{Camera, CameraIntrinsics, FaceId, MaterialId, Render, TriangleMesh};
use crate::{Error, Result};

pub const SMOOTH: MaterialId = 0;
pub const ROUGH: MaterialId = 1;

const SKY: [f32; 3] = [0.72, 0.80, 0.93];
/// Edge of the rough-material noise cells, m.
const NOISE_CELL: f64 = 0.02;

/// Material-dependent color pattern, deterministic in the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub seed: u64,
}

impl Texture {
    pub fn color(&self, material: MaterialId, p: &Point3<f64>) -> [f32; 3] {
        if material == SMOOTH {
            let phase = (self.seed % 1000) as f64 * 0.01;
            let a = 0.5 + 0.5 * (1.3 * p.x + 0.7 * p.y + phase).sin();
            let b = 0.5 + 0.5 * (0.9 * p.y - 1.1 * p.z + 2.0 * phase).sin();
            [
                (0.55 + 0.12 * a) as f32,
                (0.52 + 0.08 * b) as f32,
                (0.47 + 0.06 * (a + b) * 0.5) as f32,
            ]
        } else {
            let cell = (p.coords / NOISE_CELL).map(|c| c.floor() as i64);
            let h = hash(self.seed, cell.x, cell.y, cell.z);
            let u = |shift: u32| ((h >> shift) & 0xffff) as f32 / 65535.0;
            [0.08 + 0.45 * u(0), 0.15 + 0.6 * u(16), 0.05 + 0.3 * u(32)]
        }
    }
}

fn hash(seed: u64, x: i64, y: i64, z: i64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [x, y, z] {
        h ^= v as u64;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub preset: String,
    pub seed: u64,
    /// Scene mesh; every face carries a material.
    #[serde(skip)]
    pub mesh: TriangleMesh,
    /// Faces of the region of interest.
    pub roi: Vec<FaceId>,
    pub texture: Texture,
    /// Camera model the scene is sized for.
    pub camera: CameraIntrinsics,
}

impl SyntheticScene {
    /// Reference geometry for evaluation. Scenes are exact, so this is the mesh itself.
    pub fn ground_truth(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn material(&self, face: FaceId) -> MaterialId {
        self.mesh.material(face).unwrap_or(SMOOTH)
    }

    /// Color image seen by `camera`, background filled with a flat sky color.
    pub fn render_color(&self, camera: &Camera) -> RgbImage {
        let render = render_depth(camera, &self.mesh, 1);
        self.color_from_render(&render)
    }

    pub fn color_from_render(&self, render: &Render) -> RgbImage {
        let (w, h) = (render.depth.width, render.depth.height);
        let mut img = RgbImage::filled(w, h, SKY);
        let light = Vector3::new(0.3, 0.2, 1.0).normalize();
        for y in 0..h {
            for x in 0..w {
                let (Some(face), Some(p)) = (render.face_at(x, y), render.point_at(x, y)) else {
                    continue;
                };
                let shade = (0.7 + 0.3 * self.mesh.normal(face).dot(&light).abs()) as f32;
                let c = self.texture.color(self.material(face), &p);
                img.pixels[(y * w + x) as usize] = c.map(|v| (v * shade).clamp(0.0, 1.0));
            }
        }
        img
    }

    /// Writes `mesh.ply` (with per-face materials) and `scene.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_ply(&self.mesh, &dir.join("mesh.ply"))?;
        std::fs::write(dir.join("scene.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Reads a scene written by [`Self::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let mut scene: Self =
            serde_json::from_str(&std::fs::read_to_string(dir.join("scene.json"))?)?;
        scene.mesh = load_ply(&dir.join("mesh.ply"))?;
        scene.mesh.validate()?;
        Ok(scene)
    }
}

/// Builds a named scene preset: `"plane"` or `"rock"`.
pub fn build_scene(preset: &str, seed: u64) -> Result<SyntheticScene> {
    let camera = CameraIntrinsics::from_horizontal_fov(60.0, 160, 120)?;
    let (mesh, roi) = match preset {
        "plane" => {
            let mut mesh = planar_grid([-2.0, -2.0], [4.0, 4.0], 1, 1);
            mesh.materials = Some(vec![SMOOTH; mesh.face_count()]);
            let roi = (0..mesh.face_count() as FaceId).collect();
            (mesh, roi)
        }
        "rock" => rock(seed),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    mesh.validate()?;
    Ok(SyntheticScene {
        preset: preset.to_string(),
        seed,
        mesh,
        roi,
        texture: Texture { seed },
        camera,
    })
}

/// Radius of the rock preset's region of interest around the rock, m.
pub const ROCK_ROI_RADIUS: f64 = 2.0;

/// Smooth half-ellipsoid on rough ground, partly hidden under two rough canopy blobs.
fn rock(seed: u64) -> (TriangleMesh, Vec<FaceId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |scale: f64| 1.0 + scale * rng.random_range(-1.0..1.0);
    let radii = Vector3::new(1.0 * jitter(0.1), 0.8 * jitter(0.1), 0.5 * jitter(0.1));

    let ground = planar_grid([-4.0, -4.0], [8.0, 8.0], 40, 40);
    let under_rock = |p: &Point3<f64>| (p.x / radii.x).powi(2) + (p.y / radii.y).powi(2) < 1.0;
    let keep: Vec<FaceId> = (0..ground.face_count() as FaceId)
        .filter(|&f| !ground.face_vertices(f).iter().all(under_rock))
        .collect();
    let mut mesh = ground.extract(&keep);
    mesh.materials = Some(vec![ROUGH; mesh.face_count()]);

    let full = ellipsoid(Point3::origin(), radii, 48, 24);
    let upper: Vec<FaceId> = (0..full.face_count() as FaceId)
        .filter(|&f| full.centroid(f).z > 0.0)
        .collect();
    let mut dome = full.extract(&upper);
    dome.materials = Some(vec![SMOOTH; dome.face_count()]);
    mesh.append(&dome);
    let scene_faces = mesh.face_count();

    let blobs = [
        (Point3::new(0.5, 0.3, 1.1), Vector3::new(1.0, 0.8, 0.25)),
        (Point3::new(-0.8, -0.5, 1.2), Vector3::new(0.9, 0.8, 0.25)),
    ];
    for (center, r) in blobs {
        let shift = Vector3::new(0.1 * (jitter(1.0) - 1.0), 0.1 * (jitter(1.0) - 1.0), 0.0);
        let mut blob = ellipsoid(center + shift, r, 24, 12);
        blob.materials = Some(vec![ROUGH; blob.face_count()]);
        mesh.append(&blob);
    }

    let roi = (0..scene_faces as FaceId)
        .filter(|&f| {
            let c = mesh.centroid(f);
            c.x.hypot(c.y) <= ROCK_ROI_RADIUS
        })
        .collect();
    (mesh, roi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::camera::CameraPose;
    use crate::geometry::{compute_visibility, CameraId};

    #[test]
    fn plane_is_a_single_smooth_quad() {
        let s = build_scene("plane", 0).unwrap();
        assert_eq!(s.mesh.face_count(), 2);
        assert_eq!(s.mesh.materials, Some(vec![SMOOTH; 2]));
    }

    #[test]
    fn unknown_preset_fails() {
        assert!(matches!(
            build_scene("forest", 0),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn rock_is_deterministic_and_seed_dependent() {
        let a = build_scene("rock", 3).unwrap();
        let b = build_scene("rock", 3).unwrap();
        let c = build_scene("rock", 4).unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.roi, b.roi);
        assert_ne!(a.mesh, c.mesh);
        assert!(a.mesh.materials.as_ref().unwrap().contains(&SMOOTH));
        assert!(a.mesh.materials.as_ref().unwrap().contains(&ROUGH));
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = build_scene("rock", 2).unwrap();
        s.save(dir.path()).unwrap();
        let back = SyntheticScene::load(dir.path()).unwrap();
        assert_eq!(back.roi, s.roi);
        assert_eq!(back.mesh.materials, s.mesh.materials);
        assert_eq!(back.mesh.face_count(), s.mesh.face_count());
    }

    #[test]
    fn texture_is_deterministic() {
        let t = Texture { seed: 9 };
        let p = Point3::new(0.123, -0.5, 0.3);
        assert_eq!(t.color(ROUGH, &p), Texture { seed: 9 }.color(ROUGH, &p));
        assert_ne!(t.color(ROUGH, &p), Texture { seed: 10 }.color(ROUGH, &p));
    }

    #[test]
    fn canopy_hides_part_of_the_rock_roi_from_nadir_views() {
        let s = build_scene("rock", 1).unwrap();
        let mut cams = Vec::new();
        for j in 0..7 {
            for i in 0..7 {
                let c = Point3::new(-2.4 + 0.8 * i as f64, -2.4 + 0.8 * j as f64, 3.0);
                let pose = CameraPose::looking_along(c, -Vector3::z(), Vector3::y());
                cams.push(Camera::new(CameraId(cams.len() as u32), s.camera, pose));
            }
        }
        let table = compute_visibility(&s.mesh, &s.roi, &cams, 1);
        let hidden = table.values().filter(|v| v.is_empty()).count();
        let frac = hidden as f64 / s.roi.len() as f64;
        assert!(frac >= 0.2, "hidden fraction {frac}");
    }

    #[test]
    fn color_render_shows_sky_and_ground() {
        let s = build_scene("rock", 0).unwrap();
        let pose = CameraPose::look_at(
            Point3::new(3.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 0.5),
            Vector3::z(),
        )
        .unwrap();
        let img = s.render_color(&Camera::new(CameraId(0), s.camera, pose));
        assert!(img.pixels.contains(&SKY));
        assert!(img.pixels.iter().any(|p| *p != SKY));
    }
}
