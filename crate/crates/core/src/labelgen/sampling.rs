use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::overlap::overlap_from_renders;
use crate::geometry::raster::{render_depth, Render};
use crate::geometry::uncertainty::min_pairwise_angle;
use crate::geometry::visibility::visibility_from_renders;
use crate::geometry::{Camera, CameraId, FaceId, TriangleMesh};

/// Doubling angle bins: bin `i` covers `[alpha0 * 2^i, alpha0 * 2^(i+1))` degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBins {
    pub alpha0_deg: f64,
    pub count: usize,
}

impl AngleBins {
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.count)
            .map(|i| self.alpha0_deg * 2f64.powi(i as i32))
            .collect()
    }

    pub fn bin_of(&self, angle_deg: f64) -> Option<usize> {
        let edges = self.edges();
        (0..self.count).find(|&i| angle_deg >= edges[i] && angle_deg < edges[i + 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletSample {
    /// Sorted member ids.
    pub cameras: [CameraId; 3],
    pub bin: usize,
    /// Median, over scene points seen by all three cameras, of the smallest pairwise angle.
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub bins: AngleBins,
    pub per_bin: usize,
    pub min_overlap: f64,
    /// Scene points (face centroids) used to estimate triplet angles.
    pub max_points: usize,
    /// Triplets sharing fewer visible points are skipped.
    pub min_common_points: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            bins: AngleBins {
                alpha0_deg: 4.0,
                count: 5,
            },
            per_bin: 10,
            min_overlap: 0.3,
            max_points: 2000,
            min_common_points: 10,
            seed: 0,
        }
    }
}

/// Draws up to `per_bin` triplets per angle bin among camera triples whose pairwise
/// overlap reaches `min_overlap` in both directions.
pub fn sample_triplets(
    cameras: &[Camera],
    mesh: &TriangleMesh,
    cfg: &SamplingConfig,
) -> Vec<TripletSample> {
    let n = cameras.len();
    if n < 3 || cfg.bins.count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let renders: Vec<Render> = cameras.iter().map(|c| render_depth(c, mesh, 1)).collect();

    let mut faces: Vec<FaceId> = (0..mesh.face_count() as FaceId).collect();
    faces.shuffle(&mut rng);
    faces.truncate(cfg.max_points);
    faces.sort_unstable();
    let table = visibility_from_renders(mesh, &faces, &renders);
    let words = faces.len().div_ceil(64);
    let mut seen = vec![vec![0u64; words]; n];
    let index_of: std::collections::HashMap<CameraId, usize> =
        cameras.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    for (k, f) in faces.iter().enumerate() {
        for id in &table[f] {
            seen[index_of[id]][k / 64] |= 1 << (k % 64);
        }
    }
    let centroids: Vec<_> = faces.iter().map(|&f| mesh.centroid(f)).collect();

    let mut ok = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let o = overlap_from_renders(&renders[i], &renders[j])
                .min(overlap_from_renders(&renders[j], &renders[i]));
            ok[i][j] = o >= cfg.min_overlap;
            ok[j][i] = ok[i][j];
        }
    }

    let mut candidates: Vec<Vec<TripletSample>> = vec![Vec::new(); cfg.bins.count];
    let mut angles = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !ok[i][j] {
                continue;
            }
            for k in j + 1..n {
                if !(ok[i][k] && ok[j][k]) {
                    continue;
                }
                let centers = [
                    cameras[i].center(),
                    cameras[j].center(),
                    cameras[k].center(),
                ];
                angles.clear();
                for w in 0..words {
                    let mut bits = seen[i][w] & seen[j][w] & seen[k][w];
                    while bits != 0 {
                        let b = bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        if let Ok(a) = min_pairwise_angle(&centers, &centroids[w * 64 + b]) {
                            angles.push(a);
                        }
                    }
                }
                if angles.len() < cfg.min_common_points.max(1) {
                    continue;
                }
                let angle = median(&mut angles);
                if let Some(bin) = cfg.bins.bin_of(angle) {
                    let mut ids = [cameras[i].id, cameras[j].id, cameras[k].id];
                    ids.sort();
                    candidates[bin].push(TripletSample {
                        cameras: ids,
                        bin,
                        angle_deg: angle,
                    });
                }
            }
        }
    }

    let mut out = Vec::new();
    for (bin, mut list) in candidates.into_iter().enumerate() {
        if list.len() < cfg.per_bin {
            warn!(
                "angle bin {bin}: only {} of {} triplets available",
                list.len(),
                cfg.per_bin
            );
        }
        list.shuffle(&mut rng);
        list.truncate(cfg.per_bin);
        out.extend(list);
    }
    out
}

/// Median by partial sort; the mean of the two middle values for even lengths.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::ellipsoid;
    use crate::geometry::{CameraIntrinsics, CameraPose};
    use nalgebra::{Point3, Vector3};

    #[test]
    fn doubling_bin_edges() {
        let bins = AngleBins {
            alpha0_deg: 4.0,
            count: 5,
        };
        assert_eq!(bins.edges(), vec![4.0, 8.0, 16.0, 32.0, 64.0, 128.0]);
        assert_eq!(bins.bin_of(3.9), None);
        assert_eq!(bins.bin_of(4.0), Some(0));
        assert_eq!(bins.bin_of(8.0), Some(1));
        assert_eq!(bins.bin_of(127.9), Some(4));
        assert_eq!(bins.bin_of(128.0), None);
    }

    #[test]
    fn two_cameras_give_no_triplets() {
        let k = CameraIntrinsics::from_horizontal_fov(60.0, 64, 48).unwrap();
        let cams: Vec<Camera> = (0..2)
            .map(|i| {
                let pose = CameraPose::look_at(
                    Point3::new(i as f64, 0.0, 5.0),
                    Point3::origin(),
                    Vector3::y(),
                )
                .unwrap();
                Camera::new(CameraId(i), k, pose)
            })
            .collect();
        let mesh = ellipsoid(Point3::origin(), Vector3::new(1.0, 1.0, 1.0), 16, 8);
        assert!(sample_triplets(&cams, &mesh, &SamplingConfig::default()).is_empty());
    }

    #[test]
    fn ring_triplets_land_in_their_bins() {
        let k = CameraIntrinsics::from_horizontal_fov(60.0, 96, 72).unwrap();
        let cams: Vec<Camera> = (0..12)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 12.0 * 0.25;
                let c = Point3::new(6.0 * a.cos(), 6.0 * a.sin(), 1.0);
                Camera::new(
                    CameraId(i),
                    k,
                    CameraPose::look_at(c, Point3::origin(), Vector3::z()).unwrap(),
                )
            })
            .collect();
        let mesh = ellipsoid(Point3::origin(), Vector3::new(1.0, 1.0, 1.0), 24, 12);
        let cfg = SamplingConfig {
            per_bin: 4,
            min_overlap: 0.1,
            ..Default::default()
        };
        let samples = sample_triplets(&cams, &mesh, &cfg);
        assert!(!samples.is_empty());
        let edges = cfg.bins.edges();
        for s in &samples {
            assert!(s.angle_deg >= edges[s.bin] && s.angle_deg < edges[s.bin + 1]);
        }
        // Deterministic under the seed.
        assert_eq!(samples, sample_triplets(&cams, &mesh, &cfg));
    }
}
