use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::Point3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backend::MvsBackend;
use super::missing::{missing_from_renders, AugmentConfig};
use super::sampling::{sample_triplets, SamplingConfig, TripletSample};
use super::support::{compute_support, Cluster, SupportConfig, VoteConfig};
use super::voting::{cast_votes, label_from_votes, Label};
use crate::geometry::io::{read_pfm, read_pgm, write_pfm, write_pgm};
use crate::geometry::raster::{is_valid_depth, render_depth, Render};
use crate::geometry::{shrink_expand_mesh, Camera, CameraId, DepthMap, TriangleMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelConfig {
    pub sampling: SamplingConfig,
    pub support: SupportConfig,
    pub votes: VoteConfig,
    pub augment: AugmentConfig,
    pub pixel_noise_std: f64,
    /// Relative depth tolerance when checking that a missing pixel could have been seen
    /// by the other triplet members.
    pub possibility_tolerance: f64,
    /// Ground-truth check: a measurement is correct within `max(k * sigma, rel * depth)`.
    pub truth_sigma: f64,
    pub truth_relative: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            support: SupportConfig::default(),
            votes: VoteConfig::default(),
            augment: AugmentConfig::default(),
            pixel_noise_std: 1.0,
            possibility_tolerance: 0.02,
            truth_sigma: 3.0,
            truth_relative: 0.02,
        }
    }
}

/// Per-pixel training labels of one image with the triangulation angle that produced each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub image: CameraId,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<Label>,
    /// Representative angle of the triplet that wrote each label, degrees; zero on
    /// unlabeled pixels.
    pub angles: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelSidecar {
    image_id: CameraId,
    angle_deg_per_pixel_file: String,
    label_file: String,
}

impl LabelImage {
    pub fn new(image: CameraId, width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            image,
            width,
            height,
            labels: vec![Label::Unlabeled; n],
            angles: vec![0.0; n],
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn labeled(&self) -> usize {
        self.labels.len() - self.count(Label::Unlabeled)
    }

    /// Writes `label_<id>.pgm`, `angle_<id>.pfm` and the `label_<id>.json` sidecar.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let label_file = format!("label_{}.pgm", self.image);
        let angle_file = format!("angle_{}.pfm", self.image);
        let codes: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        write_pgm(
            self.width,
            self.height,
            &codes,
            &mut BufWriter::new(File::create(dir.join(&label_file))?),
        )?;
        write_pfm(
            self.width,
            self.height,
            &self.angles,
            &mut BufWriter::new(File::create(dir.join(&angle_file))?),
        )?;
        let sidecar = LabelSidecar {
            image_id: self.image,
            angle_deg_per_pixel_file: angle_file,
            label_file,
        };
        let path = dir.join(format!("label_{}.json", self.image));
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(path)
    }

    pub fn load(sidecar: &Path) -> Result<Self> {
        let meta: LabelSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let dir = sidecar.parent().unwrap_or(Path::new("."));
        let (w, h, codes) = read_pgm(File::open(dir.join(&meta.label_file))?)?;
        let (aw, ah, angles) = read_pfm(&mut std::io::BufReader::new(File::open(
            dir.join(&meta.angle_deg_per_pixel_file),
        )?))?;
        let bad = |m: &str| Error::Format {
            path: sidecar.to_path_buf(),
            message: m.to_string(),
        };
        if (aw, ah) != (w, h) {
            return Err(bad("label and angle images differ in size"));
        }
        let labels = codes
            .iter()
            .map(|&c| Label::from_code(c))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("label codes must be 0, 1 or 2"))?;
        Ok(Self {
            image: meta.image_id,
            width: w,
            height: h,
            labels,
            angles,
        })
    }

    /// Loads every `label_*.json` sidecar in `dir`, sorted by image id.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("label_") && name.ends_with(".json") {
                out.push(Self::load(&path)?);
            }
        }
        out.sort_by_key(|l| l.image);
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub triplets_sampled: usize,
    pub triplets_used: usize,
    pub triplets_skipped: usize,
    pub positive: usize,
    pub negative: usize,
    /// Of the negatives, those from missing-part detection.
    pub missing_negative: usize,
    /// Pixels showing scene geometry, over all labeled images.
    pub geometry_pixels: usize,
    /// Labeled fraction of `geometry_pixels`.
    pub density: f64,
    /// Fraction of labels agreeing with ground truth, when supplied.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LabelOutput {
    pub images: Vec<LabelImage>,
    /// Triplets in processing order; the position is the triplet id.
    pub triplets: Vec<TripletSample>,
    pub report: LabelReport,
}

/// Runs the three-stage label generation on all sampled triplets.
///
/// Triplet ids follow a seeded shuffle of the sampled list, and per-image labels are
/// merged in id order with later triplets overwriting earlier ones. When `truth` is
/// given, each written label is checked against the ground-truth depth.
pub fn generate_labels(
    cameras: &[Camera],
    mesh: &TriangleMesh,
    backend: &dyn MvsBackend,
    cfg: &LabelConfig,
    truth: Option<&TriangleMesh>,
) -> Result<LabelOutput> {
    let by_id: HashMap<CameraId, Camera> = cameras.iter().map(|c| (c.id, *c)).collect();
    let mut triplets = sample_triplets(cameras, mesh, &cfg.sampling);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampling.seed.wrapping_add(1));
    triplets.shuffle(&mut rng);
    let mut report = LabelReport {
        triplets_sampled: triplets.len(),
        ..Default::default()
    };

    let mut clusters: Vec<(usize, [Camera; 3], Cluster)> = Vec::new();
    for (id, t) in triplets.iter().enumerate() {
        let cams = t.cameras.map(|c| by_id[&c]);
        match backend.reconstruct(&cams, cfg.sampling.seed.wrapping_add(id as u64)) {
            Ok(depths) => {
                clusters.push((id, cams, Cluster::new(&cams, depths, cfg.pixel_noise_std)))
            }
            Err(e) => {
                warn!("triplet {id} {:?} skipped: {e}", t.cameras);
                report.triplets_skipped += 1;
            }
        }
    }
    report.triplets_used = clusters.len();

    let supports: Vec<Vec<Vec<u32>>> = clusters
        .iter()
        .map(|(_, _, q)| {
            let refs: Vec<&Cluster> = clusters
                .iter()
                .map(|(_, _, c)| c)
                .filter(|c| !c.shares_camera(q))
                .collect();
            compute_support(q, &refs, &cfg.support, &cfg.votes)
        })
        .collect();
    for ((_, _, c), s) in clusters.iter_mut().zip(supports) {
        for (g, s) in c.grids.iter_mut().zip(s) {
            g.support = s;
        }
    }

    let (shrunk, expanded) = shrink_expand_mesh(mesh);
    let mut renders: HashMap<CameraId, CameraRenders> = HashMap::new();
    let mut images: BTreeMap<CameraId, (LabelImage, Vec<Option<bool>>)> = BTreeMap::new();

    for (id, cams, q) in &clusters {
        let refs: Vec<&Cluster> = clusters
            .iter()
            .map(|(_, _, c)| c)
            .filter(|c| !c.shares_camera(q))
            .collect();
        let centers = cams.map(|c| c.center());
        for c in cams {
            renders
                .entry(c.id)
                .or_insert_with(|| CameraRenders::new(c, mesh, &shrunk, &expanded, truth));
        }
        for (k, grid) in q.grids.iter().enumerate() {
            let labels = label_from_votes(&cast_votes(q, k, &refs, &cfg.votes));
            let sigma: Vec<f64> = grid.uncertainty.iter().map(|u| u.sqrt()).collect();
            let own = &renders[&cams[k].id];
            let missing = missing_from_renders(
                &grid.depth,
                &sigma,
                &own.shrunk.depth,
                &own.expanded.depth,
                &cfg.augment,
            );
            let (w, h) = (grid.depth.width, grid.depth.height);
            let (image, truth_flags) = images.entry(cams[k].id).or_insert_with(|| {
                (
                    LabelImage::new(cams[k].id, w, h),
                    vec![None; (w * h) as usize],
                )
            });

            for i in 0..labels.len() {
                let (label, angle) = if labels[i] != Label::Unlabeled {
                    (labels[i], triplets[*id].angle_deg)
                } else if missing[i] {
                    let (x, y) = ((i as u32) % w, (i as u32) / w);
                    let (Some(face), Some(p)) = (own.mesh.face_at(x, y), own.mesh.point_at(x, y))
                    else {
                        continue;
                    };
                    let possible = (0..3).filter(|&j| j != k).all(|j| {
                        mesh.is_front_facing(face, &centers[j])
                            && sees(&renders[&cams[j].id].mesh, &p, cfg.possibility_tolerance)
                    });
                    if !possible {
                        continue;
                    }
                    report.missing_negative += 1;
                    (Label::Negative, triplets[*id].angle_deg)
                } else {
                    continue;
                };
                image.labels[i] = label;
                image.angles[i] = angle as f32;
                if let Some(t) = &own.truth {
                    let measured_ok =
                        measurement_correct(&grid.depth, grid.uncertainty[i], &t.depth, i, cfg);
                    truth_flags[i] = Some(measured_ok == (label == Label::Positive));
                }
            }
        }
    }

    let mut correct = 0usize;
    let mut checked = 0usize;
    let mut out = Vec::with_capacity(images.len());
    for (id, (image, flags)) in images {
        report.positive += image.count(Label::Positive);
        report.negative += image.count(Label::Negative);
        report.geometry_pixels += renders[&id].mesh.depth.valid_count();
        for f in flags.iter().flatten() {
            checked += 1;
            correct += *f as usize;
        }
        out.push(image);
    }
    let labeled = report.positive + report.negative;
    report.density = if report.geometry_pixels > 0 {
        labeled as f64 / report.geometry_pixels as f64
    } else {
        0.0
    };
    report.accuracy = (truth.is_some() && checked > 0).then(|| correct as f64 / checked as f64);
    info!(
        "labels: {} positive, {} negative, density {:.3}, accuracy {:?}",
        report.positive, report.negative, report.density, report.accuracy
    );
    Ok(LabelOutput {
        images: out,
        triplets,
        report,
    })
}

struct CameraRenders {
    mesh: Render,
    shrunk: Render,
    expanded: Render,
    truth: Option<Render>,
}

impl CameraRenders {
    fn new(
        c: &Camera,
        mesh: &TriangleMesh,
        shrunk: &TriangleMesh,
        expanded: &TriangleMesh,
        truth: Option<&TriangleMesh>,
    ) -> Self {
        Self {
            mesh: render_depth(c, mesh, 1),
            shrunk: render_depth(c, shrunk, 1),
            expanded: render_depth(c, expanded, 1),
            truth: truth.map(|t| render_depth(c, t, 1)),
        }
    }
}

/// Whether `p` is unoccluded and in view of the rendered camera.
fn sees(render: &Render, p: &Point3<f64>, tolerance: f64) -> bool {
    let Some(proj) = render.camera.project_point(p) else {
        return false;
    };
    let Some((x, y)) = render.depth.pixel_at(&proj.pixel) else {
        return false;
    };
    let d = render.depth.get(x, y);
    is_valid_depth(d) && proj.depth <= d * (1.0 + tolerance)
}

fn measurement_correct(
    depth: &DepthMap,
    u: f64,
    truth: &DepthMap,
    i: usize,
    cfg: &LabelConfig,
) -> bool {
    let (d, t) = (depth.depths[i], truth.depths[i]);
    if !(is_valid_depth(d) && is_valid_depth(t)) {
        return false;
    }
    let sigma = if u.is_finite() { u.sqrt() } else { 0.0 };
    (d - t).abs() <= (cfg.truth_sigma * sigma).max(cfg.truth_relative * t)
}
