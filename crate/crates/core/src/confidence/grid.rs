use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::forest::ConfidenceForest;
use super::lab::LabImage;
use crate::geometry::io::{read_pfm, write_pfm};
use crate::geometry::CameraId;
use crate::{Error, Result};

/// Minimum training-mass fraction for a bin to count as valid in a confidence curve.
pub const MIN_BIN_MASS: f64 = 0.01;

/// Per-bin confidence sampled on a regular grid with nodes at multiples of `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceImage {
    pub image: CameraId,
    pub step: u32,
    pub bins: usize,
    pub gamma_max_deg: f64,
    /// Image size in pixels.
    pub width: u32,
    pub height: u32,
    /// Node counts per axis.
    pub nodes_x: u32,
    pub nodes_y: u32,
    /// Bin-major planes of `nodes_x * nodes_y` values.
    pub values: Vec<f32>,
}

impl ConfidenceImage {
    /// Value of the nearest grid node to pixel `(x, y)` in `bin`.
    #[inline]
    pub fn at(&self, x: f64, y: f64, bin: usize) -> f64 {
        let s = self.step as f64;
        let i = ((x / s).round().max(0.0) as u32).min(self.nodes_x - 1);
        let j = ((y / s).round().max(0.0) as u32).min(self.nodes_y - 1);
        self.values[bin * (self.nodes_x * self.nodes_y) as usize + (j * self.nodes_x + i) as usize]
            as f64
    }

    /// Writes `conf_<id>.pfm` holding the planes back to back and `conf_<id>.json`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let planes = format!("conf_{}.pfm", self.image);
        let mut w = BufWriter::new(File::create(dir.join(&planes))?);
        let n = (self.nodes_x * self.nodes_y) as usize;
        for b in 0..self.bins {
            write_pfm(
                self.nodes_x,
                self.nodes_y,
                &self.values[b * n..(b + 1) * n],
                &mut w,
            )?;
        }
        w.flush()?;
        let meta = Sidecar {
            image_id: self.image,
            step: self.step,
            bins: self.bins,
            gamma_max: self.gamma_max_deg,
            width: self.width,
            height: self.height,
            planes_file: planes,
        };
        let path = dir.join(format!("conf_{}.json", self.image));
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
        Ok(path)
    }

    pub fn load(sidecar: &Path) -> Result<Self> {
        let meta: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let dir = sidecar.parent().unwrap_or(Path::new("."));
        let mut r = BufReader::new(File::open(dir.join(&meta.planes_file))?);
        let mut values = Vec::new();
        let mut dims = None;
        for _ in 0..meta.bins {
            let (w, h, plane) = read_pfm(&mut r)?;
            if dims.is_some_and(|d| d != (w, h)) {
                return Err(Error::Format {
                    path: sidecar.to_path_buf(),
                    message: "confidence planes differ in size".into(),
                });
            }
            dims = Some((w, h));
            values.extend(plane);
        }
        let (nodes_x, nodes_y) = dims.ok_or_else(|| Error::Format {
            path: sidecar.to_path_buf(),
            message: "no confidence planes".into(),
        })?;
        Ok(Self {
            image: meta.image_id,
            step: meta.step,
            bins: meta.bins,
            gamma_max_deg: meta.gamma_max,
            width: meta.width,
            height: meta.height,
            nodes_x,
            nodes_y,
            values,
        })
    }

    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("conf_") && name.ends_with(".json") {
                out.push(Self::load(&path)?);
            }
        }
        out.sort_by_key(|c| c.image);
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    image_id: CameraId,
    step: u32,
    bins: usize,
    gamma_max: f64,
    width: u32,
    height: u32,
    planes_file: String,
}

/// Evaluates the forest at grid nodes `(i * step, j * step)` covering the image.
pub fn predict_grid(
    forest: &ConfidenceForest,
    image: &LabImage,
    id: CameraId,
    step: u32,
) -> ConfidenceImage {
    let step = step.max(1);
    let nodes_x = (image.width - 1) / step + 1;
    let nodes_y = (image.height - 1) / step + 1;
    let b = forest.bins();
    let n = (nodes_x * nodes_y) as usize;
    let mut values = vec![0f32; b * n];
    let mut out = vec![0.0; b];
    for j in 0..nodes_y {
        for i in 0..nodes_x {
            forest.predict_into(image, (i * step) as i32, (j * step) as i32, &mut out);
            let k = (j * nodes_x + i) as usize;
            for (bin, v) in out.iter().enumerate() {
                values[bin * n + k] = *v as f32;
            }
        }
    }
    ConfidenceImage {
        image: id,
        step,
        bins: b,
        gamma_max_deg: forest.gamma_max_deg(),
        width: image.width,
        height: image.height,
        nodes_x,
        nodes_y,
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Bin center, degrees.
    pub angle_deg: f64,
    pub confidence: f64,
    /// Fraction of the training mass of the reached leaves that falls into this bin.
    pub mass: f64,
    pub valid: bool,
}

/// Confidence against triangulation angle at one pixel.
pub fn confidence_curve(
    forest: &ConfidenceForest,
    image: &LabImage,
    x: u32,
    y: u32,
) -> Vec<CurvePoint> {
    let conf = forest.predict(image, x as i32, y as i32);
    let mass = forest.bin_mass(image, x as i32, y as i32);
    let w = forest.gamma_max_deg() / forest.bins() as f64;
    conf.iter()
        .zip(&mass)
        .enumerate()
        .map(|(b, (&c, &m))| CurvePoint {
            angle_deg: (b as f64 + 0.5) * w,
            confidence: c,
            mass: m,
            valid: m >= MIN_BIN_MASS,
        })
        .collect()
}
