use serde::{Deserialize, Serialize};

use super::sampling::median;
use crate::geometry::raster::{is_valid_depth, render_depth};
use crate::geometry::{Camera, DepthMap, TriangleMesh};

/// Hole filling of depthmaps before missing-part detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Odd window edge length in pixels.
    pub window: u32,
    pub min_valid_fraction: f64,
    /// Largest allowed depth spread in the window, in multiples of the window's median sigma.
    pub max_spread_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            window: 9,
            min_valid_fraction: 0.25,
            max_spread_sigma: 3.0,
        }
    }
}

/// Fills invalid pixels with the window median of valid depths when the window is
/// populated enough and locally flat. `sigma` holds per-pixel depth standard deviations.
pub fn augment_depthmap(depth: &DepthMap, sigma: &[f64], cfg: &AugmentConfig) -> DepthMap {
    let mut out = depth.clone();
    let r = (cfg.window / 2) as i64;
    let (w, h) = (depth.width as i64, depth.height as i64);
    let window_area = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut values = Vec::new();
    let mut sigmas = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if depth.is_valid(x as u32, y as u32) {
                continue;
            }
            values.clear();
            sigmas.clear();
            for yy in (y - r).max(0)..=(y + r).min(h - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                    let i = depth.index(xx as u32, yy as u32);
                    if is_valid_depth(depth.depths[i]) {
                        values.push(depth.depths[i]);
                        sigmas.push(sigma[i]);
                    }
                }
            }
            if (values.len() as f64) < cfg.min_valid_fraction * window_area {
                continue;
            }
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= cfg.max_spread_sigma * median(&mut sigmas) {
                let i = depth.index(x as u32, y as u32);
                out.depths[i] = median(&mut values);
            }
        }
    }
    out
}

/// Pixels where the depthmap and its augmentation are empty while both the shrunk and
/// the expanded mesh show geometry.
pub fn detect_missing(
    depth: &DepthMap,
    sigma: &[f64],
    camera: &Camera,
    shrunk: &TriangleMesh,
    expanded: &TriangleMesh,
    cfg: &AugmentConfig,
) -> Vec<bool> {
    let s = render_depth(camera, shrunk, depth.downscale);
    let e = render_depth(camera, expanded, depth.downscale);
    missing_from_renders(depth, sigma, &s.depth, &e.depth, cfg)
}

pub(crate) fn missing_from_renders(
    depth: &DepthMap,
    sigma: &[f64],
    shrunk: &DepthMap,
    expanded: &DepthMap,
    cfg: &AugmentConfig,
) -> Vec<bool> {
    let aug = augment_depthmap(depth, sigma, cfg);
    (0..depth.depths.len())
        .map(|i| {
            !is_valid_depth(depth.depths[i])
                && !is_valid_depth(aug.depths[i])
                && is_valid_depth(shrunk.depths[i])
                && is_valid_depth(expanded.depths[i])
        })
        .collect()
}
