use serde::{Deserialize, Serialize};

use crate::geometry::CameraIntrinsics;
use crate::{Error, Result};

/// Planner parameters. Defaults follow the published field setup (meter scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Cameras a triangle must be visible in to count as covered.
    pub min_cameras: usize,
    /// Desired ground resolution, px/m^2.
    pub desired_resolution: f64,
    /// Desired accuracy as a standard deviation, m.
    pub desired_accuracy: f64,
    /// Weight of resolution against uncertainty.
    pub resolution_weight: f64,
    /// Triangles scored per fulfillment estimate.
    pub fulfillment_samples: usize,
    /// Surrogate camera positions.
    pub surrogate_samples: usize,
    /// Low-fulfillment targets per planned triplet.
    pub target_samples: usize,
    /// Field of view of the per-triangle virtual cameras, degrees.
    pub virtual_fov_deg: f64,
    /// Side length in pixels of the virtual-camera depth buffer.
    pub virtual_resolution: u32,
    pub bins: usize,
    pub gamma_max_deg: f64,
    /// Triplets per planning call.
    pub triplets_per_call: usize,
    /// Overlap a new image needs with an earlier one to register.
    pub min_overlap: f64,
    pub safety_distance: f64,
    pub voxel_resolution: f64,
    pub pixel_noise_std: f64,
    /// Physical camera used for planned views.
    pub camera: CameraIntrinsics,
    /// Fixed aim distance for hypothetical triplets; `None` uses the distance to the
    /// gain-weighted centroid of the linked triangles.
    pub aim_distance: Option<f64>,
    /// Mean-shift bandwidth in degrees; `None` uses half the smaller camera field of view.
    pub bandwidth_deg: Option<f64>,
    pub mean_shift_iterations: usize,
    pub mean_shift_tolerance_rad: f64,
    /// Surrogate sampling box: roi bounds grown by this much horizontally, m.
    pub horizontal_margin: f64,
    /// Surrogate sampling box: height above the highest mesh point, m.
    pub vertical_margin: f64,
    /// Render downscale for visibility of planned and captured cameras.
    pub visibility_downscale: u32,
    /// Use predicted MVS confidence; `false` gives the confidence-free planner.
    pub use_confidence: bool,
    /// Confidence assumed when no captured image observes a triangle.
    pub confidence_prior: f64,
    /// Registration poses allowed per planned camera.
    pub max_insertions: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            min_cameras: 3,
            desired_resolution: 1.0 / (0.008 * 0.008),
            desired_accuracy: 0.008,
            resolution_weight: 0.5,
            fulfillment_samples: 2000,
            surrogate_samples: 5000,
            target_samples: 200,
            virtual_fov_deg: 120.0,
            virtual_resolution: 64,
            bins: 9,
            gamma_max_deg: 45.0,
            triplets_per_call: 5,
            min_overlap: 0.5,
            safety_distance: 5.0,
            voxel_resolution: 2.0,
            pixel_noise_std: 1.0,
            camera: CameraIntrinsics::from_horizontal_fov(60.0, 640, 480)
                .expect("valid default camera"),
            aim_distance: None,
            bandwidth_deg: None,
            mean_shift_iterations: 50,
            mean_shift_tolerance_rad: 1e-6,
            horizontal_margin: 10.0,
            vertical_margin: 20.0,
            visibility_downscale: 1,
            use_confidence: true,
            confidence_prior: 0.5,
            max_insertions: 8,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("desired_resolution", self.desired_resolution),
            ("desired_accuracy", self.desired_accuracy),
            ("virtual_fov_deg", self.virtual_fov_deg),
            ("gamma_max_deg", self.gamma_max_deg),
            ("safety_distance", self.safety_distance),
            ("voxel_resolution", self.voxel_resolution),
            ("pixel_noise_std", self.pixel_noise_std),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("min_cameras", self.min_cameras),
            ("fulfillment_samples", self.fulfillment_samples),
            ("surrogate_samples", self.surrogate_samples),
            ("target_samples", self.target_samples),
            ("bins", self.bins),
            ("triplets_per_call", self.triplets_per_call),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.resolution_weight) {
            return Err(Error::Config("resolution_weight must lie in [0, 1]".into()));
        }
        if self.target_samples > self.fulfillment_samples {
            return Err(Error::Config(
                "target_samples must not exceed fulfillment_samples".into(),
            ));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap < 1.0) {
            return Err(Error::Config("min_overlap must lie in (0, 1)".into()));
        }
        if self.gamma_max_deg >= 120.0 {
            return Err(Error::Config(
                "gamma_max_deg must be below 120 for equilateral triplets".into(),
            ));
        }
        if self.virtual_fov_deg >= 180.0 {
            return Err(Error::Config("virtual_fov_deg must be below 180".into()));
        }
        if self.aim_distance.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("aim_distance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_prior) {
            return Err(Error::Config("confidence_prior must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Representative angle of planning bin `bin`: its center.
    pub fn bin_angle_deg(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.gamma_max_deg / self.bins as f64
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth_deg
            .unwrap_or_else(|| self.camera.min_opening_angle_deg())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = PlannerConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.desired_resolution - 15625.0).abs() < 1e-6);
        assert!((cfg.bin_angle_deg(0) - 2.5).abs() < 1e-12);
        assert!((cfg.bin_angle_deg(8) - 42.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            PlannerConfig {
                resolution_weight: 1.5,
                ..Default::default()
            },
            PlannerConfig {
                target_samples: 3000,
                ..Default::default()
            },
            PlannerConfig {
                min_overlap: 1.0,
                ..Default::default()
            },
            PlannerConfig {
                safety_distance: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
