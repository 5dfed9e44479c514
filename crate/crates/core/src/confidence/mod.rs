//! Per-pixel MVS confidence prediction: Lab patch features, a randomized forest with
//! angle-binned leaves, grid-sampled confidence images and sparsification scoring.

pub mod forest;
pub mod grid;
pub mod lab;
pub mod samples;
pub mod sparsify;

pub use forest::{angle_bin, restructure_leaves, train_forest, ConfidenceForest, ForestConfig};
pub use grid::{confidence_curve, predict_grid, ConfidenceImage, CurvePoint};
pub use lab::{rgb_to_lab, LabImage, RgbImage};
pub use samples::{extract_samples, PatchSample, PATCH_RADIUS};
pub use sparsify::{sparsification_ausc, Sparsification};
