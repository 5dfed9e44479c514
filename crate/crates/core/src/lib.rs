//! Confidence-aware view planning for multi-view stereo (MVS) acquisition.
//!
//! The crate is split along the acquisition pipeline:
//!
//! * [`geometry`]: pinhole cameras, triangle meshes, z-buffer rendering,
//!   visibility, triangulation uncertainty and mesh processing.
//! * [`labelgen`]: self-supervised positive/negative labels from the depthmaps
//!   of sampled camera triplets.
//! * [`confidence`]: a patch forest whose leaves are binned by triangulation
//!   angle, grid prediction and sparsification scoring.
//! * [`planner`]: fulfillment estimation, surrogate cameras, triplet search and
//!   registration-safe path ordering.
//! * [`harness`]: synthetic scenes, an MVS oracle, baseline grid planning, the
//!   closed acquisition loop and evaluation metrics.

pub mod confidence;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod labelgen;
pub mod planner;

pub use error::{Error, Result};
