//! Synthetic scenes, an MVS oracle, grid baselines, the closed acquisition loop and
//! evaluation metrics.

pub mod acquisition;
pub mod grid;
pub mod metrics;
pub mod oracle;
pub mod scene;
pub mod training;

pub use acquisition::{
    run_acquisition, AcquisitionConfig, AcquisitionLog, CaptureRecord, GridSpec, LogEvent,
    PlannedRuns, Strategy,
};
pub use grid::{footprint, grid_plan};
pub use metrics::{
    error_histogram, evaluate_metrics, ErrorHistogram, EvaluationConfig, MeshStats, Metrics, Stat,
};
pub use oracle::{oracle_mvs, OracleBackend, OracleModel};
pub use scene::{build_scene, SyntheticScene, Texture, ROUGH, SMOOTH};
pub use training::{train_scene_forest, training_cameras, TrainingConfig, TrainingRun};
