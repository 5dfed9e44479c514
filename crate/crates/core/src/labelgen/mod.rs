//! Self-supervised training labels for MVS confidence from triplet depthmaps:
//! support from independent reconstructions, consistency voting and missing-part detection.

pub mod backend;
pub mod missing;
pub mod pipeline;
pub mod sampling;
pub mod support;
pub mod voting;

pub use backend::{MvsBackend, RecordedBackend};
pub use missing::{augment_depthmap, detect_missing, AugmentConfig};
pub use pipeline::{generate_labels, LabelConfig, LabelImage, LabelOutput, LabelReport};
pub use sampling::{sample_triplets, AngleBins, SamplingConfig, TripletSample};
pub use support::{
    compute_support, support_metrics, Cluster, MeasurementGrid, SupportConfig, VoteConfig,
};
pub use voting::{cast_votes, label_from_votes, Label, VoteTally};
