//! View planning: fulfillment scoring, surrogate cameras with inverse visibility,
//! mean-shift orientation, equilateral triplet search and registration-safe ordering.

pub mod config;
pub mod distance;
pub mod fulfillment;
pub mod io;
pub mod path;
pub mod session;
pub mod surrogate;
pub mod targets;
pub mod triplet;

pub use config::PlannerConfig;
pub use distance::{build_distance_field, DistanceField};
pub use fulfillment::{estimate_fulfillment, FulfillmentModel, FulfillmentRecord};
pub use io::{PlanFile, RoiFile, SnapshotFile};
pub use path::{optimize_path, PathConfig, PlannedView, ViewPlan, ViewRole};
pub use session::{plan_views, PlanOutcome, Snapshot};
pub use surrogate::{
    inverse_visibility, orient_surrogates, potential_gain, sample_surrogates, SurrogateCamera,
};
pub use targets::select_targets;
pub use triplet::{best_triplet, make_triplet, triplet_gain, CameraTriplet};
