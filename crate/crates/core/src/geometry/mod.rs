//! Pinhole cameras, triangle meshes, depth rendering, visibility and triangulation math.

pub mod camera;
pub mod io;
pub mod mesh;
pub mod overlap;
pub mod raster;
pub mod smoothing;
pub mod subdivide;
pub mod uncertainty;
pub mod visibility;

pub use camera::{Camera, CameraId, CameraIntrinsics, CameraPose, Projection};
pub use mesh::{FaceId, MaterialId, TriangleMesh};
pub use overlap::{image_overlap, overlap_from_renders};
pub use raster::{
    is_valid_depth, render_depth, render_faces, DepthMap, Render, INVALID_DEPTH, NO_FACE,
};
pub use smoothing::shrink_expand_mesh;
pub use subdivide::{subdivide_roi, subdivide_to_edge, Subdivision};
pub use uncertainty::{
    ground_resolution, min_pairwise_angle, point_uncertainty, triangulation_angle, TripletSummary,
    UncertaintyEstimate,
};
pub use visibility::{compute_visibility, visibility_from_renders, VisibilityTable};
