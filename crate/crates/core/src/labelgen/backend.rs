use std::path::{Path, PathBuf};

use crate::geometry::io::{load_depth_pfm, save_depth_pfm};
use crate::geometry::{Camera, CameraId, DepthMap};
use crate::Result;

/// A multi-view stereo method run on one camera triplet.
pub trait MvsBackend {
    /// One depthmap per member image, in the order of `cameras`.
    fn reconstruct(&self, cameras: &[Camera; 3], seed: u64) -> Result<[DepthMap; 3]>;
}

/// Replays depthmaps stored on disk as `<root>/<a>_<b>_<c>/<id>.pfm`, with the member
/// ids sorted ascending.
#[derive(Debug, Clone)]
pub struct RecordedBackend {
    pub root: PathBuf,
}

impl RecordedBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn triplet_dir(root: &Path, ids: &[CameraId; 3]) -> PathBuf {
        let mut s = *ids;
        s.sort();
        root.join(format!("{}_{}_{}", s[0], s[1], s[2]))
    }

    /// Stores a reconstruction in the layout read by [`RecordedBackend`].
    pub fn record(root: &Path, depths: &[DepthMap]) -> Result<()> {
        let ids: [CameraId; 3] = [depths[0].camera, depths[1].camera, depths[2].camera];
        let dir = Self::triplet_dir(root, &ids);
        std::fs::create_dir_all(&dir)?;
        for d in depths {
            save_depth_pfm(d, &dir.join(format!("{}.pfm", d.camera)))?;
        }
        Ok(())
    }
}

impl MvsBackend for RecordedBackend {
    fn reconstruct(&self, cameras: &[Camera; 3], _seed: u64) -> Result<[DepthMap; 3]> {
        let dir = Self::triplet_dir(&self.root, &cameras.map(|c| c.id));
        let load = |c: &Camera| -> Result<DepthMap> {
            let d = load_depth_pfm(&dir.join(format!("{}.pfm", c.id)), c.id, 1)?;
            let s = c.intrinsics.width() / d.width.max(1);
            Ok(DepthMap {
                downscale: s.max(1),
                ..d
            })
        };
        Ok([load(&cameras[0])?, load(&cameras[1])?, load(&cameras[2])?])
    }
}
