//! Voxel occupancy and exact Euclidean distance transform for obstacle clearance.

use nalgebra::{Point3, Vector3};

use crate::geometry::TriangleMesh;
use crate::{Error, Result};

/// Per-voxel distance to the nearest occupied voxel center, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub origin: Point3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
    /// x-fastest; `+inf` when nothing is occupied.
    pub distances: Vec<f64>,
    /// Bounds of the voxelized geometry, used outside the grid.
    geometry_bounds: Option<(Point3<f64>, Point3<f64>)>,
    /// Slack between voxel-center distances and true surface distances.
    slack: f64,
}

/// Voxels of padding around the mesh bounds.
const PADDING: usize = 2;

impl DistanceField {
    /// Exact transform of an explicit occupancy grid (x-fastest).
    pub fn from_occupancy(
        origin: Point3<f64>,
        resolution: f64,
        dims: [usize; 3],
        occupied: &[bool],
    ) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Config(format!(
                "voxel resolution {resolution} must be positive"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if occupied.len() != n {
            return Err(Error::Config(format!(
                "occupancy has {} cells, expected {n}",
                occupied.len()
            )));
        }
        let mut sq: Vec<f64> = occupied
            .iter()
            .map(|&o| if o { 0.0 } else { f64::INFINITY })
            .collect();
        edt_squared(&mut sq, dims);
        let geometry_bounds = occupied.iter().any(|&o| o).then(|| {
            let hi =
                origin + Vector3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * resolution;
            (origin, hi)
        });
        Ok(Self {
            origin,
            resolution,
            dims,
            distances: sq.into_iter().map(|d| d.sqrt() * resolution).collect(),
            geometry_bounds,
            // Point to its voxel center plus surface point to its voxel center.
            slack: 3f64.sqrt() * resolution,
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn voxel_of(&self, p: &Point3<f64>) -> Option<[usize; 3]> {
        let rel = (p - self.origin) / self.resolution;
        let mut out = [0; 3];
        for a in 0..3 {
            let v = rel[a].floor();
            if !(v >= 0.0 && v < self.dims[a] as f64) {
                return None;
            }
            out[a] = v as usize;
        }
        Some(out)
    }

    pub fn voxel_center(&self, v: [usize; 3]) -> Point3<f64> {
        self.origin
            + Vector3::new(v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5)
                * self.resolution
    }

    pub fn distance_at_voxel(&self, v: [usize; 3]) -> f64 {
        self.distances[self.index(v[0], v[1], v[2])]
    }

    /// Voxel distance at the voxel containing `p`; `+inf` outside the grid.
    pub fn distance_at(&self, p: &Point3<f64>) -> f64 {
        self.voxel_of(p)
            .map_or(f64::INFINITY, |v| self.distance_at_voxel(v))
    }

    /// Lower bound on the distance from `p` to the voxelized geometry.
    pub fn clearance(&self, p: &Point3<f64>) -> f64 {
        let Some((lo, hi)) = self.geometry_bounds else {
            return f64::INFINITY;
        };
        let outside = Vector3::from_fn(|a, _| (lo[a] - p[a]).max(p[a] - hi[a]).max(0.0)).norm();
        let inside = match self.voxel_of(p) {
            Some(v) => (self.distance_at_voxel(v) - self.slack).max(0.0),
            None => 0.0,
        };
        outside.max(inside)
    }
}

/// Voxelizes `mesh` by dense surface sampling and transforms the occupancy.
pub fn build_distance_field(mesh: &TriangleMesh, resolution: f64) -> Result<DistanceField> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Config(format!(
            "voxel resolution {resolution} must be positive"
        )));
    }
    let Some((lo, hi)) = mesh.bounds() else {
        return DistanceField::from_occupancy(Point3::origin(), resolution, [1, 1, 1], &[false]);
    };
    let pad = PADDING as f64 * resolution;
    let origin = lo - Vector3::repeat(pad);
    let extent = hi - lo + Vector3::repeat(2.0 * pad);
    let dims = [0, 1, 2].map(|a| ((extent[a] / resolution).ceil() as usize).max(1));
    let mut occupied = vec![false; dims[0] * dims[1] * dims[2]];
    // Samples at most half a voxel apart on every face.
    let spacing = 0.5 * resolution;
    for f in 0..mesh.face_count() as u32 {
        let [a, b, c] = mesh.face_vertices(f);
        let longest = mesh.edge_lengths(f).into_iter().fold(0.0, f64::max);
        let n = ((longest / spacing).ceil() as usize).max(1);
        for i in 0..=n {
            for j in 0..=n - i {
                let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                let p = a + (b - a) * u + (c - a) * v;
                let rel = (p - origin) / resolution;
                let idx = [0, 1, 2].map(|ax| (rel[ax].floor().max(0.0) as usize).min(dims[ax] - 1));
                occupied[(idx[2] * dims[1] + idx[1]) * dims[0] + idx[0]] = true;
            }
        }
    }
    let mut field = DistanceField::from_occupancy(origin, resolution, dims, &occupied)?;
    field.geometry_bounds = Some((lo, hi));
    field.slack = (3f64.sqrt() + 0.5) * resolution;
    Ok(field)
}

/// In-place squared EDT (voxel units) along each axis, lower-envelope method.
fn edt_squared(grid: &mut [f64], dims: [usize; 3]) {
    let longest = dims.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    let stride = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for q in 0..dims[b] {
            for p in 0..dims[a] {
                let base = p * stride[a] + q * stride[b];
                for i in 0..n {
                    line[i] = grid[base + i * stride[axis]];
                }
                edt_1d(&line[..n], &mut out[..n], &mut v, &mut z);
                for i in 0..n {
                    grid[base + i * stride[axis]] = out[i];
                }
            }
        }
    }
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if k < 0 {
        d.fill(f64::INFINITY);
        return;
    }
    let mut j = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}
