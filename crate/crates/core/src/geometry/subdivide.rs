use std::collections::HashMap;

use super::mesh::{FaceId, TriangleMesh};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Subdivision {
    pub mesh: TriangleMesh,
    /// Sorted ids of the faces that now make up the region.
    pub roi: Vec<FaceId>,
    /// Edge length the region was split to.
    pub target_edge: f64,
}

/// Splits region faces on their longest edge until no edge is longer than the region's
/// mean edge length before splitting. Faces outside the region keep their ids; the first
/// child of a split face reuses the parent id, further children are appended.
/// Midpoints are shared between faces splitting the same edge.
pub fn subdivide_roi(mesh: &TriangleMesh, roi: &[FaceId]) -> Result<Subdivision> {
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let target_edge =
        roi.iter().flat_map(|&f| mesh.edge_lengths(f)).sum::<f64>() / (3 * roi.len()) as f64;
    subdivide_to_edge(mesh, roi, target_edge)
}

/// Splits region faces on their longest edge until no edge exceeds `max_edge`, with the
/// id and sharing rules of [`subdivide_roi`].
pub fn subdivide_to_edge(
    mesh: &TriangleMesh,
    roi: &[FaceId],
    max_edge: f64,
) -> Result<Subdivision> {
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    if !(max_edge > 0.0) {
        return Err(Error::Config(format!(
            "edge bound must be positive, got {max_edge}"
        )));
    }
    let target_edge = max_edge;
    let mut out = mesh.clone();
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
    let mut stack: Vec<FaceId> = roi.to_vec();
    stack.sort_unstable();
    stack.dedup();
    let mut region = Vec::with_capacity(stack.len());

    while let Some(face) = stack.pop() {
        let lengths = out.edge_lengths(face);
        let (k, longest) = lengths
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if longest <= target_edge {
            region.push(face);
            continue;
        }
        let tri = out.faces[face as usize];
        let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
        let key = (a.min(b), a.max(b));
        let m = *midpoints.entry(key).or_insert_with(|| {
            let p = nalgebra::center(&out.vertices[a as usize], &out.vertices[b as usize]);
            out.vertices.push(p);
            (out.vertices.len() - 1) as u32
        });
        out.faces[face as usize] = [a, m, c];
        out.faces.push([m, b, c]);
        if let Some(mats) = out.materials.as_mut() {
            mats.push(mats[face as usize]);
        }
        let child = (out.faces.len() - 1) as FaceId;
        stack.push(face);
        stack.push(child);
    }
    region.sort_unstable();
    Ok(Subdivision {
        mesh: out,
        roi: region,
        target_edge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn equilateral(side: f64, x0: f64) -> TriangleMesh {
        let h = side * 3f64.sqrt() / 2.0;
        TriangleMesh::new(
            vec![
                Point3::new(x0, 0.0, 0.0),
                Point3::new(x0 + side, 0.0, 0.0),
                Point3::new(x0 + side / 2.0, h, 0.0),
            ],
            vec![[0, 1, 2]],
            Some(vec![3]),
        )
        .unwrap()
    }

    #[test]
    fn uniform_region_is_unchanged() {
        let mut mesh = equilateral(1.0, 0.0);
        mesh.append(&equilateral(1.0, 2.0));
        let sub = subdivide_roi(&mesh, &[0, 1]).unwrap();
        assert_eq!(sub.mesh.faces, mesh.faces);
        assert_eq!(sub.roi, vec![0, 1]);
    }

    #[test]
    fn empty_region_is_an_error() {
        assert!(matches!(
            subdivide_roi(&equilateral(1.0, 0.0), &[]),
            Err(Error::EmptyRoi)
        ));
    }

    #[test]
    fn large_face_is_split_until_bound_holds() {
        let mut mesh = equilateral(4.0, 0.0);
        for i in 0..5 {
            mesh.append(&equilateral(1.0, 10.0 + 2.0 * i as f64));
        }
        let area = mesh.total_area(0..6);
        let sub = subdivide_roi(&mesh, &[0, 1, 2, 3, 4, 5]).unwrap();
        // Mean edge over 6 faces: (3*4 + 15*1) / 18 = 1.5.
        assert!((sub.target_edge - 1.5).abs() < 1e-12);
        for &f in &sub.roi {
            assert!(sub
                .mesh
                .edge_lengths(f)
                .iter()
                .all(|&e| e <= sub.target_edge + 1e-6));
            assert!(sub.mesh.face_area(f) > 1e-12);
            assert_eq!(sub.mesh.material(f), Some(3));
        }
        assert!(sub.roi.len() > 6);
        assert!((sub.mesh.total_area(sub.roi.iter().copied()) - area).abs() <= 1e-6 * area);
    }
}
