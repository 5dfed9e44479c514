use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;

pub const SHRINK_ITERATIONS: usize = 3;

/// Shrunk and expanded variants of a mesh with slightly different object boundaries.
///
/// Shrinking runs three smoothing passes, each moving every vertex half way toward the
/// mean of its edge-neighbors. Expansion averages the total shrink motion over each
/// vertex and its neighbors and moves the shrunk vertex twice that vector's length in
/// the opposite direction.
pub fn shrink_expand_mesh(mesh: &TriangleMesh) -> (TriangleMesh, TriangleMesh) {
    let neighbors = mesh.vertex_neighbors();
    let mut positions = mesh.vertices.clone();
    for _ in 0..SHRINK_ITERATIONS {
        positions = positions
            .iter()
            .zip(&neighbors)
            .map(|(p, nb)| {
                if nb.is_empty() {
                    return *p;
                }
                let mean = nb
                    .iter()
                    .fold(Vector3::zeros(), |s, &j| s + positions[j as usize].coords)
                    / nb.len() as f64;
                Point3::from((p.coords + mean) * 0.5)
            })
            .collect();
    }
    let motion: Vec<Vector3<f64>> = positions
        .iter()
        .zip(&mesh.vertices)
        .map(|(s, o)| s - o)
        .collect();
    let expanded_vertices = positions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let nb = &neighbors[i];
            let avg = nb
                .iter()
                .fold(motion[i], |acc, &j| acc + motion[j as usize])
                / (nb.len() + 1) as f64;
            s - avg * 2.0
        })
        .collect();
    let shrunk = TriangleMesh {
        vertices: positions,
        ..mesh.clone()
    };
    let expanded = TriangleMesh {
        vertices: expanded_vertices,
        ..mesh.clone()
    };
    (shrunk, expanded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{ellipsoid, planar_grid};

    #[test]
    fn plane_interior_is_a_fixed_point() {
        let mesh = planar_grid([0.0, 0.0], [12.0, 12.0], 12, 12);
        let (shrunk, expanded) = shrink_expand_mesh(&mesh);
        for (i, v) in mesh.vertices.iter().enumerate() {
            assert!(shrunk.vertices[i].z.abs() < 1e-12 && expanded.vertices[i].z.abs() < 1e-12);
            // Boundary motion reaches 3 rings during shrinking plus 1 ring when averaging.
            if v.x >= 5.0 && v.x <= 7.0 && v.y >= 5.0 && v.y <= 7.0 {
                assert!((shrunk.vertices[i] - v).norm() < 1e-9);
                assert!((expanded.vertices[i] - v).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn sphere_shrinks_then_expands() {
        let mesh = ellipsoid(Point3::origin(), Vector3::new(1.0, 1.0, 1.0), 24, 12);
        let (shrunk, expanded) = shrink_expand_mesh(&mesh);
        let mean_r = |m: &TriangleMesh| {
            m.vertices.iter().map(|v| v.coords.norm()).sum::<f64>() / m.vertices.len() as f64
        };
        assert!(mean_r(&shrunk) < 1.0);
        assert!(mean_r(&expanded) > mean_r(&shrunk));
        assert_eq!(shrunk.faces, mesh.faces);
        assert_eq!(expanded.vertices.len(), mesh.vertices.len());
    }
}
