use std::collections::{BTreeSet, HashMap};

use nalgebra::{Point3, Vector3};

use crate::{Error, Result};

pub type FaceId = u32;
pub type MaterialId = u8;

/// Faces with area at or below this are rejected.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with counter-clockwise (outward) winding and optional
/// per-face material ids. Watertightness is not required.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub materials: Option<Vec<MaterialId>>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        materials: Option<Vec<MaterialId>>,
    ) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            materials,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(m) = &self.materials {
            if m.len() != self.faces.len() {
                return Err(Error::InvalidMesh(format!(
                    "{} materials for {} faces",
                    m.len(),
                    self.faces.len()
                )));
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {i} references a missing vertex"
                )));
            }
            let area = self.face_area(i as FaceId);
            if !(area > MIN_FACE_AREA) {
                return Err(Error::InvalidMesh(format!(
                    "face {i} is degenerate (area {area:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_vertices(&self, face: FaceId) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face as usize];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn centroid(&self, face: FaceId) -> Point3<f64> {
        let [a, b, c] = self.face_vertices(face);
        Point3::from((a.coords + b.coords + c.coords) / 3.0)
    }

    /// Unnormalized normal; its length is twice the face area.
    pub fn area_vector(&self, face: FaceId) -> Vector3<f64> {
        let [a, b, c] = self.face_vertices(face);
        (b - a).cross(&(c - a))
    }

    pub fn normal(&self, face: FaceId) -> Vector3<f64> {
        self.area_vector(face).normalize()
    }

    pub fn face_area(&self, face: FaceId) -> f64 {
        0.5 * self.area_vector(face).norm()
    }

    pub fn edge_lengths(&self, face: FaceId) -> [f64; 3] {
        let [a, b, c] = self.face_vertices(face);
        [(b - a).norm(), (c - b).norm(), (a - c).norm()]
    }

    pub fn material(&self, face: FaceId) -> Option<MaterialId> {
        self.materials.as_ref().map(|m| m[face as usize])
    }

    pub fn total_area(&self, faces: impl IntoIterator<Item = FaceId>) -> f64 {
        faces.into_iter().map(|f| self.face_area(f)).sum()
    }

    /// Whether the face's front side is toward `viewpoint`.
    pub fn is_front_facing(&self, face: FaceId, viewpoint: &Point3<f64>) -> bool {
        self.area_vector(face)
            .dot(&(viewpoint - self.centroid(face)))
            > 0.0
    }

    /// Sorted edge-neighbors of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut sets = vec![BTreeSet::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                sets[a as usize].insert(b);
                sets[b as usize].insert(a);
            }
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut normals = vec![Vector3::zeros(); self.vertices.len()];
        for (i, f) in self.faces.iter().enumerate() {
            let n = self.area_vector(i as FaceId);
            for &v in f {
                normals[v as usize] += n;
            }
        }
        normals
            .into_iter()
            .map(|n| if n.norm() > 0.0 { n.normalize() } else { n })
            .collect()
    }

    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }

    /// Appends `other`, offsetting its indices. Materials are kept only when both have them,
    /// otherwise missing ones default to 0.
    pub fn append(&mut self, other: &TriangleMesh) {
        let offset = self.vertices.len() as u32;
        let had = self.faces.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]),
        );
        if self.materials.is_some() || other.materials.is_some() {
            let mut m = self.materials.take().unwrap_or_else(|| vec![0; had]);
            match &other.materials {
                Some(om) => m.extend_from_slice(om),
                None => m.extend(std::iter::repeat_n(0, other.faces.len())),
            }
            self.materials = Some(m);
        }
    }

    /// Sub-mesh made of the given faces, with compacted vertices.
    pub fn extract(&self, faces: &[FaceId]) -> TriangleMesh {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut out_faces = Vec::with_capacity(faces.len());
        for &f in faces {
            let tri = self.faces[f as usize].map(|v| {
                *remap.entry(v).or_insert_with(|| {
                    vertices.push(self.vertices[v as usize]);
                    (vertices.len() - 1) as u32
                })
            });
            out_faces.push(tri);
        }
        let materials = self
            .materials
            .as_ref()
            .map(|m| faces.iter().map(|&f| m[f as usize]).collect());
        TriangleMesh {
            vertices,
            faces: out_faces,
            materials,
        }
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Ray/triangle intersection (Moller-Trumbore). Returns the ray parameter `t > t_min`.
pub fn ray_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
    t_min: f64,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > t_min).then_some(t)
}

/// Regular `nx` x `ny` grid of quads split into triangles in the plane `z = 0`.
pub fn planar_grid(origin: [f64; 2], size: [f64; 2], nx: usize, ny: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point3::new(
                origin[0] + size[0] * i as f64 / nx as f64,
                origin[1] + size[1] * j as f64 / ny as f64,
                0.0,
            ));
        }
    }
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh {
        vertices,
        faces,
        materials: None,
    }
}

/// Latitude/longitude ellipsoid with outward winding.
pub fn ellipsoid(
    center: Point3<f64>,
    radii: Vector3<f64>,
    slices: usize,
    stacks: usize,
) -> TriangleMesh {
    let mut vertices = vec![center + Vector3::new(0.0, 0.0, radii.z)];
    for s in 1..stacks {
        let theta = std::f64::consts::PI * s as f64 / stacks as f64;
        for k in 0..slices {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / slices as f64;
            vertices.push(
                center
                    + Vector3::new(
                        radii.x * theta.sin() * phi.cos(),
                        radii.y * theta.sin() * phi.sin(),
                        radii.z * theta.cos(),
                    ),
            );
        }
    }
    vertices.push(center - Vector3::new(0.0, 0.0, radii.z));
    let bottom = (vertices.len() - 1) as u32;
    let ring = |s: usize, k: usize| (1 + (s - 1) * slices + k % slices) as u32;
    let mut faces = Vec::new();
    for k in 0..slices {
        faces.push([0, ring(1, k), ring(1, k + 1)]);
    }
    for s in 1..stacks - 1 {
        for k in 0..slices {
            faces.push([ring(s, k), ring(s + 1, k), ring(s + 1, k + 1)]);
            faces.push([ring(s, k), ring(s + 1, k + 1), ring(s, k + 1)]);
        }
    }
    for k in 0..slices {
        faces.push([bottom, ring(stacks - 1, k + 1), ring(stacks - 1, k)]);
    }
    TriangleMesh {
        vertices,
        faces,
        materials: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_faces() {
        let v = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]], None).is_ok());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]], None).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]], None).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 2]], Some(vec![])).is_err());
    }

    #[test]
    fn ellipsoid_is_outward() {
        let m = ellipsoid(
            Point3::new(1.0, 2.0, 3.0),
            Vector3::new(1.0, 2.0, 0.5),
            16,
            8,
        );
        m.validate().unwrap();
        for f in 0..m.face_count() as FaceId {
            let out = m.centroid(f) - Point3::new(1.0, 2.0, 3.0);
            assert!(m.area_vector(f).dot(&out) > 0.0, "face {f} points inward");
        }
    }

    #[test]
    fn grid_is_upward() {
        let m = planar_grid([0.0, 0.0], [2.0, 1.0], 4, 2);
        assert_eq!(m.face_count(), 16);
        assert!((m.total_area(0..16) - 2.0).abs() < 1e-12);
        assert!(m.normal(0).z > 0.99);
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        );
        let q = closest_point_on_triangle(&Point3::new(0.2, 0.2, 3.0), &a, &b, &c);
        assert!((q - Point3::new(0.2, 0.2, 0.0)).norm() < 1e-12);
        let q = closest_point_on_triangle(&Point3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!(q, a);
        let q = closest_point_on_triangle(&Point3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Point3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ray_hits_and_misses() {
        let (a, b, c) = (
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        );
        let o = Point3::new(0.25, 0.25, 2.0);
        assert_eq!(ray_triangle(&o, &-Vector3::z(), &a, &b, &c, 0.0), Some(2.0));
        assert_eq!(ray_triangle(&o, &Vector3::z(), &a, &b, &c, 0.0), None);
        assert_eq!(
            ray_triangle(&Point3::new(2.0, 2.0, 2.0), &-Vector3::z(), &a, &b, &c, 0.0),
            None
        );
    }
}
