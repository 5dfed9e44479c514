//! File formats: ASCII PLY meshes, PFM float maps, binary PGM, camera JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point3};
use serde::{Deserialize, Serialize};

use super::camera::{Camera, CameraId, CameraIntrinsics, CameraPose};
use super::mesh::TriangleMesh;
use super::raster::DepthMap;
use crate::{Error, Result};

// ---------------------------------------------------------------- PLY

pub fn write_ply(mesh: &TriangleMesh, out: &mut impl Write) -> Result<()> {
    writeln!(out, "ply\nformat ascii 1.0")?;
    writeln!(out, "element vertex {}", mesh.vertices.len())?;
    writeln!(
        out,
        "property double x\nproperty double y\nproperty double z"
    )?;
    writeln!(out, "element face {}", mesh.faces.len())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    if mesh.materials.is_some() {
        writeln!(out, "property uchar material")?;
    }
    writeln!(out, "end_header")?;
    for v in &mesh.vertices {
        writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
    }
    for (i, f) in mesh.faces.iter().enumerate() {
        match &mesh.materials {
            Some(m) => writeln!(out, "3 {} {} {} {}", f[0], f[1], f[2], m[i])?,
            None => writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?,
        }
    }
    Ok(())
}

#[derive(Default)]
struct PlyElement {
    name: String,
    count: usize,
    /// Scalar property names in order; list properties are recorded as `None`.
    props: Vec<Option<String>>,
}

/// Reads the ASCII PLY subset written by [`write_ply`]: vertex x/y/z, face
/// vertex_indices (triangles only) and an optional scalar face `material`.
pub fn read_ply(input: impl Read) -> Result<TriangleMesh> {
    let err = |m: String| Error::parse("PLY", m);
    let mut lines = BufReader::new(input).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| err("unexpected end of file".into()))?
            .map_err(Error::from)
    };
    if next()?.trim() != "ply" {
        return Err(err("missing magic".into()));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let line = next()?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(err(format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| err(format!("bad count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, _] => elements
                .last_mut()
                .ok_or_else(|| err("property before element".into()))?
                .props
                .push(None),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| err("property before element".into()))?
                .props
                .push(Some(name.to_string())),
            ["end_header"] => break,
            _ => return Err(err(format!("unexpected header line {line:?}"))),
        }
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut materials: Option<Vec<u8>> = None;
    for el in &elements {
        let pos = |n: &str| el.props.iter().position(|p| p.as_deref() == Some(n));
        for _ in 0..el.count {
            let line = next()?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                vals.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| err(format!("bad value in {line:?}")))
            };
            match el.name.as_str() {
                "vertex" => {
                    let (x, y, z) = (pos("x"), pos("y"), pos("z"));
                    let (Some(x), Some(y), Some(z)) = (x, y, z) else {
                        return Err(err("vertex element lacks x/y/z".into()));
                    };
                    if el.props.iter().any(|p| p.is_none()) {
                        return Err(err("list properties on vertices are not supported".into()));
                    }
                    vertices.push(Point3::new(num(x)?, num(y)?, num(z)?));
                }
                "face" => {
                    // Walk properties in order; the list expands in place.
                    let mut col = 0;
                    let mut tri = None;
                    let mut material = None;
                    for p in &el.props {
                        match p {
                            None => {
                                let n = num(col)? as usize;
                                if n != 3 {
                                    return Err(err(format!(
                                        "only triangles are supported, got {n}-gon"
                                    )));
                                }
                                tri = Some([
                                    num(col + 1)? as u32,
                                    num(col + 2)? as u32,
                                    num(col + 3)? as u32,
                                ]);
                                col += 1 + n;
                            }
                            Some(name) => {
                                if name == "material" {
                                    material = Some(num(col)? as u8);
                                }
                                col += 1;
                            }
                        }
                    }
                    faces.push(tri.ok_or_else(|| err("face element lacks vertex_indices".into()))?);
                    if let Some(m) = material {
                        materials.get_or_insert_with(Vec::new).push(m);
                    }
                }
                _ => {}
            }
        }
    }
    TriangleMesh::new(vertices, faces, materials)
}

pub fn save_ply(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(mesh, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_ply(path: &Path) -> Result<TriangleMesh> {
    read_ply(File::open(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { message, .. } | Error::InvalidMesh(message) => Error::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    }
}

// ---------------------------------------------------------------- PFM

/// Single-channel little-endian PFM. Rows are stored bottom-up as the format requires;
/// `data` is row-major top-down.
pub fn write_pfm(width: u32, height: u32, data: &[f32], out: &mut impl Write) -> Result<()> {
    assert_eq!(data.len(), width as usize * height as usize);
    write!(out, "Pf\n{width} {height}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for row in (0..height as usize).rev() {
        for v in &data[row * width as usize..(row + 1) * width as usize] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a single-channel PFM of either endianness; returns `(width, height, top-down data)`.
/// Consumes exactly one map, so consecutive maps can be read from one stream.
pub fn read_pfm(r: &mut impl BufRead) -> Result<(u32, u32, Vec<f32>)> {
    let err = |m: &str| Error::parse("PFM", m);
    let mut header = Vec::new();
    for _ in 0..3 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(err("truncated header"));
        }
        header.push(line.trim().to_string());
    }
    if header[0] != "Pf" {
        return Err(err("only single-channel Pf maps are supported"));
    }
    let dims: Vec<u32> = header[1]
        .split_whitespace()
        .filter_map(|s| s.parse().ok())
        .collect();
    let [width, height] = dims[..] else {
        return Err(err("bad dimensions"));
    };
    let scale: f64 = header[2].parse().map_err(|_| err("bad scale"))?;
    let little = scale < 0.0;
    let n = width as usize * height as usize;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw).map_err(|_| err("truncated data"))?;
    let mut data = vec![0f32; n];
    for row in 0..height as usize {
        let src_row = height as usize - 1 - row;
        for x in 0..width as usize {
            let k = (src_row * width as usize + x) * 4;
            let b = [raw[k], raw[k + 1], raw[k + 2], raw[k + 3]];
            data[row * width as usize + x] = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok((width, height, data))
}

pub fn save_depth_pfm(depth: &DepthMap, path: &Path) -> Result<()> {
    let data: Vec<f32> = depth.depths.iter().map(|&d| d as f32).collect();
    let mut w = BufWriter::new(File::create(path)?);
    write_pfm(depth.width, depth.height, &data, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_depth_pfm(path: &Path, camera: CameraId, downscale: u32) -> Result<DepthMap> {
    let (width, height, data) =
        read_pfm(&mut BufReader::new(File::open(path)?)).map_err(|e| with_path(e, path))?;
    Ok(DepthMap {
        width,
        height,
        depths: data
            .into_iter()
            .map(|d| {
                if d.is_finite() && d > 0.0 {
                    d as f64
                } else {
                    f64::INFINITY
                }
            })
            .collect(),
        camera,
        downscale,
    })
}

// ---------------------------------------------------------------- PGM

pub fn write_pgm(width: u32, height: u32, data: &[u8], out: &mut impl Write) -> Result<()> {
    assert_eq!(data.len(), width as usize * height as usize);
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(data)?;
    Ok(())
}

pub fn read_pgm(input: impl Read) -> Result<(u32, u32, Vec<u8>)> {
    let err = |m: &str| Error::parse("PGM", m);
    let mut bytes = Vec::new();
    BufReader::new(input).read_to_end(&mut bytes)?;
    // Four whitespace-separated header tokens, comments allowed.
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(err("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    i += 1;
    if tokens[0] != "P5" || tokens[3] != "255" {
        return Err(err("only 8-bit binary P5 images are supported"));
    }
    let width: u32 = tokens[1].parse().map_err(|_| err("bad width"))?;
    let height: u32 = tokens[2].parse().map_err(|_| err("bad height"))?;
    let n = width as usize * height as usize;
    let data = bytes
        .get(i..i + n)
        .ok_or_else(|| err("truncated data"))?
        .to_vec();
    Ok((width, height, data))
}

// ---------------------------------------------------------------- cameras

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: u32,
    pub focal: f64,
    pub pp: [f64; 2],
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation, row-major.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "C")]
    pub center: [f64; 3],
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        let r = c.pose.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        let k = &c.intrinsics;
        let center = c.center();
        CameraRecord {
            id: c.id.0,
            focal: k.focal(),
            pp: k.principal_point(),
            width: k.width(),
            height: k.height(),
            rotation,
            center: [center.x, center.y, center.z],
        }
    }
}

impl TryFrom<&CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: &CameraRecord) -> Result<Camera> {
        let k = CameraIntrinsics::new(r.focal, r.pp, r.width, r.height)?;
        let rot = Matrix3::from_row_slice(&r.rotation);
        let pose = CameraPose::new(rot, Point3::from(r.center))?;
        Ok(Camera::new(CameraId(r.id), k, pose))
    }
}

pub fn cameras_to_json(cameras: &[Camera]) -> Result<String> {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn cameras_from_json(text: &str) -> Result<Vec<Camera>> {
    let records: Vec<CameraRecord> = serde_json::from_str(text)?;
    let cams = records
        .iter()
        .map(Camera::try_from)
        .collect::<Result<Vec<_>>>()?;
    let mut ids: Vec<u32> = cams.iter().map(|c| c.id.0).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidCamera("duplicate camera id".into()));
    }
    Ok(cams)
}

pub fn save_cameras(cameras: &[Camera], path: &Path) -> Result<()> {
    std::fs::write(path, cameras_to_json(cameras)?)?;
    Ok(())
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    cameras_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::planar_grid;
    use nalgebra::Vector3;

    #[test]
    fn ply_round_trip_with_materials() {
        let mut mesh = planar_grid([0.0, 0.0], [2.0, 1.0], 2, 1);
        mesh.materials = Some(vec![0, 1, 1, 0]);
        let mut buf = Vec::new();
        write_ply(&mesh, &mut buf).unwrap();
        assert_eq!(read_ply(&buf[..]).unwrap(), mesh);
    }

    #[test]
    fn ply_without_materials() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\n\
                    property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let mesh = read_ply(text.as_bytes()).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
        assert!(mesh.materials.is_none());
    }

    #[test]
    fn ply_rejects_quads() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(read_ply(text.as_bytes()).is_err());
    }

    #[test]
    fn pfm_round_trip_keeps_invalid_marker() {
        let data = vec![1.0, 2.0, f32::INFINITY, 4.0, 5.0, 6.0];
        let mut buf = Vec::new();
        write_pfm(3, 2, &data, &mut buf).unwrap();
        assert!(buf.starts_with(b"Pf\n3 2\n-1.0\n"));
        // First stored row is the bottom image row.
        assert_eq!(f32::from_le_bytes(buf[12..16].try_into().unwrap()), 4.0);
        assert_eq!(read_pfm(&mut &buf[..]).unwrap(), (3, 2, data));
    }

    #[test]
    fn pgm_round_trip() {
        let data = vec![0, 1, 2, 255, 7, 9];
        let mut buf = Vec::new();
        write_pgm(2, 3, &data, &mut buf).unwrap();
        assert_eq!(read_pgm(&buf[..]).unwrap(), (2, 3, data));
    }

    #[test]
    fn cameras_json_round_trip() {
        let k = CameraIntrinsics::new(100.0, [50.0, 40.0], 100, 80).unwrap();
        let pose = CameraPose::look_at(Point3::new(1.0, 2.0, 3.0), Point3::origin(), Vector3::z())
            .unwrap();
        let cams = vec![Camera::new(CameraId(4), k, pose)];
        let text = cameras_to_json(&cams).unwrap();
        assert!(text.contains("\"R\"") && text.contains("\"pp\""));
        let back = cameras_from_json(&text).unwrap();
        assert_eq!(back[0].id, CameraId(4));
        assert!((back[0].pose.rotation() - cams[0].pose.rotation()).norm() < 1e-12);
        assert!((back[0].center() - cams[0].center()).norm() < 1e-12);
    }

    #[test]
    fn duplicate_camera_ids_are_rejected() {
        let k = CameraIntrinsics::new(100.0, [50.0, 40.0], 100, 80).unwrap();
        let pose = CameraPose::new(Matrix3::identity(), Point3::origin()).unwrap();
        let c = Camera::new(CameraId(1), k, pose);
        assert!(cameras_from_json(&cameras_to_json(&[c, c]).unwrap()).is_err());
    }
}
