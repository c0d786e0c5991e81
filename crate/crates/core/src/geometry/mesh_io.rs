//! OBJ (`v`/`f` records) and binary STL readers, plus an OBJ writer.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::mesh::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>, label: &str) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("stl") => parse_stl(&bytes, label),
        Some("obj") => parse_obj(&String::from_utf8_lossy(&bytes), label),
        _ => Err(Error::parse(
            path.display().to_string(),
            "unsupported mesh extension (expected .obj or .stl)",
        )),
    }
}

pub fn parse_obj(text: &str, label: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let err = |msg: String| Error::parse("OBJ", format!("line {}: {msg}", lineno + 1));
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| err("vertex needs 3 coordinates".into()))?;
                    *c = tok.parse().map_err(|_| err(format!("bad coordinate '{tok}'")))?;
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(3);
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| err(format!("bad face index '{tok}'")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(err("face index 0 is invalid".into()));
                    };
                    if resolved < 0 {
                        return Err(err(format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() != 3 {
                    return Err(err(format!("only triangles are supported, got {} indices", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces, label)
}

/// Binary STL with exact bitwise vertex welding.
pub fn parse_stl(bytes: &[u8], label: &str) -> Result<TriangleMesh> {
    if bytes.len() < 84 {
        return Err(Error::parse("STL", "file shorter than the 84-byte header"));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + count * 50;
    if bytes.len() < expected {
        return Err(Error::parse(
            "STL",
            format!("header declares {count} triangles but file has {} bytes", bytes.len()),
        ));
    }
    let mut lookup: HashMap<[u32; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(count);
    for t in 0..count {
        let rec = &bytes[84 + t * 50..84 + (t + 1) * 50];
        let mut face = [0usize; 3];
        for (k, slot) in face.iter_mut().enumerate() {
            let off = 12 + k * 12;
            let mut key = [0u32; 3];
            for (c, kc) in key.iter_mut().enumerate() {
                *kc = u32::from_le_bytes(rec[off + c * 4..off + c * 4 + 4].try_into().unwrap());
            }
            *slot = *lookup.entry(key).or_insert_with(|| {
                vertices.push(Vec3::new(
                    f32::from_bits(key[0]) as f64,
                    f32::from_bits(key[1]) as f64,
                    f32::from_bits(key[2]) as f64,
                ));
                vertices.len() - 1
            });
        }
        faces.push(face);
    }
    TriangleMesh::new(vertices, faces, label)
}

pub fn write_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.num_faces() as u32).to_le_bytes());
    for f in 0..mesh.num_faces() {
        let [a, b, c] = mesh.face_vertices(f);
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        for v in [n, a, b, c] {
            for k in 0..3 {
                out.extend_from_slice(&(v[k] as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub fn to_obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        // `{:?}` on f64 is shortest round-trip
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::cube;

    #[test]
    fn minimal_obj() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "x").unwrap();
        assert_eq!(m.num_vertices(), 3);
        assert_eq!(m.num_faces(), 1);
        assert_eq!(m.label(), "x");
    }

    #[test]
    fn obj_slash_and_negative_indices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 -2//2 -1\n", "x").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn obj_errors() {
        assert!(matches!(
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", "x"),
            Err(Error::InvalidMesh(_))
        ));
        assert!(matches!(parse_obj("", "x"), Err(Error::InvalidMesh(_))));
        assert!(matches!(parse_obj("v 0 zero 0\n", "x"), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n", "x"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unit_cube_obj_is_watertight() {
        let text = to_obj_string(&cube(Vec3::zeros(), 1.0, "c"));
        let m = parse_obj(&text, "c").unwrap();
        assert_eq!((m.num_vertices(), m.num_faces()), (8, 12));
        assert!(m.watertight_report().watertight);
    }

    #[test]
    fn stl_round_trip_welds_vertices() {
        let c = cube(Vec3::new(1.0, 2.0, 3.0), 2.0, "c");
        let m = parse_stl(&write_stl(&c), "c").unwrap();
        assert_eq!(m.num_vertices(), 8);
        assert_eq!(m.num_faces(), 12);
        assert!(m.watertight_report().watertight);
    }

    #[test]
    fn stl_truncated() {
        let mut bytes = write_stl(&cube(Vec3::zeros(), 1.0, "c"));
        bytes.truncate(200);
        assert!(matches!(parse_stl(&bytes, "c"), Err(Error::Parse { .. })));
    }
}
