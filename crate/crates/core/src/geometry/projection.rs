use super::camera::ProjectionCamera;
use super::mesh::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Normalised-dot threshold below which a face counts as perpendicular to the detector.
pub const EPS_PERP: f64 = 1e-8;

/// Mesh mapped into detector space with metric depth retained.
#[derive(Debug, Clone)]
pub struct ProjectedMesh {
    /// `(pixel x, pixel y, distance to the detector plane along the vertex's ray in mm)`.
    pub screen_vertices: Vec<Vec3>,
    /// Per-face normals of the projected triangles, vertex winding preserved.
    pub face_normals: Vec<Vec3>,
    /// Reciprocal homogeneous depth per vertex.
    pub inv_w: Vec<f64>,
    /// Perpendicular height above the detector plane per vertex (mm); affine in world space.
    pub plane_height: Vec<f64>,
    pub world_vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl ProjectedMesh {
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.world_vertices.len()
    }
}

/// Projects a single world point; `Err` when it lies behind the source or beyond the detector.
pub fn project_point(p: &Vec3, cam: &ProjectionCamera, vertex: usize) -> Result<(Vec3, f64, f64)> {
    let height = cam.height_above_detector(p);
    let hs = cam.source_height();
    let q = cam.homogeneous(p);
    if height >= hs || q.z <= 0.0 {
        return Err(Error::OutsideFrustum {
            vertex,
            reason: "at or behind the source",
        });
    }
    if height < 0.0 {
        return Err(Error::OutsideFrustum {
            vertex,
            reason: "beyond the detector plane",
        });
    }
    let to_source = (p - cam.source()).norm();
    let along_ray = height * to_source / (hs - height);
    Ok((Vec3::new(q.x / q.z, q.y / q.z, along_ray), 1.0 / q.z, height))
}

pub fn project_mesh(mesh: &TriangleMesh, cam: &ProjectionCamera) -> Result<ProjectedMesh> {
    let n = mesh.num_vertices();
    let mut screen_vertices = Vec::with_capacity(n);
    let mut inv_w = Vec::with_capacity(n);
    let mut plane_height = Vec::with_capacity(n);
    for (i, v) in mesh.vertices().iter().enumerate() {
        let (s, iw, h) = project_point(v, cam, i)?;
        screen_vertices.push(s);
        inv_w.push(iw);
        plane_height.push(h);
    }
    let face_normals = mesh
        .faces()
        .iter()
        .map(|f| {
            let (a, b, c) = (screen_vertices[f[0]], screen_vertices[f[1]], screen_vertices[f[2]]);
            (b - a).cross(&(c - a))
        })
        .collect();
    Ok(ProjectedMesh {
        screen_vertices,
        face_normals,
        inv_w,
        plane_height,
        world_vertices: mesh.vertices().to_vec(),
        faces: mesh.faces().to_vec(),
    })
}

/// `+1` entering, `-1` exiting, `0` when the face is edge-on to the detector.
pub fn face_orientation_sign(face: usize, proj: &ProjectedMesh) -> i8 {
    normal_sign(&proj.face_normals[face])
}

pub fn normal_sign(normal: &Vec3) -> i8 {
    let len = normal.norm();
    if len == 0.0 {
        return 0;
    }
    let dot = normal.z / len;
    if dot.abs() < EPS_PERP {
        0
    } else if dot > 0.0 {
        1
    } else {
        -1
    }
}
