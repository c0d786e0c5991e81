use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Indexed triangle mesh in world millimetres, tagged with a material label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    label: String,
}

/// Edge-multiplicity summary of a mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatertightReport {
    pub watertight: bool,
    /// Undirected edges referenced by exactly one face, as `(min, max)` vertex pairs.
    pub boundary_edges: Vec<(usize, usize)>,
    /// Undirected edges referenced by three or more faces.
    pub nonmanifold_edges: Vec<(usize, usize)>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, label: impl Into<String>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices or no faces".into()));
        }
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {i} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {i} is degenerate: {f:?}")));
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(Self {
            vertices,
            faces,
            label: label.into(),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same topology with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            label: self.label.clone(),
        })
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
            label: self.label.clone(),
        }
    }

    /// Reverses the winding of every face.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
            label: self.label.clone(),
        }
    }

    /// Concatenates meshes into one vertex/face set, keeping the first label.
    pub fn merged(meshes: &[TriangleMesh]) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for m in meshes {
            let base = vertices.len();
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        let label = meshes.first().map(|m| m.label.clone()).unwrap_or_default();
        Self::new(vertices, faces, label)
    }

    pub fn face_vertices(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_vertices(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume (positive for outward-wound closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn watertight_report(&self) -> WatertightReport {
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut boundary_edges: Vec<_> = counts
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&e, _)| e)
            .collect();
        let mut nonmanifold_edges: Vec<_> = counts
            .iter()
            .filter(|(_, &c)| c > 2)
            .map(|(&e, _)| e)
            .collect();
        boundary_edges.sort_unstable();
        nonmanifold_edges.sort_unstable();
        WatertightReport {
            watertight: boundary_edges.is_empty() && nonmanifold_edges.is_empty(),
            boundary_edges,
            nonmanifold_edges,
        }
    }
}
