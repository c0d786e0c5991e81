//! Closed, outward-wound test solids.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::mesh::{TriangleMesh, Vec3};

/// Axis-aligned cube of edge length `size` (8 vertices, 12 faces).
pub fn cube(center: Vec3, size: f64, label: &str) -> TriangleMesh {
    let h = Vec3::repeat(size / 2.0);
    box_mesh(center, h, label)
}

pub fn box_mesh(center: Vec3, half: Vec3, label: &str) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
        vertices.push(center + Vec3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z));
    }
    // quads listed counter-clockwise seen from outside
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(vertices, faces, label).expect("box is valid")
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(center: Vec3, radius: f64, level: u32, label: &str) -> TriangleMesh {
    ellipsoid(center, Vec3::repeat(radius), level, label)
}

/// Icosphere scaled per axis by `radii`.
pub fn ellipsoid(center: Vec3, radii: Vec3, level: u32, label: &str) -> TriangleMesh {
    let (unit, faces) = unit_icosphere(level);
    let vertices = unit
        .iter()
        .map(|p| center + p.component_mul(&radii))
        .collect();
    TriangleMesh::new(vertices, faces, label).expect("ellipsoid is valid")
}

/// Unit-sphere vertices and outward faces of an icosphere at the given subdivision level.
pub fn unit_icosphere(level: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Torus around the z axis with `nu` segments along the ring and `nv` around the tube.
pub fn torus(center: Vec3, major: f64, minor: f64, nu: usize, nv: usize, label: &str) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            vertices.push(center + Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces, label).expect("torus is valid")
}
