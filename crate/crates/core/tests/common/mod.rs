//! Reference implementations shared by the integration tests. Nothing here calls into the
//! code under test except for mesh and camera construction.

#![allow(dead_code)]

use drr_core::geometry::primitives::{cube, icosphere, torus};
use drr_core::geometry::{DetectorGeometry, ProjectionCamera, TriangleMesh, Vec3};
use nalgebra::Rotation3;

/// Ray `orig + t * dir` against triangle `abc`, two-sided. Returns `(t, u, v)`.
pub fn moller_trumbore(orig: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(&q) * inv, u, v))
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    /// +1 leaving the solid (outward normal along the ray), -1 entering.
    pub crossing: i32,
    /// Smallest barycentric coordinate; near zero means the ray grazes an edge.
    pub edge_margin: f64,
}

/// All crossings of the segment `from -> to` (parameter in `[0, 1]`), sorted by distance.
pub fn sorted_hits(mesh: &TriangleMesh, from: &Vec3, to: &Vec3) -> Vec<Hit> {
    let dir = to - from;
    let mut hits: Vec<Hit> = Vec::new();
    for f in mesh.faces() {
        let (a, b, c) = (mesh.vertices()[f[0]], mesh.vertices()[f[1]], mesh.vertices()[f[2]]);
        if let Some((t, u, v)) = moller_trumbore(from, &dir, &a, &b, &c) {
            if (0.0..=1.0).contains(&t) {
                let n = (b - a).cross(&(c - a));
                hits.push(Hit {
                    t,
                    crossing: if n.dot(&dir) > 0.0 { 1 } else { -1 },
                    edge_margin: u.min(v).min(1.0 - u - v),
                });
            }
        }
    }
    hits.sort_by(|a, b| a.t.total_cmp(&b.t));
    hits
}

/// Winding-weighted length of the segment inside the mesh: the sum over consecutive sorted
/// hits of (segment length) x (number of enclosing shells).
pub fn oracle_path_length(mesh: &TriangleMesh, from: &Vec3, to: &Vec3) -> (f64, f64) {
    let hits = sorted_hits(mesh, from, to);
    let len = (to - from).norm();
    let mut winding = 0i32;
    let mut last_t = 0.0;
    let mut total = 0.0;
    let mut margin = f64::INFINITY;
    for h in &hits {
        total += winding as f64 * (h.t - last_t) * len;
        winding -= h.crossing;
        last_t = h.t;
        margin = margin.min(h.edge_margin);
    }
    (total, margin)
}

/// Pixel centre computed straight from the detector description.
pub fn pixel_center(det: &DetectorGeometry, ix: usize, iy: usize) -> Vec3 {
    Vec3::from(det.origin)
        + (Vec3::from(det.axis_u) * (ix as f64 + 0.5) + Vec3::from(det.axis_v) * (iy as f64 + 0.5)) * det.pitch_mm
}

/// Camera looking at the origin from `distance` along `dir`, detector `behind` mm past the
/// origin, axes chosen so the source is on the positive side of `u x v`.
pub fn look_at_camera(dir: Vec3, distance: f64, behind: f64, w: usize, h: usize, pitch: f64, roll: f64) -> ProjectionCamera {
    let d = dir.normalize();
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u0 = helper.cross(&d).normalize();
    let v0 = d.cross(&u0);
    let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(d), roll);
    let (u, v) = (r * u0, r * v0);
    assert!(u.cross(&v).dot(&d) > 0.0);
    let det = DetectorGeometry::centered(w, h, pitch, -d * behind, u, v);
    ProjectionCamera::from_geometry(d * distance, det).expect("valid camera")
}

/// The three views used by the path-length and determinism checks. Offsets and rolls are
/// irrational-looking on purpose so that no pixel ray runs exactly through a mesh edge.
pub fn test_cameras() -> Vec<(&'static str, ProjectionCamera)> {
    vec![
        ("axial", look_at_camera(Vec3::new(0.013, -0.021, 1.0), 420.0, 300.0, 96, 96, 2.0, 0.0137)),
        ("oblique", look_at_camera(Vec3::new(0.61, 0.23, 0.76), 380.0, 260.0, 88, 72, 2.3, 0.417)),
        ("lateral", look_at_camera(Vec3::new(-0.97, 0.31, -0.12), 450.0, 350.0, 80, 100, 2.1, -1.093)),
    ]
}

/// The watertight meshes of the path-length equivalence check.
pub fn test_meshes() -> Vec<(&'static str, TriangleMesh)> {
    let off = Vec3::new(1.237, -0.713, 0.419);
    let outer = cube(off, 60.0, "nested");
    let inner = cube(off + Vec3::new(3.1, -2.3, 1.7), 24.0, "nested");
    vec![
        ("cube", cube(off, 50.0, "cube")),
        ("icosphere-l2", icosphere(off, 40.0, 2, "ico2")),
        ("icosphere-l4", icosphere(off, 45.0, 4, "ico4")),
        ("torus", torus(off, 35.0, 12.0, 48, 24, "torus")),
        ("nested-cubes", TriangleMesh::merged(&[outer, inner]).expect("merge")),
    ]
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] += h;
    let fp = f(&p);
    p[i] = x[i] - h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}

pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}
