use rayon::prelude::*;

use super::buffer::{Fragment, PixelFragmentBuffer};
use crate::error::{Error, Result};
use crate::geometry::projection::normal_sign;
use crate::geometry::{ProjectedMesh, ProjectionCamera};

struct FaceSetup {
    face: u32,
    verts: [usize; 3],
    xy: [(f64, f64); 3],
    /// +1 for counter-clockwise screen winding, -1 for clockwise.
    orient: f64,
    sign: i8,
    x0: usize,
    x1: usize,
}

/// Edge function `cross(b - a, p - a)` evaluated with endpoints in ascending vertex-id order,
/// so the two faces sharing an edge see bit-identical magnitudes.
#[inline]
fn edge(ia: usize, a: (f64, f64), ib: usize, b: (f64, f64), p: (f64, f64)) -> f64 {
    let e = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    if ia < ib {
        e(a, b)
    } else {
        -e(b, a)
    }
}

/// Tie rule for a sample exactly on an edge directed so its interior lies on the left:
/// include when the sample nudged by `(eps, eps^2)` would fall inside.
#[inline]
fn owns_edge(dx: f64, dy: f64) -> bool {
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Per-pixel fragment lists for every face whose projected triangle covers the pixel centre.
pub fn rasterize_lbuffer(
    proj: &ProjectedMesh,
    cam: &ProjectionCamera,
    capacity: usize,
) -> Result<PixelFragmentBuffer> {
    if capacity < 2 || !capacity.is_multiple_of(2) {
        return Err(Error::InvalidCapacity(capacity));
    }
    let (width, height) = cam.dims();
    let mut rows: Vec<Vec<FaceSetup>> = (0..height).map(|_| Vec::new()).collect();

    for (fi, f) in proj.faces.iter().enumerate() {
        let xy = f.map(|v| (proj.screen_vertices[v].x, proj.screen_vertices[v].y));
        let area = edge(f[0], xy[0], f[1], xy[1], xy[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &xy {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        // pixel i has its centre at i + 0.5
        let lo = |v: f64| (v - 0.5).ceil().max(0.0);
        let hi = |v: f64, n: usize| (v - 0.5).floor().min(n as f64 - 1.0);
        let (x0, x1) = (lo(xmin), hi(xmax, width));
        let (y0, y1) = (lo(ymin), hi(ymax, height));
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for row in rows.iter_mut().take(y1 as usize + 1).skip(y0 as usize) {
            row.push(FaceSetup {
                face: fi as u32,
                verts: *f,
                xy,
                orient: area.signum(),
                sign: normal_sign(&proj.face_normals[fi]),
                x0: x0 as usize,
                x1: x1 as usize,
            });
        }
    }

    let mut buffer = PixelFragmentBuffer::new(width, height, capacity);
    buffer.rows_mut().for_each(|mut row| {
        let y = row.y;
        for setup in &rows[y] {
            for x in setup.x0..=setup.x1 {
                if let Some(bary) = coverage(setup, x, y) {
                    let [b0, b1, b2] = perspective_bary(proj, &setup.verts, bary);
                    let h = b0 * proj.plane_height[setup.verts[0]]
                        + b1 * proj.plane_height[setup.verts[1]]
                        + b2 * proj.plane_height[setup.verts[2]];
                    row.push(
                        x,
                        Fragment {
                            face: setup.face,
                            z: h * cam.pixel_secant(x, y),
                            sign: setup.sign,
                            bary: [b0, b1, b2],
                        },
                    );
                }
            }
        }
    });
    Ok(buffer)
}

/// Screen-space barycentrics of the pixel centre when the face covers it.
fn coverage(s: &FaceSetup, x: usize, y: usize) -> Option<[f64; 3]> {
    let p = (x as f64 + 0.5, y as f64 + 0.5);
    let [i0, i1, i2] = s.verts;
    let [a, b, c] = s.xy;
    // lambda_k is the edge opposite vertex k
    let lam = [
        s.orient * edge(i1, b, i2, c, p),
        s.orient * edge(i2, c, i0, a, p),
        s.orient * edge(i0, a, i1, b, p),
    ];
    let dirs = [(b, c), (c, a), (a, b)];
    for k in 0..3 {
        if lam[k] < 0.0 {
            return None;
        }
        if lam[k] == 0.0 {
            let (from, to) = if s.orient > 0.0 { dirs[k] } else { (dirs[k].1, dirs[k].0) };
            if !owns_edge(to.0 - from.0, to.1 - from.1) {
                return None;
            }
        }
    }
    let total = lam[0] + lam[1] + lam[2];
    if total <= 0.0 {
        return None;
    }
    Some([lam[0] / total, lam[1] / total, lam[2] / total])
}

#[inline]
fn perspective_bary(proj: &ProjectedMesh, verts: &[usize; 3], screen: [f64; 3]) -> [f64; 3] {
    let w = [
        screen[0] * proj.inv_w[verts[0]],
        screen[1] * proj.inv_w[verts[1]],
        screen[2] * proj.inv_w[verts[2]],
    ];
    let s = w[0] + w[1] + w[2];
    [w[0] / s, w[1] / s, w[2] / s]
}
