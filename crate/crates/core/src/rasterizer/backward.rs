use rayon::prelude::*;

use super::buffer::PixelFragmentBuffer;
use super::resolve::DistanceMap;
use crate::error::{Error, Result};
use crate::geometry::{ProjectedMesh, ProjectionCamera, Vec3};
use crate::image::Image;

/// Gradient of a scalar loss with respect to world vertex positions.
#[derive(Debug, Clone)]
pub struct DistanceMapAdjoint {
    pub vertex_grads: Vec<Vec3>,
    pub upstream: Image,
}

/// Pulls per-pixel `dC/dL` back to world vertex positions.
///
/// Each fragment contributes `dC/dz = dC/dL * sign`. The crossing depth along the pixel ray
/// `r` through a face with plane normal `m` is `z = m.(D - X0) / (m.r)`, whose derivative with
/// respect to face vertex `k` is `-b_k m / (m.r)` for perspective-correct barycentrics `b_k`.
/// Repaired and invalid pixels contribute nothing.
pub fn backward_distance(
    buf: &PixelFragmentBuffer,
    map: &DistanceMap,
    upstream: &Image,
    proj: &ProjectedMesh,
    cam: &ProjectionCamera,
) -> Result<DistanceMapAdjoint> {
    let dims = buf.dims();
    if map.dims() != dims || cam.dims() != dims {
        return Err(Error::MissingForward("fragment buffer does not match the distance map"));
    }
    if upstream.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: upstream.dims(),
        });
    }
    let (w, h) = dims;
    let nf = proj.num_faces();
    let face_normals: Vec<Vec3> = proj
        .faces
        .iter()
        .map(|f| {
            let (a, b, c) = (
                proj.world_vertices[f[0]],
                proj.world_vertices[f[1]],
                proj.world_vertices[f[2]],
            );
            (b - a).cross(&(c - a))
        })
        .collect();

    let rows: Vec<Result<Vec<(usize, Vec3)>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::new();
            for x in 0..w {
                let g = upstream.get(x, y);
                if g == 0.0 || !map.differentiable(x, y) {
                    continue;
                }
                let ray = cam.ray_direction(x, y);
                for frag in buf.fragments(x, y) {
                    let fi = frag.face as usize;
                    if fi >= nf {
                        return Err(Error::MissingForward("fragment references an unknown face"));
                    }
                    if frag.sign == 0 {
                        continue;
                    }
                    let m = face_normals[fi];
                    let denom = m.dot(&ray);
                    if denom == 0.0 {
                        continue;
                    }
                    let dz = g * f64::from(frag.sign);
                    let dir = m * (-dz / denom);
                    for (k, &v) in proj.faces[fi].iter().enumerate() {
                        out.push((v, dir * frag.bary[k]));
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut vertex_grads = vec![Vec3::zeros(); proj.num_vertices()];
    for row in rows {
        for (v, g) in row? {
            vertex_grads[v] += g;
        }
    }
    Ok(DistanceMapAdjoint {
        vertex_grads,
        upstream: upstream.clone(),
    })
}
