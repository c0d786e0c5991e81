//! Signed path-length rasterization (l-buffer) and its adjoint.

mod backward;
mod buffer;
mod raster;
mod resolve;

pub use backward::{backward_distance, DistanceMapAdjoint};
pub use buffer::{Fragment, PixelFragmentBuffer};
pub use raster::rasterize_lbuffer;
pub use resolve::{repair_pixels, resolve_distance, resolve_pixel, DistanceMap, NEGATIVE_NOISE_MM};

use crate::error::Result;
use crate::geometry::{project_mesh, ProjectedMesh, ProjectionCamera, TriangleMesh};
use crate::image::Image;

pub const DEFAULT_CAPACITY: usize = 16;

/// Forward artifacts of one mesh, retained for the backward pass.
#[derive(Debug, Clone)]
pub struct MeshPass {
    pub projected: ProjectedMesh,
    pub buffer: PixelFragmentBuffer,
    pub map: DistanceMap,
}

impl MeshPass {
    pub fn forward(mesh: &TriangleMesh, cam: &ProjectionCamera, capacity: usize) -> Result<Self> {
        let projected = project_mesh(mesh, cam)?;
        let buffer = rasterize_lbuffer(&projected, cam, capacity)?;
        let map = resolve_distance(&buffer, mesh.label());
        Ok(Self {
            projected,
            buffer,
            map,
        })
    }

    pub fn backward(&self, upstream: &Image, cam: &ProjectionCamera) -> Result<DistanceMapAdjoint> {
        backward_distance(&self.buffer, &self.map, upstream, &self.projected, cam)
    }
}

/// Forward pass returning only the distance map.
pub fn distance_map(mesh: &TriangleMesh, cam: &ProjectionCamera, capacity: usize) -> Result<DistanceMap> {
    Ok(MeshPass::forward(mesh, cam, capacity)?.map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::geometry::primitives::cube;
    use crate::geometry::{DetectorGeometry, Vec3};

    fn cam(n: usize) -> ProjectionCamera {
        let det = DetectorGeometry::centered(n, n, 1.0, Vec3::zeros(), Vec3::x(), Vec3::y());
        ProjectionCamera::from_geometry(Vec3::new(0.0, 0.0, 1000.0), det).unwrap()
    }

    #[test]
    fn capacity_must_be_even_and_at_least_two() {
        let c = cam(8);
        let p = project_mesh(&cube(Vec3::new(0.0, 0.0, 500.0), 2.0, "c"), &c).unwrap();
        for k in [0, 1, 3, 7] {
            assert!(matches!(rasterize_lbuffer(&p, &c, k), Err(Error::InvalidCapacity(_))));
        }
        assert!(rasterize_lbuffer(&p, &c, 2).is_ok());
    }

    #[test]
    fn flat_triangle_at_constant_depth() {
        // large triangle parallel to the detector, 100 mm above it
        let c = cam(16);
        let z = 100.0;
        let tri = TriangleMesh::new(
            vec![Vec3::new(-50.0, -50.0, z), Vec3::new(50.0, -50.0, z), Vec3::new(0.0, 60.0, z)],
            vec![[0, 1, 2]],
            "t",
        )
        .unwrap();
        let p = project_mesh(&tri, &c).unwrap();
        let buf = rasterize_lbuffer(&p, &c, 2).unwrap();
        let (cx, cy) = (8, 8);
        let frags = buf.fragments(cx, cy);
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].sign, 1);
        // along-ray distance scales the perpendicular 100 mm by the pixel secant
        let expected = z * c.pixel_secant(cx, cy);
        assert!((frags[0].z - expected).abs() < 1e-9);
        let flipped = project_mesh(&tri.flipped(), &c).unwrap();
        let buf = rasterize_lbuffer(&flipped, &c, 2).unwrap();
        assert_eq!(buf.fragments(cx, cy)[0].sign, -1);
    }

    #[test]
    fn cube_interior_has_front_and_back_fragment() {
        let c = cam(32);
        let mesh = cube(Vec3::new(0.0, 0.0, 500.0), 10.0, "c");
        let pass = MeshPass::forward(&mesh, &c, DEFAULT_CAPACITY).unwrap();
        // the cube spans roughly 10 px * 2 magnification around the centre
        for (x, y) in [(16, 16), (12, 20), (19, 13)] {
            let frags = pass.buffer.fragments(x, y);
            assert_eq!(frags.len(), 2, "pixel ({x}, {y})");
            let front = frags.iter().find(|f| f.sign == 1).unwrap();
            let back = frags.iter().find(|f| f.sign == -1).unwrap();
            assert!(front.z > back.z);
        }
        assert!(pass.map.valid.all());
        assert_eq!(pass.map.repaired.count(), 0);
        let l = pass.map.values.get(16, 16);
        assert!((l - 10.0 * c.pixel_secant(16, 16)).abs() < 1e-9, "{l}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let c = cam(16);
        let mesh = cube(Vec3::new(0.0, 0.0, 500.0), 6.0, "c");
        let pass = MeshPass::forward(&mesh, &c, 4).unwrap();
        let adj = pass.backward(&Image::zeros(16, 16), &c).unwrap();
        assert!(adj.vertex_grads.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let c = cam(16);
        let pass = MeshPass::forward(&cube(Vec3::new(0.0, 0.0, 500.0), 6.0, "c"), &c, 4).unwrap();
        assert!(matches!(
            pass.backward(&Image::zeros(8, 8), &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
