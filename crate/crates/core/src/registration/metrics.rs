//! Surface and landmark error metrics.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::projection::project_point;
use crate::geometry::{ProjectionCamera, TriangleMesh, Vec3};
use crate::shapemodel::{PoseShapeParams, ShapeModel};

/// Minimum surface sampling density for [`hausdorff_distance`], samples per mm².
pub const SAMPLE_DENSITY: f64 = 0.25;

/// Vertices plus sub-triangle centroids so that every face carries at least
/// `density * area` samples.
pub fn surface_samples(mesh: &TriangleMesh, density: f64) -> Vec<Vec3> {
    let mut out = mesh.vertices().to_vec();
    for f in 0..mesh.num_faces() {
        let [a, b, c] = mesh.face_vertices(f);
        let area = mesh.face_area(f);
        let n = ((area * density).sqrt().ceil() as usize).max(1);
        let (e1, e2) = ((b - a) / n as f64, (c - a) / n as f64);
        for i in 0..n {
            for j in 0..n - i {
                // upright cell
                out.push(a + e1 * (i as f64 + 1.0 / 3.0) + e2 * (j as f64 + 1.0 / 3.0));
                if i + j + 1 < n {
                    // inverted cell
                    out.push(a + e1 * (i as f64 + 2.0 / 3.0) + e2 * (j as f64 + 2.0 / 3.0));
                }
            }
        }
    }
    out
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
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
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

struct TriangleSet {
    tris: Vec<[Vec3; 3]>,
    centers: Vec<Vec3>,
    radii: Vec<f64>,
}

impl TriangleSet {
    fn new(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.num_faces()).map(|f| mesh.face_vertices(f)).collect();
        let centers: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let radii = tris
            .iter()
            .zip(&centers)
            .map(|(t, c)| t.iter().map(|v| (v - c).norm()).fold(0.0, f64::max))
            .collect();
        Self { tris, centers, radii }
    }

    fn distance(&self, p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.tris.len() {
            if (p - self.centers[i]).norm() - self.radii[i] >= best {
                continue;
            }
            let [a, b, c] = &self.tris[i];
            best = best.min((p - closest_point_on_triangle(p, a, b, c)).norm());
        }
        best
    }
}

/// Largest distance from samples of `from` to the surface of `to`.
pub fn directed_hausdorff(from: &TriangleMesh, to: &TriangleMesh) -> f64 {
    let target = TriangleSet::new(to);
    surface_samples(from, SAMPLE_DENSITY)
        .par_iter()
        .map(|p| target.distance(p))
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance (mm) between surface samples of two meshes.
pub fn hausdorff_distance(a: &TriangleMesh, b: &TriangleMesh) -> Result<f64> {
    if a.num_faces() == 0 || b.num_faces() == 0 {
        return Err(Error::InvalidMesh("Hausdorff distance of an empty mesh".into()));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// Mean Euclidean distance between the model's landmarks at `params` and reference points.
pub fn landmark_error(model: &ShapeModel, params: &PoseShapeParams, reference: &[Vec3]) -> Result<f64> {
    let landmarks = model.landmark_positions(params);
    if landmarks.len() != reference.len() || landmarks.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "model has {} landmarks, reference has {}",
            landmarks.len(),
            reference.len()
        )));
    }
    Ok(landmarks
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).norm())
        .sum::<f64>()
        / reference.len() as f64)
}

/// Fraction of model vertices projecting inside the detector.
pub fn visibility_fraction(model: &ShapeModel, params: &PoseShapeParams, cam: &ProjectionCamera) -> f64 {
    vertex_visibility(&model.posed_vertices(params), cam)
}

pub fn vertex_visibility(vertices: &[Vec3], cam: &ProjectionCamera) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    let inside = vertices
        .iter()
        .filter(|v| match project_point(v, cam, 0) {
            Ok((s, _, _)) => s.x >= 0.0 && s.x < w && s.y >= 0.0 && s.y < h,
            Err(_) => false,
        })
        .count();
    inside as f64 / vertices.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::cube;

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        let cp = |p: Vec3| closest_point_on_triangle(&p, &a, &b, &c);
        assert!((cp(Vec3::new(0.2, 0.2, 5.0)) - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(cp(Vec3::new(-1.0, -1.0, 0.0)), a);
        assert_eq!(cp(Vec3::new(2.0, -0.5, 0.0)), b);
        assert_eq!(cp(Vec3::new(0.5, -2.0, 1.0)), Vec3::new(0.5, 0.0, 0.0));
        let p = cp(Vec3::new(1.0, 1.0, 0.0));
        assert!((p - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sampling_density() {
        let m = cube(Vec3::zeros(), 10.0, "c");
        let samples = surface_samples(&m, SAMPLE_DENSITY);
        assert!(samples.len() as f64 >= m.surface_area() * SAMPLE_DENSITY);
    }

    #[test]
    fn identical_meshes_zero() {
        let m = cube(Vec3::zeros(), 4.0, "c");
        assert!(hausdorff_distance(&m, &m).unwrap() < 1e-12);
    }

    #[test]
    fn landmark_offsets() {
        let model = crate::shapemodel::build_synthetic_model(&crate::shapemodel::SyntheticModelConfig {
            body_level: 1,
            bone_level: 1,
            num_landmarks: 3,
            ..Default::default()
        })
        .unwrap();
        let p = PoseShapeParams::rest(model.num_modes());
        let lm = model.landmark_positions(&p);
        assert_eq!(landmark_error(&model, &p, &lm).unwrap(), 0.0);
        let shifted: Vec<Vec3> = lm.iter().map(|v| v + Vec3::new(0.0, 7.0, 0.0)).collect();
        assert!((landmark_error(&model, &p, &shifted).unwrap() - 7.0).abs() < 1e-12);
        let mixed: Vec<Vec3> = lm
            .iter()
            .zip([3.0, 4.0, 5.0])
            .map(|(v, d)| v + Vec3::new(0.0, 0.0, d))
            .collect();
        assert!((landmark_error(&model, &p, &mixed).unwrap() - 4.0).abs() < 1e-12);
        assert!(landmark_error(&model, &p, &lm[..2]).is_err());
    }
}
