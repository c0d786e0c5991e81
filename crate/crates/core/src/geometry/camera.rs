//! Cone-beam projection camera: a raw 3×4 matrix plus the detector it images onto.

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector4};
use serde::{Deserialize, Serialize};

use super::mesh::Vec3;
use crate::error::{Error, Result};

const SOURCE_REL_TOL: f64 = 1e-6;

/// Detector plane placement. Pixel coordinate `(x, y)` maps to
/// `origin + pitch * (x * axis_u + y * axis_v)`; pixel `(i, j)` has its centre at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorGeometry {
    pub width_px: usize,
    pub height_px: usize,
    pub pitch_mm: f64,
    pub origin: [f64; 3],
    pub axis_u: [f64; 3],
    pub axis_v: [f64; 3],
    /// Optional explicit source position, cross-checked against the matrix null space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<[f64; 3]>,
}

impl DetectorGeometry {
    /// Detector centred on `center`, spanned by the given axes.
    pub fn centered(width_px: usize, height_px: usize, pitch_mm: f64, center: Vec3, axis_u: Vec3, axis_v: Vec3) -> Self {
        let origin = center
            - axis_u * (pitch_mm * width_px as f64 / 2.0)
            - axis_v * (pitch_mm * height_px as f64 / 2.0);
        Self {
            width_px,
            height_px,
            pitch_mm,
            origin: origin.into(),
            axis_u: axis_u.into(),
            axis_v: axis_v.into(),
            source: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("detector config", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("detector serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::InvalidCamera("detector has zero pixels".into()));
        }
        if !(self.pitch_mm > 0.0 && self.pitch_mm.is_finite()) {
            return Err(Error::InvalidCamera(format!("pixel pitch {} must be positive", self.pitch_mm)));
        }
        let u = Vec3::from(self.axis_u);
        let v = Vec3::from(self.axis_v);
        if (u.norm() - 1.0).abs() > 1e-9 || (v.norm() - 1.0).abs() > 1e-9 || u.dot(&v).abs() > 1e-9 {
            return Err(Error::InvalidCamera("detector axes must be orthonormal".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCamera {
    matrix: Matrix3x4<f64>,
    source: Vec3,
    detector: DetectorGeometry,
    origin: Vec3,
    axis_u: Vec3,
    axis_v: Vec3,
    normal: Vec3,
    source_height: f64,
}

impl ProjectionCamera {
    /// Builds the camera from a raw projection matrix; the source is the matrix's right null space.
    pub fn new(matrix: Matrix3x4<f64>, detector: DetectorGeometry) -> Result<Self> {
        detector.validate()?;
        let source = null_space_point(&matrix)?;
        if let Some(given) = detector.source {
            let given = Vec3::from(given);
            let scale = given.norm().max(source.norm()).max(1.0);
            if (given - source).norm() > SOURCE_REL_TOL * scale {
                return Err(Error::InvalidCamera(format!(
                    "source {given:?} is not the null space of the projection matrix ({source:?})"
                )));
            }
        }
        let mut cam = Self::assemble(matrix, source, detector)?;
        // homogeneous depth must be positive in front of the source
        let probe = cam.source + (cam.principal_point_world() - cam.source) * 0.5;
        if cam.homogeneous(&probe).z < 0.0 {
            cam.matrix = -cam.matrix;
        }
        cam.check_detector_consistency()?;
        Ok(cam)
    }

    /// Builds the matrix from a source position and detector placement.
    pub fn from_geometry(source: Vec3, detector: DetectorGeometry) -> Result<Self> {
        detector.validate()?;
        let origin = Vec3::from(detector.origin);
        let u = Vec3::from(detector.axis_u);
        let v = Vec3::from(detector.axis_v);
        let n = u.cross(&v);
        let h = n.dot(&(source - origin));
        let pitch = detector.pitch_mm;
        // ray S + t (X - S) meets the plane at t = h / (h - n.(X - O)); with w = h - n.(X - O)
        // the hit point minus the origin is ((S - O) w + h (X - S)) / w
        let w_row = Vector4::new(-n.x, -n.y, -n.z, h + n.dot(&origin));
        let so = source - origin;
        let axis_row = |a: &Vec3| -> Vector4<f64> {
            let c = a.dot(&so);
            let lin = -n * c + a * h;
            let constant = c * (h + n.dot(&origin)) - h * a.dot(&source);
            Vector4::new(lin.x, lin.y, lin.z, constant) / pitch
        };
        let mut m = Matrix3x4::zeros();
        m.set_row(0, &axis_row(&u).transpose());
        m.set_row(1, &axis_row(&v).transpose());
        m.set_row(2, &w_row.transpose());
        let mut det = detector;
        det.source = None;
        let cam = Self::assemble(m, source, det)?;
        cam.check_detector_consistency()?;
        Ok(cam)
    }

    fn assemble(matrix: Matrix3x4<f64>, source: Vec3, detector: DetectorGeometry) -> Result<Self> {
        let origin = Vec3::from(detector.origin);
        let axis_u = Vec3::from(detector.axis_u);
        let axis_v = Vec3::from(detector.axis_v);
        let normal = axis_u.cross(&axis_v);
        let source_height = normal.dot(&(source - origin));
        if source_height <= 0.0 {
            return Err(Error::InvalidCamera(
                "source must lie on the +(axis_u x axis_v) side of the detector".into(),
            ));
        }
        Ok(Self {
            matrix,
            source,
            detector,
            origin,
            axis_u,
            axis_v,
            normal,
            source_height,
        })
    }

    fn check_detector_consistency(&self) -> Result<()> {
        let (w, h) = (self.width() as f64, self.height() as f64);
        for (x, y) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h), (w / 2.0, h / 2.0)] {
            let p = self.pixel_to_world(x, y);
            let q = self.homogeneous(&p);
            let (px, py) = (q.x / q.z, q.y / q.z);
            let tol = SOURCE_REL_TOL * w.max(h);
            if (px - x).abs() > tol || (py - y).abs() > tol {
                return Err(Error::InvalidCamera(format!(
                    "projection matrix maps detector pixel ({x}, {y}) to ({px}, {py})"
                )));
            }
        }
        Ok(())
    }

    pub fn load(matrix_path: impl AsRef<Path>, detector_path: impl AsRef<Path>) -> Result<Self> {
        let matrix = load_matrix(matrix_path)?;
        let detector = DetectorGeometry::load(detector_path)?;
        Self::new(matrix, detector)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.matrix
    }

    pub fn source(&self) -> Vec3 {
        self.source
    }

    pub fn detector(&self) -> &DetectorGeometry {
        &self.detector
    }

    pub fn width(&self) -> usize {
        self.detector.width_px
    }

    pub fn height(&self) -> usize {
        self.detector.height_px
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.detector.width_px, self.detector.height_px)
    }

    /// Unit normal of the detector plane, pointing towards the source.
    pub fn detector_normal(&self) -> Vec3 {
        self.normal
    }

    /// Perpendicular source-to-detector distance in mm.
    pub fn source_height(&self) -> f64 {
        self.source_height
    }

    /// Signed perpendicular distance from `p` to the detector plane (positive on the source side).
    pub fn height_above_detector(&self, p: &Vec3) -> f64 {
        self.normal.dot(&(p - self.origin))
    }

    pub fn homogeneous(&self, p: &Vec3) -> Vec3 {
        self.matrix * p.push(1.0)
    }

    /// World position of continuous pixel coordinates.
    pub fn pixel_to_world(&self, x: f64, y: f64) -> Vec3 {
        self.origin + (self.axis_u * x + self.axis_v * y) * self.detector.pitch_mm
    }

    pub fn pixel_center(&self, ix: usize, iy: usize) -> Vec3 {
        self.pixel_to_world(ix as f64 + 0.5, iy as f64 + 0.5)
    }

    /// Foot of the perpendicular from the source onto the detector plane.
    pub fn principal_point_world(&self) -> Vec3 {
        self.source - self.normal * self.source_height
    }

    /// Principal point in continuous pixel coordinates.
    pub fn principal_point(&self) -> (f64, f64) {
        let d = self.principal_point_world() - self.origin;
        (
            d.dot(&self.axis_u) / self.detector.pitch_mm,
            d.dot(&self.axis_v) / self.detector.pitch_mm,
        )
    }

    /// Unit direction from the source towards the centre of pixel `(ix, iy)`.
    pub fn ray_direction(&self, ix: usize, iy: usize) -> Vec3 {
        (self.pixel_center(ix, iy) - self.source).normalize()
    }

    /// Ratio of source-to-pixel distance over the perpendicular source height for pixel `(ix, iy)`.
    pub fn pixel_secant(&self, ix: usize, iy: usize) -> f64 {
        (self.pixel_center(ix, iy) - self.source).norm() / self.source_height
    }
}

/// Right null vector of a 3×4 matrix from its signed 3×3 minors, dehomogenised.
fn null_space_point(m: &Matrix3x4<f64>) -> Result<Vec3> {
    let minor = |skip: usize| -> f64 {
        let cols: Vec<usize> = (0..4).filter(|&c| c != skip).collect();
        Matrix3::from_fn(|r, c| m[(r, cols[c])]).determinant()
    };
    let c = [minor(0), -minor(1), minor(2), -minor(3)];
    let scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 || c[3].abs() <= 1e-12 * scale {
        return Err(Error::InvalidCamera(
            "projection matrix has no finite centre (rank deficient or affine)".into(),
        ));
    }
    Ok(Vec3::new(c[0] / c[3], c[1] / c[3], c[2] / c[3]))
}

pub fn parse_matrix(text: &str) -> Result<Matrix3x4<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse("projection matrix", format!("bad number '{t}'"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 4) {
        return Err(Error::parse("projection matrix", "expected 3 rows of 4 values"));
    }
    Ok(Matrix3x4::from_fn(|r, c| rows[r][c]))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix3x4<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

pub fn format_matrix(m: &Matrix3x4<f64>) -> String {
    let mut s = String::new();
    for r in 0..3 {
        let row: Vec<String> = (0..4).map(|c| format!("{:?}", m[(r, c)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}
