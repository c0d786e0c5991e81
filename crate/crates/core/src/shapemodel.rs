//! Linear statistical shape model with a rigid pose.
//!
//! Vertices are `v(beta, theta) = R(theta) (mean + sum_k beta_k phi_k) + t`, with `R` built
//! from XYZ Euler angles as `Rz * Ry * Rx`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::mesh_io::{parse_obj, to_obj_string};
use crate::geometry::primitives::unit_icosphere;
use crate::geometry::{TriangleMesh, Vec3};

pub const DEFAULT_BETA_MAX: f64 = 3.0;
const ORTHOGONALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeModel {
    mean: Vec<Vec3>,
    basis: Vec<Vec<Vec3>>,
    variances: Vec<f64>,
    faces: Vec<[usize; 3]>,
    vertex_labels: Vec<String>,
    landmarks: Vec<usize>,
    partitions: Vec<Partition>,
}

/// Faces of one material label, reindexed onto a compact vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub label: String,
    /// Model vertex index of each partition vertex.
    pub vertices: Vec<usize>,
    pub faces: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseShapeParams {
    pub beta: Vec<f64>,
    /// XYZ Euler angles in radians.
    pub rotation: [f64; 3],
    /// Translation in mm.
    pub translation: [f64; 3],
}

impl PoseShapeParams {
    pub fn rest(num_modes: usize) -> Self {
        Self {
            beta: vec![0.0; num_modes],
            rotation: [0.0; 3],
            translation: [0.0; 3],
        }
    }

    pub fn with_translation(mut self, t: [f64; 3]) -> Self {
        self.translation = t;
        self
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        euler_xyz(self.rotation)
    }

    /// Flattened `[tx, ty, tz, rx, ry, rz, beta...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(6 + self.beta.len());
        v.extend_from_slice(&self.translation);
        v.extend_from_slice(&self.rotation);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            translation: [v[0], v[1], v[2]],
            rotation: [v[3], v[4], v[5]],
            beta: v[6..].to_vec(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("params", e.to_string()))
    }
}

/// Gradient of a scalar over pose and shape, in the [`PoseShapeParams::to_vec`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub translation: Vec3,
    pub rotation: Vec3,
    pub beta: Vec<f64>,
}

impl ParamGradient {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        ];
        v.extend_from_slice(&self.beta);
        v
    }
}

pub fn euler_xyz(angles: [f64; 3]) -> Matrix3<f64> {
    rot_z(angles[2]) * rot_y(angles[1]) * rot_x(angles[0])
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Partial derivatives of `Rz Ry Rx` with respect to the x, y and z angles.
pub fn euler_xyz_derivatives(angles: [f64; 3]) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(angles[0]), rot_y(angles[1]), rot_z(angles[2]));
    [
        rz * ry * d_rot_x(angles[0]),
        rz * d_rot_y(angles[1]) * rx,
        d_rot_z(angles[2]) * ry * rx,
    ]
}

impl ShapeModel {
    pub fn new(
        mean: Vec<Vec3>,
        basis: Vec<Vec<Vec3>>,
        variances: Vec<f64>,
        faces: Vec<[usize; 3]>,
        vertex_labels: Vec<String>,
        landmarks: Vec<usize>,
    ) -> Result<Self> {
        let nv = mean.len();
        if nv == 0 || faces.is_empty() {
            return Err(Error::InvalidModel("model has no vertices or faces".into()));
        }
        if basis.iter().any(|b| b.len() != nv) {
            return Err(Error::InvalidModel("basis component length differs from the mean".into()));
        }
        if variances.len() != basis.len() {
            return Err(Error::InvalidModel(format!(
                "{} variances for {} basis components",
                variances.len(),
                basis.len()
            )));
        }
        if vertex_labels.len() != nv {
            return Err(Error::InvalidModel("partition label count differs from vertex count".into()));
        }
        if let Some(&l) = landmarks.iter().find(|&&l| l >= nv) {
            return Err(Error::InvalidModel(format!("landmark index {l} out of range")));
        }
        // validates indices and degeneracy
        TriangleMesh::new(mean.clone(), faces.clone(), "model").map_err(|e| Error::InvalidModel(e.to_string()))?;
        for (i, f) in faces.iter().enumerate() {
            let l = &vertex_labels[f[0]];
            if &vertex_labels[f[1]] != l || &vertex_labels[f[2]] != l {
                return Err(Error::InvalidModel(format!("face {i} spans several partitions")));
            }
        }
        for i in 0..basis.len() {
            for j in 0..i {
                let dot: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a.dot(b)).sum();
                let ni: f64 = basis[i].iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
                let nj: f64 = basis[j].iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
                if dot.abs() > ORTHOGONALITY_TOL * ni * nj {
                    return Err(Error::InvalidModel(format!(
                        "basis components {j} and {i} are not orthogonal"
                    )));
                }
            }
        }
        let partitions = build_partitions(&faces, &vertex_labels);
        Ok(Self {
            mean,
            basis,
            variances,
            faces,
            vertex_labels,
            landmarks,
            partitions,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.mean.len()
    }

    pub fn num_modes(&self) -> usize {
        self.basis.len()
    }

    pub fn mean(&self) -> &[Vec3] {
        &self.mean
    }

    pub fn basis(&self) -> &[Vec<Vec3>] {
        &self.basis
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_labels(&self) -> &[String] {
        &self.vertex_labels
    }

    pub fn landmarks(&self) -> &[usize] {
        &self.landmarks
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn check_params(&self, params: &PoseShapeParams, beta_max: f64) -> Result<()> {
        if params.beta.len() != self.num_modes() {
            return Err(Error::InvalidModel(format!(
                "expected {} shape coefficients, got {}",
                self.num_modes(),
                params.beta.len()
            )));
        }
        if let Some((index, &value)) = params.beta.iter().enumerate().find(|(_, b)| b.abs() > beta_max) {
            return Err(Error::ShapeOutOfBounds {
                index,
                value,
                bound: beta_max,
            });
        }
        Ok(())
    }

    /// Mean plus weighted basis, before the rigid transform.
    pub fn shaped_vertices(&self, beta: &[f64]) -> Vec<Vec3> {
        let mut out = self.mean.clone();
        for (b, comp) in beta.iter().zip(&self.basis) {
            if *b != 0.0 {
                for (v, d) in out.iter_mut().zip(comp) {
                    *v += d * *b;
                }
            }
        }
        out
    }

    /// All model vertices at `params` (no bound check).
    pub fn posed_vertices(&self, params: &PoseShapeParams) -> Vec<Vec3> {
        let r = params.rotation_matrix();
        let t = Vec3::from(params.translation);
        self.shaped_vertices(&params.beta)
            .iter()
            .map(|v| r * v + t)
            .collect()
    }

    /// One mesh per partition label, in label order.
    pub fn instantiate(&self, params: &PoseShapeParams) -> Result<Vec<TriangleMesh>> {
        self.check_params(params, DEFAULT_BETA_MAX)?;
        Ok(self.meshes_from_vertices(&self.posed_vertices(params)))
    }

    pub fn meshes_from_vertices(&self, vertices: &[Vec3]) -> Vec<TriangleMesh> {
        self.partitions
            .iter()
            .map(|p| {
                let verts = p.vertices.iter().map(|&i| vertices[i]).collect();
                TriangleMesh::new(verts, p.faces.clone(), p.label.clone()).expect("partition is valid")
            })
            .collect()
    }

    /// Whole model as a single mesh.
    pub fn full_mesh(&self, params: &PoseShapeParams) -> TriangleMesh {
        TriangleMesh::new(self.posed_vertices(params), self.faces.clone(), "model").expect("model mesh is valid")
    }

    pub fn mean_mesh(&self) -> TriangleMesh {
        TriangleMesh::new(self.mean.clone(), self.faces.clone(), "mean").expect("model mesh is valid")
    }

    pub fn landmark_positions(&self, params: &PoseShapeParams) -> Vec<Vec3> {
        let v = self.posed_vertices(params);
        self.landmarks.iter().map(|&i| v[i]).collect()
    }

    /// Pulls per-vertex gradients (model indexing) back onto pose and shape parameters.
    pub fn params_jacobian_transpose(&self, params: &PoseShapeParams, vertex_grads: &[Vec3]) -> ParamGradient {
        assert_eq!(vertex_grads.len(), self.num_vertices(), "one gradient per model vertex");
        let r = params.rotation_matrix();
        let translation = vertex_grads.iter().sum::<Vec3>();
        // sum_v g_v^T R phi_k = sum_v (R^T g_v) . phi_k
        let rotated: Vec<Vec3> = vertex_grads.iter().map(|g| r.transpose() * g).collect();
        let beta = self
            .basis
            .iter()
            .map(|comp| comp.iter().zip(&rotated).map(|(p, g)| p.dot(g)).sum())
            .collect();
        let shaped = self.shaped_vertices(&params.beta);
        let dr = euler_xyz_derivatives(params.rotation);
        let mut rotation = Vec3::zeros();
        for (s, g) in shaped.iter().zip(vertex_grads) {
            for k in 0..3 {
                rotation[k] += g.dot(&(dr[k] * s));
            }
        }
        ParamGradient {
            translation,
            rotation,
            beta,
        }
    }

    /// Writes `mean.obj`, `basis_<k>.f32`, `partition.csv`, `landmarks.csv` and `meta.toml`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write("mean.obj", to_obj_string(&self.mean_mesh()).as_bytes())?;
        for (k, comp) in self.basis.iter().enumerate() {
            let mut bytes = Vec::with_capacity(comp.len() * 12);
            for v in comp {
                for c in v.iter() {
                    bytes.extend_from_slice(&(*c as f32).to_le_bytes());
                }
            }
            write(&format!("basis_{k}.f32"), &bytes)?;
        }
        let mut partition = String::from("vertex,label\n");
        for (i, l) in self.vertex_labels.iter().enumerate() {
            partition.push_str(&format!("{i},{l}\n"));
        }
        write("partition.csv", partition.as_bytes())?;
        let mut landmarks = String::from("vertex\n");
        for l in &self.landmarks {
            landmarks.push_str(&format!("{l}\n"));
        }
        write("landmarks.csv", landmarks.as_bytes())?;
        let meta = ModelMeta {
            n_vertices: self.num_vertices(),
            n_basis: self.num_modes(),
            variances: self.variances.clone(),
        };
        write("meta.toml", toml::to_string(&meta).expect("meta serializes").as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| Error::io(p, e))
        };
        let meta: ModelMeta = toml::from_str(&String::from_utf8_lossy(&read("meta.toml")?))
            .map_err(|e| Error::parse("meta.toml", e.to_string()))?;
        let mean_mesh = parse_obj(&String::from_utf8_lossy(&read("mean.obj")?), "mean")?;
        if mean_mesh.num_vertices() != meta.n_vertices {
            return Err(Error::InvalidModel(format!(
                "meta.toml declares {} vertices, mean.obj has {}",
                meta.n_vertices,
                mean_mesh.num_vertices()
            )));
        }
        let mut basis = Vec::with_capacity(meta.n_basis);
        for k in 0..meta.n_basis {
            let bytes = read(&format!("basis_{k}.f32"))?;
            if bytes.len() != meta.n_vertices * 12 {
                return Err(Error::InvalidModel(format!("basis_{k}.f32 has {} bytes", bytes.len())));
            }
            let vals: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            basis.push(vals.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect());
        }
        let mut labels = vec![String::new(); meta.n_vertices];
        let partition = String::from_utf8_lossy(&read("partition.csv")?).into_owned();
        for (i, line) in partition.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (idx, label) = line
                .split_once(',')
                .ok_or_else(|| Error::parse("partition.csv", format!("line {}: expected vertex,label", i + 1)))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::parse("partition.csv", format!("line {}: bad vertex index", i + 1)))?;
            if idx >= labels.len() {
                return Err(Error::InvalidModel(format!("partition.csv references vertex {idx}")));
            }
            labels[idx] = label.trim().to_string();
        }
        let landmarks_text = match read("landmarks.csv") {
            Ok(b) => String::from_utf8_lossy(&b).into_owned(),
            Err(_) => String::new(),
        };
        let landmarks = landmarks_text
            .lines()
            .skip(1)
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<usize>()
                    .map_err(|_| Error::parse("landmarks.csv", format!("bad index '{l}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            mean_mesh.vertices().to_vec(),
            basis,
            meta.variances,
            mean_mesh.faces().to_vec(),
            labels,
            landmarks,
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    n_vertices: usize,
    n_basis: usize,
    variances: Vec<f64>,
}

fn build_partitions(faces: &[[usize; 3]], labels: &[String]) -> Vec<Partition> {
    let mut by_label: BTreeMap<&str, Vec<[usize; 3]>> = BTreeMap::new();
    for f in faces {
        by_label.entry(labels[f[0]].as_str()).or_default().push(*f);
    }
    by_label
        .into_iter()
        .map(|(label, faces)| {
            let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
            for f in &faces {
                for &v in f {
                    remap.entry(v).or_insert(0);
                }
            }
            let vertices: Vec<usize> = remap.keys().copied().collect();
            for (new, v) in vertices.iter().enumerate() {
                remap.insert(*v, new);
            }
            let faces = faces.iter().map(|f| f.map(|v| remap[&v])).collect();
            Partition {
                label: label.to_string(),
                vertices,
                faces,
            }
        })
        .collect()
}

/// Deformation families available to [`build_synthetic_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    /// Uniform scaling about the model origin.
    Scale,
    ScaleX,
    ScaleY,
    ScaleZ,
    /// Quadratic bend of the long axis in a seeded direction.
    Bend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticModelConfig {
    /// Semi-axes of the outer ("body") ellipsoid, mm.
    pub body_radii: [f64; 3],
    /// Semi-axes of the nested ("bones") ellipsoid, mm.
    pub bone_radii: [f64; 3],
    /// Offset of the bone ellipsoid centre from the body centre, mm.
    pub bone_offset: [f64; 3],
    /// Euler XYZ tilt of each ellipsoid's axes, degrees. Tilts break the mirror symmetries
    /// that otherwise hide out-of-plane rotation from a single view.
    pub body_rotation_deg: [f64; 3],
    pub bone_rotation_deg: [f64; 3],
    pub body_level: u32,
    pub bone_level: u32,
    pub modes: Vec<ModeKind>,
    /// Relative deformation per unit coefficient.
    pub mode_amplitude: f64,
    pub num_landmarks: usize,
    pub seed: u64,
}

impl Default for SyntheticModelConfig {
    fn default() -> Self {
        Self {
            body_radii: [40.0, 28.0, 22.0],
            bone_radii: [20.0, 8.0, 6.0],
            bone_offset: [4.0, 3.0, 5.0],
            body_rotation_deg: [20.0, 25.0, 15.0],
            bone_rotation_deg: [40.0, 0.0, 45.0],
            body_level: 3,
            bone_level: 2,
            // uniform scale is left out: from one view it is nearly indistinguishable from depth
            modes: vec![ModeKind::ScaleX, ModeKind::Bend],
            mode_amplitude: 0.04,
            num_landmarks: 8,
            seed: 7,
        }
    }
}

impl SyntheticModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("model config", e.to_string()))
    }

    fn body_rotation(&self) -> Matrix3<f64> {
        euler_xyz(self.body_rotation_deg.map(f64::to_radians))
    }

    fn body_point(&self, unit: &Vec3) -> Vec3 {
        self.body_rotation() * unit.component_mul(&Vec3::from(self.body_radii))
    }

    fn bone_point(&self, unit: &Vec3) -> Vec3 {
        euler_xyz(self.bone_rotation_deg.map(f64::to_radians)) * unit.component_mul(&Vec3::from(self.bone_radii))
            + Vec3::from(self.bone_offset)
    }

    fn validate(&self) -> Result<()> {
        let pos = |r: &[f64; 3]| r.iter().all(|&v| v > 0.0 && v.is_finite());
        if !pos(&self.body_radii) || !pos(&self.bone_radii) {
            return Err(Error::InvalidConfig("ellipsoid radii must be positive".into()));
        }
        if ![self.bone_offset, self.body_rotation_deg, self.bone_rotation_deg]
            .iter()
            .flatten()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite offset or tilt".into()));
        }
        // every point of the bone ellipsoid must lie well inside the body (scaled by 0.9)
        let (unit, _) = unit_icosphere(3);
        let body_rot = self.body_rotation();
        let body_r = Vec3::from(self.body_radii);
        let fits = unit.iter().all(|p| {
            let q = body_rot.transpose() * self.bone_point(p);
            q.component_div(&body_r).norm() < 0.9
        });
        if !fits {
            return Err(Error::InvalidConfig("bone ellipsoid does not fit inside the body".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("at least one deformation mode is required".into()));
        }
        if !(self.mode_amplitude > 0.0 && self.mode_amplitude * DEFAULT_BETA_MAX < 0.5) {
            return Err(Error::InvalidConfig("mode amplitude must be in (0, 1/6)".into()));
        }
        if self.body_level > 5 || self.bone_level > 5 {
            return Err(Error::InvalidConfig("subdivision level above 5".into()));
        }
        Ok(())
    }
}

/// Nested-ellipsoid model ("body" containing "bones") with Gram-Schmidt orthogonalised
/// global deformation modes. Deterministic for a given config.
pub fn build_synthetic_model(cfg: &SyntheticModelConfig) -> Result<ShapeModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (body_unit, body_faces) = unit_icosphere(cfg.body_level);
    let (bone_unit, bone_faces) = unit_icosphere(cfg.bone_level);
    let body_r = Vec3::from(cfg.body_radii);

    let mut mean: Vec<Vec3> = body_unit.iter().map(|p| cfg.body_point(p)).collect();
    let nb = mean.len();
    mean.extend(bone_unit.iter().map(|p| cfg.bone_point(p)));
    let mut faces = body_faces;
    faces.extend(bone_faces.iter().map(|f| f.map(|v| v + nb)));
    let mut labels = vec!["body".to_string(); nb];
    labels.extend(std::iter::repeat_n("bones".to_string(), mean.len() - nb));

    let a = cfg.mode_amplitude;
    let long = body_r.max();
    let mut raw: Vec<Vec<Vec3>> = Vec::new();
    for mode in &cfg.modes {
        let field: Vec<Vec3> = match mode {
            ModeKind::Scale => mean.iter().map(|p| p * a).collect(),
            ModeKind::ScaleX => mean.iter().map(|p| Vec3::new(p.x * a, 0.0, 0.0)).collect(),
            ModeKind::ScaleY => mean.iter().map(|p| Vec3::new(0.0, p.y * a, 0.0)).collect(),
            ModeKind::ScaleZ => mean.iter().map(|p| Vec3::new(0.0, 0.0, p.z * a)).collect(),
            ModeKind::Bend => {
                let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let dir = Vec3::new(0.0, phi.cos(), phi.sin());
                mean.iter().map(|p| dir * (a * p.x * p.x / long)).collect()
            }
        };
        raw.push(field);
    }
    let basis = gram_schmidt(raw)?;
    // each orthogonalised mode keeps its own scale, used as the unit standard deviation
    let variances = vec![1.0; basis.len()];

    let mut landmarks = Vec::with_capacity(cfg.num_landmarks);
    while landmarks.len() < cfg.num_landmarks.min(nb) {
        let v = rng.gen_range(0..nb);
        if !landmarks.contains(&v) {
            landmarks.push(v);
        }
    }
    ShapeModel::new(mean, basis, variances, faces, labels, landmarks)
}

fn gram_schmidt(fields: Vec<Vec<Vec3>>) -> Result<Vec<Vec<Vec3>>> {
    let dot = |a: &[Vec3], b: &[Vec3]| a.iter().zip(b).map(|(x, y)| x.dot(y)).sum::<f64>();
    let mut out: Vec<Vec<Vec3>> = Vec::new();
    for mut f in fields {
        let original = dot(&f, &f).sqrt();
        for q in &out {
            let c = dot(&f, q) / dot(q, q);
            for (fv, qv) in f.iter_mut().zip(q) {
                *fv -= qv * c;
            }
        }
        let remaining = dot(&f, &f).sqrt();
        if remaining < 1e-6 * original {
            return Err(Error::InvalidConfig("deformation modes are linearly dependent".into()));
        }
        // restore the pre-projection magnitude so every mode moves vertices comparably
        let s = original / remaining;
        f.iter_mut().for_each(|v| *v *= s);
        out.push(f);
    }
    Ok(out)
}
