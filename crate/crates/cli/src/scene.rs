//! Scene description files.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//! spectrum = "spectrum.csv"
//!
//! [camera]
//! matrix = "P.txt"
//! detector = "detector.toml"
//!
//! [materials]
//! air = "mu_air.csv"
//! body = "mu_body.csv"
//!
//! [[objects]]
//! mesh = "body.obj"
//! label = "body"
//!
//! [model]            # optional, instead of or in addition to objects
//! path = "model"
//! params = "params.toml"
//! ```
//!
//! Relative paths resolve against the scene file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use drr_core::compositor::{MaterialTable, Spectrum};
use drr_core::geometry::{load_mesh, ProjectionCamera, TriangleMesh};
use drr_core::pipeline::RenderSettings;
use drr_core::rasterizer::DEFAULT_CAPACITY;
use drr_core::shapemodel::{PoseShapeParams, ShapeModel};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub spectrum: PathBuf,
    pub camera: CameraFiles,
    pub materials: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub objects: Vec<ObjectEntry>,
    pub model: Option<ModelEntry>,
    pub capacity: Option<usize>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFiles {
    pub matrix: PathBuf,
    pub detector: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub mesh: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub path: PathBuf,
    pub params: Option<PathBuf>,
}

/// A validated scene with every file loaded.
pub struct Scene {
    pub config: SceneConfig,
    pub base_dir: PathBuf,
    pub cam: ProjectionCamera,
    pub settings: RenderSettings,
    pub objects: Vec<TriangleMesh>,
    pub model: Option<(ShapeModel, PoseShapeParams)>,
    /// Scene file plus every file it references.
    pub inputs: Vec<PathBuf>,
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::scene(format!("scene file: {e}")))
    }

    /// Every referenced file, resolved against `base`.
    fn referenced_paths(&self, base: &Path) -> Vec<PathBuf> {
        let mut paths = vec![
            base.join(&self.spectrum),
            base.join(&self.camera.matrix),
            base.join(&self.camera.detector),
        ];
        paths.extend(self.materials.values().map(|p| base.join(p)));
        paths.extend(self.objects.iter().map(|o| base.join(&o.mesh)));
        if let Some(m) = &self.model {
            paths.push(base.join(&m.path));
            paths.extend(m.params.iter().map(|p| base.join(p)));
        }
        paths
    }
}

impl Scene {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let source_text = std::fs::read_to_string(path).map_err(|e| CliError::scene(format!("{}: {e}", path.display())))?;
        let config = SceneConfig::parse(&source_text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let referenced = config.referenced_paths(&base_dir);
        let missing: Vec<String> = referenced
            .iter()
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::scene(format!("missing scene files: {}", missing.join(", "))));
        }
        let at = |p: &Path| base_dir.join(p);
        let cam = ProjectionCamera::load(at(&config.camera.matrix), at(&config.camera.detector))?;
        let spectrum = Spectrum::load_csv(at(&config.spectrum))?;
        let mut materials = MaterialTable::new();
        for (label, p) in &config.materials {
            materials.load_csv(label, at(p))?;
        }
        let mut settings = RenderSettings::new(spectrum, materials);
        settings.capacity = config.capacity.unwrap_or(DEFAULT_CAPACITY);
        let objects = config
            .objects
            .iter()
            .map(|o| load_mesh(at(&o.mesh), &o.label))
            .collect::<drr_core::Result<Vec<_>>>()?;
        let model = match &config.model {
            Some(m) => {
                let model = ShapeModel::load(at(&m.path))?;
                let params = match &m.params {
                    Some(p) => read_params(&at(p))?,
                    None => PoseShapeParams::rest(model.num_modes()),
                };
                Some((model, params))
            }
            None => None,
        };
        let mut inputs = vec![path.to_path_buf()];
        inputs.extend(referenced);
        Ok(Self {
            config,
            base_dir,
            cam,
            settings,
            objects,
            model,
            inputs,
        })
    }

    /// Scene meshes followed by the model instance, if any.
    pub fn meshes(&self, params: Option<&PoseShapeParams>) -> Result<Vec<TriangleMesh>, CliError> {
        let mut meshes = self.objects.clone();
        if let Some((model, default)) = &self.model {
            meshes.extend(model.instantiate(params.unwrap_or(default))?);
        }
        Ok(meshes)
    }

    pub fn require_model(&self) -> Result<&(ShapeModel, PoseShapeParams), CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::scene("this command needs a [model] section in the scene".into()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output_dir)
    }
}

pub fn read_params(path: &Path) -> Result<PoseShapeParams, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::scene(format!("{}: {e}", path.display())))?;
    Ok(PoseShapeParams::from_toml_str(&text)?)
}
