//! Ready-made cameras, spectra and material tables for the synthetic experiments.

use crate::compositor::{MaterialTable, Spectrum, AIR, BODY, BONES};
use crate::error::Result;
use crate::geometry::{DetectorGeometry, ProjectionCamera, Vec3};
use crate::pipeline::RenderSettings;
use crate::shapemodel::{build_synthetic_model, ShapeModel, SyntheticModelConfig};

/// Source-object and object-detector distances plus detector sampling, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGeometry {
    pub source_to_isocenter: f64,
    pub isocenter_to_detector: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub pitch_mm: f64,
}

impl Default for ViewGeometry {
    fn default() -> Self {
        Self {
            source_to_isocenter: 300.0,
            isocenter_to_detector: 300.0,
            width_px: 96,
            height_px: 96,
            pitch_mm: 2.0,
        }
    }
}

impl ViewGeometry {
    /// Detector in the plane `z = -isocenter_to_detector` with `u = x`, `v = y`;
    /// the source sits on the `+z` axis.
    pub fn camera(&self) -> Result<ProjectionCamera> {
        let det = DetectorGeometry::centered(
            self.width_px,
            self.height_px,
            self.pitch_mm,
            Vec3::new(0.0, 0.0, -self.isocenter_to_detector),
            Vec3::x(),
            Vec3::y(),
        );
        ProjectionCamera::from_geometry(Vec3::new(0.0, 0.0, self.source_to_isocenter), det)
    }
}

/// Soft tissue and cortical bone, 1/mm, roughly water and bone at these energies.
pub fn default_materials() -> MaterialTable {
    let mut t = MaterialTable::new();
    t.insert(AIR, vec![(30.0, 3.6e-5), (60.0, 2.2e-5), (100.0, 1.9e-5)])
        .expect("static table");
    t.insert(BODY, vec![(30.0, 0.0376), (40.0, 0.0268), (60.0, 0.0206), (80.0, 0.0184), (100.0, 0.0171)])
        .expect("static table");
    t.insert(BONES, vec![(30.0, 0.608), (40.0, 0.128), (60.0, 0.0605), (80.0, 0.0429), (100.0, 0.0357)])
        .expect("static table");
    t
}

/// Coarse three-bin stand-in for a filtered tube spectrum.
pub fn default_spectrum() -> Spectrum {
    Spectrum::new("synthetic-3bin", vec![(40.0, 0.3), (60.0, 0.5), (80.0, 0.2)]).expect("static spectrum")
}

pub fn default_settings() -> RenderSettings {
    RenderSettings::new(default_spectrum(), default_materials())
}

/// Synthetic two-partition model seen by the default view.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ShapeModel,
    pub cam: ProjectionCamera,
    pub settings: RenderSettings,
}

impl Scenario {
    pub fn new(model_cfg: &SyntheticModelConfig, view: &ViewGeometry) -> Result<Self> {
        Ok(Self {
            model: build_synthetic_model(model_cfg)?,
            cam: view.camera()?,
            settings: default_settings(),
        })
    }

    pub fn synthetic() -> Result<Self> {
        Self::new(&SyntheticModelConfig::default(), &ViewGeometry::default())
    }
}
