//! Mesh set → distance maps → transmission image, and the reverse-mode chain back to vertices
//! and shape-model parameters.

use std::collections::BTreeMap;

use crate::compositor::{air_distance_map, backward_transmission, render_transmission, MaterialTable, SceneStack, Spectrum, TransmissionImage};
use crate::error::Result;
use crate::geometry::{ProjectionCamera, TriangleMesh, Vec3};
use crate::image::Image;
use crate::rasterizer::{MeshPass, DEFAULT_CAPACITY};
use crate::registration::ngc::{ngc_forward, NgcEvaluation};
use crate::shapemodel::{ParamGradient, PoseShapeParams, ShapeModel};

#[derive(Debug, Clone)]
pub struct RenderSettings {
    pub spectrum: Spectrum,
    pub materials: MaterialTable,
    pub capacity: usize,
}

impl RenderSettings {
    pub fn new(spectrum: Spectrum, materials: MaterialTable) -> Self {
        Self {
            spectrum,
            materials,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

/// Forward artifacts of a full scene render.
#[derive(Debug, Clone)]
pub struct SceneRender {
    pub passes: Vec<MeshPass>,
    pub stack: SceneStack,
    pub image: TransmissionImage,
}

/// Raster maps of meshes sharing a label are summed into one slot.
pub fn render_meshes(meshes: &[TriangleMesh], cam: &ProjectionCamera, settings: &RenderSettings) -> Result<SceneRender> {
    let passes = meshes
        .iter()
        .map(|m| MeshPass::forward(m, cam, settings.capacity))
        .collect::<Result<Vec<_>>>()?;
    let mut by_label: BTreeMap<&str, Image> = BTreeMap::new();
    for p in &passes {
        let slot = by_label
            .entry(p.map.label.as_str())
            .or_insert_with(|| Image::zeros(cam.width(), cam.height()));
        slot.data_mut()
            .iter_mut()
            .zip(p.map.values.data())
            .for_each(|(s, v)| *s += v);
    }
    let mut stack = SceneStack::new(air_distance_map(cam).values);
    for (label, map) in by_label {
        stack.insert(label, map)?;
    }
    let image = render_transmission(&stack, &settings.spectrum, &settings.materials)?;
    Ok(SceneRender { passes, stack, image })
}

impl SceneRender {
    /// Per-mesh world-vertex gradients for an image-space cotangent.
    pub fn backward(&self, image_grad: &Image, cam: &ProjectionCamera, settings: &RenderSettings) -> Result<Vec<Vec<Vec3>>> {
        let stack_grad = backward_transmission(image_grad, &self.stack, &settings.spectrum, &settings.materials)?;
        let zero = Image::zeros(cam.width(), cam.height());
        self.passes
            .iter()
            .map(|p| {
                let upstream = stack_grad.for_label(&p.map.label).unwrap_or(&zero);
                Ok(p.backward(upstream, cam)?.vertex_grads)
            })
            .collect()
    }

    /// Per-pixel fragment counts and validity; equal signatures mean no pixel gained or lost
    /// coverage between two renders.
    pub fn coverage_signature(&self) -> Vec<u32> {
        coverage_signature(&self.passes)
    }
}

/// Fragment count plus valid/repaired bits for every pixel of every pass. Fragments migrating
/// between adjacent faces leave it unchanged; silhouette crossings do not.
pub fn coverage_signature(passes: &[MeshPass]) -> Vec<u32> {
    let mut sig = Vec::new();
    for p in passes {
        let (w, h) = p.buffer.dims();
        for y in 0..h {
            for x in 0..w {
                let n = p.buffer.fragments(x, y).len() as u32;
                let bits = u32::from(p.map.valid.get(x, y)) | (u32::from(p.map.repaired.get(x, y)) << 1);
                sig.push(n << 2 | bits);
            }
        }
    }
    sig
}

/// Like [`coverage_signature`] but also records which faces cover each pixel.
pub fn fragment_signature(passes: &[MeshPass]) -> Vec<u32> {
    let mut sig = Vec::new();
    for p in passes {
        let (w, h) = p.buffer.dims();
        for y in 0..h {
            for x in 0..w {
                let frags = p.buffer.fragments(x, y);
                if frags.is_empty() && p.map.valid.get(x, y) {
                    continue;
                }
                sig.push((y * w + x) as u32);
                sig.push(u32::from(p.map.valid.get(x, y)) | (u32::from(p.map.repaired.get(x, y)) << 1));
                let mut faces: Vec<u32> = frags.iter().map(|f| f.face).collect();
                faces.sort_unstable();
                sig.push(faces.len() as u32);
                sig.extend(faces);
            }
        }
        sig.push(u32::MAX);
    }
    sig
}

pub fn render_model(
    model: &ShapeModel,
    params: &PoseShapeParams,
    cam: &ProjectionCamera,
    settings: &RenderSettings,
) -> Result<SceneRender> {
    let meshes = model.meshes_from_vertices(&model.posed_vertices(params));
    render_meshes(&meshes, cam, settings)
}

/// Loss `-NGC(render(params), target)` with its gradient over the parameters.
#[derive(Debug, Clone)]
pub struct ModelEvaluation {
    pub loss: f64,
    pub gradient: ParamGradient,
    pub render: SceneRender,
    pub ngc: NgcEvaluation,
}

pub fn model_loss(
    model: &ShapeModel,
    params: &PoseShapeParams,
    target: &Image,
    cam: &ProjectionCamera,
    settings: &RenderSettings,
) -> Result<(f64, SceneRender)> {
    let render = render_model(model, params, cam, settings)?;
    let value = ngc_forward(&render.image.image, target)?.value;
    Ok((-value, render))
}

pub fn model_loss_and_gradient(
    model: &ShapeModel,
    params: &PoseShapeParams,
    target: &Image,
    cam: &ProjectionCamera,
    settings: &RenderSettings,
) -> Result<ModelEvaluation> {
    let render = render_model(model, params, cam, settings)?;
    let ngc = ngc_forward(&render.image.image, target)?;
    let image_grad = ngc.backward().map(|v| -v);
    let per_mesh = render.backward(&image_grad, cam, settings)?;
    let mut vertex_grads = vec![Vec3::zeros(); model.num_vertices()];
    for (part, grads) in model.partitions().iter().zip(&per_mesh) {
        for (&v, g) in part.vertices.iter().zip(grads) {
            vertex_grads[v] += g;
        }
    }
    let gradient = model.params_jacobian_transpose(params, &vertex_grads);
    Ok(ModelEvaluation {
        loss: -ngc.value,
        gradient,
        render,
        ngc,
    })
}
