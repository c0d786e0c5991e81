//! Distance-map algebra and polychromatic Beer-Lambert imaging.
//!
//! Raw per-object maps overlap (bones lie inside the body, the body inside the air column).
//! [`containment_subtract`] turns them into disjoint effective lengths, [`beer_lambert`]
//! attenuates the spectrum through them, and the `backward_*` functions return the exact
//! adjoints back to the raw maps.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ProjectionCamera;
use crate::image::Image;
use crate::rasterizer::DistanceMap;

pub const AIR: &str = "air";
pub const BODY: &str = "body";
pub const BONES: &str = "bones";

/// Effective lengths below `-CLAMP_TOLERANCE_MM` are a containment violation; anything
/// between that and zero is tessellation mismatch and clamps to zero.
pub const CLAMP_TOLERANCE_MM: f64 = 0.1;
/// Slack allowed on effective lengths handed to [`beer_lambert`].
pub const NEGATIVE_LENGTH_EPS_MM: f64 = 1e-6;

/// Linear attenuation coefficient tables keyed by material label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    materials: BTreeMap<String, Vec<(f64, f64)>>,
}

impl MaterialTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// `entries` are `(energy keV, mu 1/mm)` with strictly increasing energies.
    pub fn insert(&mut self, label: impl Into<String>, entries: Vec<(f64, f64)>) -> Result<()> {
        let label = label.into();
        if entries.is_empty() {
            return Err(Error::InvalidTable(format!("material '{label}' has no entries")));
        }
        for pair in entries.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidTable(format!(
                    "material '{label}': energies must be strictly increasing"
                )));
            }
        }
        if let Some(&(e, mu)) = entries.iter().find(|(e, mu)| !(*mu >= 0.0) || !e.is_finite() || !mu.is_finite()) {
            return Err(Error::InvalidTable(format!(
                "material '{label}': invalid attenuation {mu} at {e} keV"
            )));
        }
        self.materials.insert(label, entries);
        Ok(())
    }

    pub fn with_constant(mut self, label: &str, mu: f64) -> Result<Self> {
        self.insert(label, vec![(0.0, mu)])?;
        Ok(self)
    }

    pub fn load_csv(&mut self, label: &str, path: impl AsRef<Path>) -> Result<()> {
        let entries = read_two_column_csv(path)?;
        self.insert(label, entries)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.materials.contains_key(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    pub fn entries(&self, label: &str) -> Option<&[(f64, f64)]> {
        self.materials.get(label).map(Vec::as_slice)
    }

    /// `energy_keV,mu_per_mm` rows with a header line.
    pub fn to_csv(&self, label: &str) -> Option<String> {
        let mut out = String::from("energy_keV,mu_per_mm\n");
        for (e, mu) in self.entries(label)? {
            out.push_str(&format!("{e},{mu}\n"));
        }
        Some(out)
    }

    /// Attenuation at `energy`, linearly interpolated and clamped at the table ends.
    pub fn mu(&self, label: &str, energy: f64) -> Result<f64> {
        let table = self
            .materials
            .get(label)
            .ok_or_else(|| Error::MissingMaterial(label.to_string()))?;
        Ok(interpolate_clamped(table, energy))
    }
}

fn interpolate_clamped(table: &[(f64, f64)], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = table.partition_point(|&(e, _)| e <= x);
    let (e0, m0) = table[i - 1];
    let (e1, m1) = table[i];
    m0 + (m1 - m0) * (x - e0) / (e1 - e0)
}

/// Photon weights per energy bin, kept in ascending energy order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub id: String,
    bins: Vec<(f64, f64)>,
}

impl Spectrum {
    pub fn new(id: impl Into<String>, mut bins: Vec<(f64, f64)>) -> Result<Self> {
        bins.sort_by(|a, b| a.0.total_cmp(&b.0));
        if bins.is_empty() {
            return Err(Error::InvalidTable("spectrum is empty".into()));
        }
        if bins.iter().any(|&(e, w)| !e.is_finite() || !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidTable("spectrum weights must be finite and >= 0".into()));
        }
        if bins.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::InvalidTable("spectrum has duplicate energies".into()));
        }
        if !(bins.iter().map(|b| b.1).sum::<f64>() > 0.0) {
            return Err(Error::InvalidTable("spectrum total weight must be positive".into()));
        }
        Ok(Self { id: id.into(), bins })
    }

    pub fn monoenergetic(energy_kev: f64, weight: f64) -> Result<Self> {
        Self::new(format!("mono-{energy_kev}keV"), vec![(energy_kev, weight)])
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "spectrum".into());
        Self::new(id, read_two_column_csv(path)?)
    }

    pub fn bins(&self) -> &[(f64, f64)] {
        &self.bins
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().map(|b| b.1).sum()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("energy_keV,weight\n");
        for (e, w) in &self.bins {
            out.push_str(&format!("{e},{w}\n"));
        }
        out
    }

    /// Single-bin spectrum for bin `k`.
    pub fn bin(&self, k: usize) -> Spectrum {
        Spectrum {
            id: format!("{}[{k}]", self.id),
            bins: vec![self.bins[k]],
        }
    }
}

/// Reads `energy_keV,value` rows; a non-numeric first row is treated as a header.
pub fn read_two_column_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_two_column_csv(&text).map_err(|m| Error::parse(path.display().to_string(), m))
}

pub fn parse_two_column_csv(text: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(format!("line {}: expected 2 columns", i + 1));
        }
        match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
            (Ok(e), Ok(v)) => out.push((e, v)),
            _ if out.is_empty() && i == 0 => continue,
            _ => return Err(format!("line {}: non-numeric value", i + 1)),
        }
    }
    Ok(out)
}

/// Raw, overlapping distance maps of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneStack {
    /// Source-to-pixel Euclidean distance.
    pub air: Image,
    pub body: Option<Image>,
    pub bones: Option<Image>,
    pub organs: BTreeMap<String, Image>,
}

impl SceneStack {
    pub fn new(air: Image) -> Self {
        Self {
            air,
            body: None,
            bones: None,
            organs: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.air.dims()
    }

    /// Routes a map to its slot by label: `body`, `bones`, anything else is an organ.
    pub fn insert(&mut self, label: &str, map: Image) -> Result<()> {
        self.air.check_dims(&map)?;
        match label {
            AIR => self.air = map,
            BODY => self.body = Some(map),
            BONES => self.bones = Some(map),
            other => {
                self.organs.insert(other.to_string(), map);
            }
        }
        Ok(())
    }
}

/// Disjoint per-material path lengths, in a fixed label order: air, body, bones, organs by name.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveStack {
    pub maps: Vec<(String, Image)>,
    /// Pixels with a small negative length that were clamped to zero.
    pub clamped_pixels: usize,
}

impl EffectiveStack {
    pub fn get(&self, label: &str) -> Option<&Image> {
        self.maps.iter().find(|(l, _)| l == label).map(|(_, m)| m)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].1.dims()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionImage {
    pub image: Image,
    pub spectrum_id: String,
    pub camera_id: String,
}

impl TransmissionImage {
    pub fn new(image: Image) -> Self {
        Self {
            image,
            spectrum_id: String::new(),
            camera_id: String::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

pub fn air_distance_map(cam: &ProjectionCamera) -> DistanceMap {
    let (w, h) = cam.dims();
    let source = cam.source();
    let values = Image::from_fn(w, h, |x, y| (cam.pixel_center(x, y) - source).norm());
    DistanceMap::from_values(values, AIR)
}

pub fn containment_subtract(stack: &SceneStack) -> Result<EffectiveStack> {
    let (w, h) = stack.dims();
    let zero = Image::zeros(w, h);
    let body = stack.body.as_ref().unwrap_or(&zero);
    let bones = stack.bones.as_ref();
    let mut clamped = 0usize;

    let mut check = |name: &str, img: &mut Image| -> Result<()> {
        for y in 0..h {
            for x in 0..w {
                let v = img.get(x, y);
                if v < -CLAMP_TOLERANCE_MM || v.is_nan() {
                    return Err(Error::Containment {
                        map: name.to_string(),
                        x,
                        y,
                        value: v,
                    });
                }
                if v < 0.0 {
                    img.set(x, y, 0.0);
                    clamped += 1;
                }
            }
        }
        Ok(())
    };

    let mut air = Image::from_fn(w, h, |x, y| stack.air.get(x, y) - body.get(x, y));
    check(AIR, &mut air)?;
    let mut eff_body = Image::from_fn(w, h, |x, y| {
        let mut v = body.get(x, y);
        if let Some(b) = bones {
            v -= b.get(x, y);
        }
        for organ in stack.organs.values() {
            v -= organ.get(x, y);
        }
        v
    });
    check(BODY, &mut eff_body)?;

    let mut maps = vec![(AIR.to_string(), air)];
    if stack.body.is_some() || bones.is_some() || !stack.organs.is_empty() {
        maps.push((BODY.to_string(), eff_body));
    }
    if let Some(b) = bones {
        let mut b = b.clone();
        check(BONES, &mut b)?;
        maps.push((BONES.to_string(), b));
    }
    for (name, organ) in &stack.organs {
        let mut o = organ.clone();
        check(name, &mut o)?;
        maps.push((name.clone(), o));
    }
    Ok(EffectiveStack {
        maps,
        clamped_pixels: clamped,
    })
}

/// `mu[bin][material]` for the stack's label order.
fn mu_matrix(labels: &[&str], spectrum: &Spectrum, materials: &MaterialTable) -> Result<Vec<Vec<f64>>> {
    spectrum
        .bins()
        .iter()
        .map(|&(e, _)| labels.iter().map(|l| materials.mu(l, e)).collect())
        .collect()
}

/// `I = sum_E I0(E) exp(-sum_p mu(p, E) L_p)`, energies summed in ascending order.
pub fn beer_lambert(stack: &EffectiveStack, spectrum: &Spectrum, materials: &MaterialTable) -> Result<TransmissionImage> {
    let labels: Vec<&str> = stack.maps.iter().map(|(l, _)| l.as_str()).collect();
    let mu = mu_matrix(&labels, spectrum, materials)?;
    let (w, h) = stack.dims();
    for (label, map) in &stack.maps {
        if let Some(p) = map.data().iter().position(|&v| v < -NEGATIVE_LENGTH_EPS_MM || v.is_nan()) {
            return Err(Error::Containment {
                map: label.clone(),
                x: p % w,
                y: p / w,
                value: map.data()[p],
            });
        }
    }
    let bins = spectrum.bins();
    let data: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let mut intensity = 0.0;
            for (k, &(_, i0)) in bins.iter().enumerate() {
                let mut exponent = 0.0;
                for (m, (_, map)) in stack.maps.iter().enumerate() {
                    exponent += mu[k][m] * map.data()[p];
                }
                intensity += i0 * (-exponent).exp();
            }
            intensity
        })
        .collect();
    Ok(TransmissionImage {
        image: Image::from_vec(w, h, data)?,
        spectrum_id: spectrum.id.clone(),
        camera_id: String::new(),
    })
}

/// Containment subtraction followed by Beer-Lambert.
pub fn render_transmission(stack: &SceneStack, spectrum: &Spectrum, materials: &MaterialTable) -> Result<TransmissionImage> {
    beer_lambert(&containment_subtract(stack)?, spectrum, materials)
}

/// `dC/dL_p = dC/dI * sum_E I0(E) (-mu(p, E)) exp(-sum_q mu(q, E) L_q)` per effective map.
pub fn backward_beer_lambert(
    image_grad: &Image,
    stack: &EffectiveStack,
    spectrum: &Spectrum,
    materials: &MaterialTable,
) -> Result<Vec<(String, Image)>> {
    let (w, h) = stack.dims();
    if image_grad.dims() != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            actual: image_grad.dims(),
        });
    }
    let labels: Vec<&str> = stack.maps.iter().map(|(l, _)| l.as_str()).collect();
    let mu = mu_matrix(&labels, spectrum, materials)?;
    let bins = spectrum.bins();
    let nm = labels.len();
    let per_pixel: Vec<Vec<f64>> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let g = image_grad.data()[p];
            let mut out = vec![0.0; nm];
            if g == 0.0 {
                return out;
            }
            for (k, &(_, i0)) in bins.iter().enumerate() {
                let mut exponent = 0.0;
                for (m, (_, map)) in stack.maps.iter().enumerate() {
                    exponent += mu[k][m] * map.data()[p];
                }
                let t = i0 * (-exponent).exp();
                for (m, o) in out.iter_mut().enumerate() {
                    *o -= mu[k][m] * t;
                }
            }
            out.iter_mut().for_each(|o| *o *= g);
            out
        })
        .collect();
    Ok(labels
        .iter()
        .enumerate()
        .map(|(m, l)| {
            let data = per_pixel.iter().map(|v| v[m]).collect();
            (l.to_string(), Image::from_vec(w, h, data).expect("sized"))
        })
        .collect())
}

/// Gradients with respect to the raw (pre-subtraction) maps.
#[derive(Debug, Clone, PartialEq)]
pub struct StackGradient {
    pub air: Image,
    pub body: Image,
    pub bones: Image,
    pub organs: BTreeMap<String, Image>,
}

impl StackGradient {
    pub fn for_label(&self, label: &str) -> Option<&Image> {
        match label {
            AIR => Some(&self.air),
            BODY => Some(&self.body),
            BONES => Some(&self.bones),
            other => self.organs.get(other),
        }
    }
}

/// Transpose of [`containment_subtract`] (clamping treated as identity).
pub fn backward_containment(effective_grads: &[(String, Image)], stack: &SceneStack) -> StackGradient {
    let (w, h) = stack.dims();
    let zero = Image::zeros(w, h);
    let get = |label: &str| {
        effective_grads
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, g)| g)
            .unwrap_or(&zero)
    };
    let g_air = get(AIR);
    let g_body = get(BODY);
    let combine = |a: &Image, b: &Image, sign: f64| Image::from_fn(w, h, |x, y| a.get(x, y) + sign * b.get(x, y));
    StackGradient {
        air: g_air.clone(),
        body: combine(g_body, g_air, -1.0),
        bones: combine(get(BONES), g_body, -1.0),
        organs: stack
            .organs
            .keys()
            .map(|k| (k.clone(), combine(get(k), g_body, -1.0)))
            .collect(),
    }
}

/// Full adjoint from the transmission image to the raw maps.
pub fn backward_transmission(
    image_grad: &Image,
    stack: &SceneStack,
    spectrum: &Spectrum,
    materials: &MaterialTable,
) -> Result<StackGradient> {
    let effective = containment_subtract(stack)?;
    let grads = backward_beer_lambert(image_grad, &effective, spectrum, materials)?;
    Ok(backward_containment(&grads, stack))
}
