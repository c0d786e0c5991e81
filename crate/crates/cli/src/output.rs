//! Output files: float rasters, previews and the per-run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use drr_core::image::{Image, Mask};
use drr_core::io::{write_npy, write_pgm, write_pfm};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::scene(format!("{}: {e}", path.display()))
}

/// Collects written files so the manifest can list them.
pub struct OutputDir {
    pub root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        Ok(Self { root, written: Vec::new() })
    }

    fn track(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn pfm(&mut self, name: &str, img: &Image) -> Result<(), CliError> {
        let p = self.track(name);
        Ok(write_pfm(p, img)?)
    }

    pub fn npy(&mut self, name: &str, img: &Image) -> Result<(), CliError> {
        let p = self.track(name);
        Ok(write_npy(p, img)?)
    }

    pub fn pgm(&mut self, name: &str, mask: &Mask) -> Result<(), CliError> {
        let p = self.track(name);
        Ok(write_pgm(p, mask)?)
    }

    pub fn png_log(&mut self, name: &str, img: &Image) -> Result<(), CliError> {
        let p = self.track(name);
        let (w, h) = img.dims();
        let preview = log_preview(img);
        image::GrayImage::from_raw(w as u32, h as u32, preview)
            .expect("buffer matches dimensions")
            .save(&p)
            .map_err(|e| io_err(&p, e))
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.track(name);
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        self.text(name, &text)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// 8-bit preview of `ln(v)` stretched over the image's own positive range; non-positive
/// pixels map to black.
pub fn log_preview(img: &Image) -> Vec<u8> {
    let logs: Vec<f64> = img.data().iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NAN }).collect();
    let (lo, hi) = logs
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    logs.iter()
        .map(|&v| if v.is_finite() { (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

#[derive(Serialize)]
pub struct Versions {
    pub drr_cli: &'static str,
    pub drr_core: &'static str,
}

/// Everything needed to rerun a command: arguments, input hashes, seed and tool versions.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 over the command, its arguments and every input file's bytes.
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub versions: Versions,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, threads: usize, inputs: &[PathBuf]) -> Result<Self, CliError> {
        // the thread count does not change results, so it stays out of the hash
        let args: Vec<String> = std::env::args().skip(1).collect();
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        let mut skip_next = false;
        for a in &args {
            if std::mem::take(&mut skip_next) {
                continue;
            }
            if a == "--threads" {
                skip_next = true;
                continue;
            }
            if a.starts_with("--threads=") {
                continue;
            }
            hasher.update([0u8]);
            hasher.update(a.as_bytes());
        }
        let mut hashes = BTreeMap::new();
        for p in inputs {
            let bytes = read_input(p)?;
            hasher.update([1u8]);
            hasher.update(&bytes);
            hashes.insert(p.display().to_string(), sha256_hex(&bytes));
        }
        Ok(Self {
            command: command.into(),
            args,
            config_hash: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
            seed,
            threads,
            versions: Versions {
                drr_cli: env!("CARGO_PKG_VERSION"),
                drr_core: drr_core::VERSION,
            },
            inputs: hashes,
            outputs: Vec::new(),
        })
    }

    pub fn write(mut self, out: &mut OutputDir) -> Result<(), CliError> {
        self.outputs = out.written().to_vec();
        self.outputs.push("manifest.json".into());
        out.json("manifest.json", &self)
    }
}

/// File bytes, or the concatenated sorted contents for a directory (model archives).
fn read_input(p: &Path) -> Result<Vec<u8>, CliError> {
    if p.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| io_err(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|e| e.is_file())
            .collect();
        entries.sort();
        let mut bytes = Vec::new();
        for e in entries {
            bytes.extend_from_slice(e.file_name().unwrap_or_default().as_encoded_bytes());
            bytes.extend(std::fs::read(&e).map_err(|err| io_err(&e, err))?);
        }
        Ok(bytes)
    } else {
        std::fs::read(p).map_err(|e| io_err(p, e))
    }
}
