use std::path::PathBuf;

use drr_core::pipeline::render_meshes;

use crate::output::{Manifest, OutputDir};
use crate::scene::{read_params, Scene};
use crate::CliError;

#[derive(clap::Args)]
pub struct Args {
    /// Scene TOML.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory; defaults to the scene's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model pose and shape TOML, overriding the scene's.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Also write float32 NPY copies of every float raster.
    #[arg(long)]
    npy: bool,
}

pub fn run(args: Args, threads: usize) -> Result<(), CliError> {
    let scene = Scene::load(&args.scene)?;
    let params = args.params.as_deref().map(read_params).transpose()?;
    let meshes = scene.meshes(params.as_ref())?;
    let render = render_meshes(&meshes, &scene.cam, &scene.settings)?;

    let mut out = OutputDir::create(args.out.clone().unwrap_or_else(|| scene.output_dir()))?;
    let mut inputs = scene.inputs.clone();
    inputs.extend(args.params.iter().cloned());
    let manifest = Manifest::new("render", scene.config.seed, threads, &inputs)?;

    let image = &render.image.image;
    out.pfm("transmission.pfm", image)?;
    if args.npy {
        out.npy("transmission.npy", image)?;
    }
    out.png_log("transmission.png", image)?;
    for (i, pass) in render.passes.iter().enumerate() {
        let stem = format!("distance_{i:02}_{}", pass.map.label);
        out.pfm(&format!("{stem}.pfm"), &pass.map.values)?;
        if args.npy {
            out.npy(&format!("{stem}.npy"), &pass.map.values)?;
        }
        out.pgm(&format!("{stem}_valid.pgm"), &pass.map.valid)?;
        out.pgm(&format!("{stem}_repaired.pgm"), &pass.map.repaired)?;
        let invalid = pass.map.valid.data().iter().filter(|v| !**v).count();
        if invalid > 0 {
            eprintln!("warning: {stem}: {invalid} invalid pixels were repaired");
        }
    }
    manifest.write(&mut out)?;
    println!("wrote {} files to {}", out.written().len(), out.root.display());
    Ok(())
}
