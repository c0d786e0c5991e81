use std::path::{Path, PathBuf};

use drr_core::compositor::{AIR, BODY, BONES};
use drr_core::geometry::camera::format_matrix;
use drr_core::pipeline::render_model;
use drr_core::scenario::{default_materials, default_spectrum, ViewGeometry};
use drr_core::shapemodel::{build_synthetic_model, PoseShapeParams, SyntheticModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{Manifest, OutputDir};
use crate::scene::Scene;
use crate::CliError;

#[derive(clap::Args)]
pub struct Args {
    /// Output directory. Holds the model archive itself, or with `--demo-scene` a scene
    /// directory with the archive under `model/`.
    #[arg(long)]
    out: PathBuf,
    /// Model configuration TOML (any subset of the fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write a camera, spectrum, material tables, a seeded ground-truth pose and the
    /// target image rendered at it.
    #[arg(long)]
    demo_scene: bool,
    /// Seed for the demo ground truth.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Seeded ground truth: shape in [-1, 1], rotation within 0.2 rad and translation within 5 mm per axis.
pub fn random_truth(num_modes: usize, seed: u64) -> PoseShapeParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PoseShapeParams {
        beta: (0..num_modes).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        rotation: [0, 1, 2].map(|_| rng.gen_range(-0.2..0.2)),
        translation: [0, 1, 2].map(|_| rng.gen_range(-5.0..5.0)),
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::scene(format!("{}: {e}", path.display())))
}

pub fn run(args: Args, threads: usize) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::scene(format!("{}: {e}", p.display())))?;
            SyntheticModelConfig::from_toml_str(&text)?
        }
        None => SyntheticModelConfig::default(),
    };
    let model = build_synthetic_model(&cfg)?;
    let inputs: Vec<PathBuf> = args.config.iter().cloned().collect();
    let manifest = Manifest::new("synth-model", args.seed, threads, &inputs)?;
    if !args.demo_scene {
        model.save(&args.out)?;
        let mut out = OutputDir::create(args.out.clone())?;
        out.text("config.toml", &toml::to_string(&cfg).expect("config serializes"))?;
        manifest.write(&mut out)?;
        println!("wrote model archive to {}", args.out.display());
        return Ok(());
    }

    let root = args.out;
    model.save(root.join("model"))?;
    let view = ViewGeometry::default();
    let cam = view.camera()?;
    let materials = default_materials();
    let mut out = OutputDir::create(root.clone())?;
    out.text("model_config.toml", &toml::to_string(&cfg).expect("config serializes"))?;
    out.text("P.txt", &format_matrix(cam.matrix()))?;
    out.text("detector.toml", &cam.detector().to_toml_string())?;
    out.text("spectrum.csv", &default_spectrum().to_csv())?;
    for label in [AIR, BODY, BONES] {
        out.text(&format!("mu_{label}.csv"), &materials.to_csv(label).expect("default table"))?;
    }
    let truth = random_truth(model.num_modes(), args.seed);
    out.text("truth.toml", &truth.to_toml_string())?;
    let scene_text = format!(
        "seed = {seed}\noutput_dir = \"out\"\nspectrum = \"spectrum.csv\"\n\n[camera]\nmatrix = \"P.txt\"\n\
         detector = \"detector.toml\"\n\n[materials]\nair = \"mu_air.csv\"\nbody = \"mu_body.csv\"\n\
         bones = \"mu_bones.csv\"\n\n[model]\npath = \"model\"\nparams = \"truth.toml\"\n",
        seed = args.seed
    );
    write(&root.join("scene.toml"), &scene_text)?;
    // render through the files just written so the target matches what `register` will load
    let scene = Scene::load(&root.join("scene.toml"))?;
    let (m, p) = scene.require_model()?;
    let target = render_model(m, p, &scene.cam, &scene.settings)?.image.image;
    out.pfm("target.pfm", &target)?;
    out.png_log("target.png", &target)?;
    manifest.write(&mut out)?;
    println!("wrote demo scene to {}", root.display());
    Ok(())
}
