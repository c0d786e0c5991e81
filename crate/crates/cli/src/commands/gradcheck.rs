use std::path::PathBuf;

use clap::ValueEnum;
use drr_core::compositor::{air_distance_map, SceneStack, AIR, BODY};
use drr_core::gradcheck::{check_compositor, check_full, check_ngc, check_raster, spread_indices, CheckTable};
use drr_core::image::Image;
use drr_core::pipeline::{render_meshes, render_model};
use drr_core::scenario::Scenario;
use drr_core::shapemodel::PoseShapeParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{Manifest, OutputDir};
use crate::scene::{read_params, Scene};
use crate::CliError;

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Raster,
    Compositor,
    Ngc,
    Full,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    stage: Stage,
    /// Scene TOML; without it the built-in synthetic model and view are used.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Pose and shape TOML for the `full` stage and the rendered mesh.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Vertices (raster) or pixels per map (compositor, ngc) to check.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Also write the table as JSON plus a manifest into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Strictly nested random lengths for the scene's material labels.
fn random_stack(labels: &[String], rng: &mut ChaCha8Rng) -> SceneStack {
    let (w, h) = (8, 8);
    let inner: Vec<(String, Image)> = labels
        .iter()
        .filter(|l| *l != AIR && *l != BODY)
        .map(|l| (l.clone(), Image::from_fn(w, h, |_, _| rng.gen_range(1.0..15.0))))
        .collect();
    let body = Image::from_fn(w, h, |x, y| inner.iter().map(|(_, m)| m.get(x, y)).sum::<f64>() + rng.gen_range(1.0..60.0));
    let air = Image::from_fn(w, h, |x, y| body.get(x, y) + rng.gen_range(300.0..900.0));
    let mut stack = SceneStack::new(air);
    if labels.iter().any(|l| l == BODY) {
        stack.insert(BODY, body).expect("same dims");
    }
    for (l, m) in inner {
        stack.insert(&l, m).expect("same dims");
    }
    stack
}

pub fn run(args: Args, threads: usize) -> Result<(), CliError> {
    let scene = args.scene.as_deref().map(Scene::load).transpose()?;
    let synthetic = Scenario::synthetic()?;
    let (cam, settings) = match &scene {
        Some(s) => (&s.cam, &s.settings),
        None => (&synthetic.cam, &synthetic.settings),
    };
    let model = match &scene {
        Some(s) => s.model.as_ref().map(|(m, p)| (m, p.clone())),
        None => Some((&synthetic.model, PoseShapeParams::rest(synthetic.model.num_modes()))),
    };
    let params = match &args.params {
        Some(p) => Some(read_params(p)?),
        None => model.as_ref().map(|(_, p)| p.clone()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let table: CheckTable = match args.stage {
        Stage::Raster => {
            let meshes = match &scene {
                Some(s) => s.meshes(params.as_ref())?,
                None => synthetic.model.instantiate(params.as_ref().expect("synthetic params"))?,
            };
            let mesh = meshes
                .first()
                .ok_or_else(|| CliError::scene("scene has no meshes to check".into()))?;
            let vertices = spread_indices(mesh.num_vertices(), args.samples);
            check_raster(mesh, cam, settings.capacity, &vertices, args.seed)?
        }
        Stage::Compositor => {
            let labels: Vec<String> = settings.materials.labels().map(String::from).collect();
            let stack = random_stack(&labels, &mut rng);
            check_compositor(&stack, settings, args.samples, args.seed)?
        }
        Stage::Ngc => {
            let a = match (&scene, &model, &params) {
                (Some(s), _, _) if !s.objects.is_empty() || s.model.is_some() => {
                    render_meshes(&s.meshes(params.as_ref())?, cam, settings)?.image.image
                }
                (_, Some((m, _)), Some(p)) => render_model(m, p, cam, settings)?.image.image,
                _ => air_distance_map(cam).values,
            };
            let (w, h) = a.dims();
            let b = Image::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0));
            check_ngc(&a, &b, args.samples, args.seed)?
        }
        Stage::Full => {
            let (m, _) = model.ok_or_else(|| CliError::scene("stage full needs a model".into()))?;
            let p = params.expect("model implies params");
            let mut t = p.clone();
            for k in 0..3 {
                t.translation[k] += rng.gen_range(-3.0..3.0);
                t.rotation[k] += rng.gen_range(-2.0f64..2.0).to_radians();
            }
            t.beta.iter_mut().for_each(|b| *b = (*b + rng.gen_range(-0.5..0.5)).clamp(-2.0, 2.0));
            let target = render_model(m, &t, cam, settings)?.image.image;
            check_full(m, &p, &target, cam, settings)?
        }
    };

    print!("{}", table.render());
    if let Some(dir) = args.out {
        let mut out = OutputDir::create(dir)?;
        let mut inputs: Vec<PathBuf> = scene.as_ref().map(|s| s.inputs.clone()).unwrap_or_default();
        inputs.extend(args.params.iter().cloned());
        let manifest = Manifest::new("gradcheck", args.seed, threads, &inputs)?;
        out.json("gradcheck.json", &table)?;
        manifest.write(&mut out)?;
    }
    if table.passed() {
        Ok(())
    } else {
        Err(CliError::numeric(format!(
            "{} of {} coordinates exceed the {} tolerance {:.0e}",
            table.count(drr_core::gradcheck::CheckStatus::Fail),
            table.entries.len(),
            table.stage,
            table.tolerance
        )))
    }
}
