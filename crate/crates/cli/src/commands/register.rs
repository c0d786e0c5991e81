use std::path::PathBuf;

use drr_core::io::read_pfm;
use drr_core::pipeline::render_model;
use drr_core::registration::{register_with_observer, GroundTruth, OptimizerConfig, RegistrationProblem, RegistrationReport, StopReason};
use drr_core::shapemodel::PoseShapeParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{Manifest, OutputDir};
use crate::scene::{read_params, Scene};
use crate::CliError;

#[derive(clap::Args)]
pub struct Args {
    /// Scene TOML with a `[model]` section.
    #[arg(long)]
    scene: PathBuf,
    /// Target transmission image (PFM); must match the detector size.
    #[arg(long)]
    target: PathBuf,
    /// Initial pose and shape TOML; defaults to the scene's model parameters.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Random uniform offset of the initial pose, e.g. "t=10,r=5": up to 10 mm and 5 degrees per axis.
    #[arg(long)]
    perturb: Option<String>,
    /// Start from the mean shape (all coefficients zero).
    #[arg(long)]
    reset_shape: bool,
    /// Known answer; enables Hausdorff, landmark and pose errors in the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Seed for the perturbation; defaults to the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Optimizer settings TOML (any subset of the fields).
    #[arg(long)]
    optimizer: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Output directory; defaults to the scene's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the simulated image and NGC map of every iteration as PFM.
    #[arg(long)]
    dump_iterations: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perturbation {
    pub translation_mm: f64,
    pub rotation_deg: f64,
}

pub fn parse_perturbation(text: &str) -> Result<Perturbation, CliError> {
    let mut p = Perturbation {
        translation_mm: 0.0,
        rotation_deg: 0.0,
    };
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--perturb: expected key=value, got '{part}'")))?;
        let v: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| CliError::usage(format!("--perturb: bad value '{value}'")))?;
        match key.trim() {
            "t" => p.translation_mm = v,
            "r" => p.rotation_deg = v,
            other => return Err(CliError::usage(format!("--perturb: unknown key '{other}' (use t and r)"))),
        }
    }
    Ok(p)
}

pub fn perturb(params: &PoseShapeParams, p: Perturbation, seed: u64) -> PoseShapeParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = params.clone();
    for k in 0..3 {
        out.translation[k] += rng.gen_range(-p.translation_mm..=p.translation_mm);
    }
    for k in 0..3 {
        out.rotation[k] += rng.gen_range(-p.rotation_deg..=p.rotation_deg).to_radians();
    }
    out
}

#[derive(Serialize)]
struct ReportFile<'a> {
    seed: u64,
    perturbation: Option<Perturbation>,
    truth: Option<&'a PoseShapeParams>,
    optimizer: &'a OptimizerConfig,
    #[serde(flatten)]
    report: &'a RegistrationReport,
}

pub fn run(args: Args, threads: usize) -> Result<(), CliError> {
    let scene = Scene::load(&args.scene)?;
    let (model, scene_params) = scene.require_model()?;
    let target = read_pfm(&args.target)?;
    let seed = args.seed.unwrap_or(scene.config.seed);
    let mut cfg = match &args.optimizer {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::scene(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::scene(format!("{}: {e}", p.display())))?
        }
        None => OptimizerConfig::default(),
    };
    if let Some(n) = args.max_iterations {
        cfg.max_iterations = n;
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let mut init = match &args.init {
        Some(p) => read_params(p)?,
        None => scene_params.clone(),
    };
    let perturbation = args.perturb.as_deref().map(parse_perturbation).transpose()?;
    if let Some(p) = perturbation {
        init = perturb(&init, p, seed);
    }
    if args.reset_shape {
        init.beta.iter_mut().for_each(|b| *b = 0.0);
    }
    let truth_params = args.truth.as_deref().map(read_params).transpose()?;
    let truth = truth_params.as_ref().map(|p| GroundTruth::from_params(model, p));

    let mut out = OutputDir::create(args.out.clone().unwrap_or_else(|| scene.output_dir()))?;
    let mut inputs = scene.inputs.clone();
    inputs.push(args.target.clone());
    inputs.extend(args.init.iter().cloned());
    inputs.extend(args.truth.iter().cloned());
    inputs.extend(args.optimizer.iter().cloned());
    let manifest = Manifest::new("register", seed, threads, &inputs)?;

    let problem = RegistrationProblem {
        model,
        target: &target,
        cam: &scene.cam,
        settings: &scene.settings,
    };
    let dump = args.dump_iterations;
    let mut dumps = Vec::new();
    let report = register_with_observer(&problem, &init, &cfg, truth.as_ref(), |it, eval| {
        if dump {
            dumps.push((it, eval.render.image.image.clone(), eval.ngc.ngc_map()));
        }
        Ok(())
    })?;
    for (it, image, ngc_map) in &dumps {
        out.pfm(&format!("iter_{it:04}_image.pfm"), image)?;
        out.pfm(&format!("iter_{it:04}_ngc.pfm"), ngc_map)?;
    }

    out.json(
        "report.json",
        &ReportFile {
            seed,
            perturbation,
            truth: truth_params.as_ref(),
            optimizer: &cfg,
            report: &report,
        },
    )?;
    out.text("final_params.toml", &report.final_params.to_toml_string())?;
    if report.stop_reason != StopReason::NonFiniteLoss {
        let fin = render_model(model, &report.final_params, &scene.cam, &scene.settings)?;
        out.pfm("final.pfm", &fin.image.image)?;
        out.png_log("final.png", &fin.image.image)?;
        let diff = fin.image.image.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs() + 1.0).collect();
        out.png_log("difference.png", &drr_core::image::Image::from_vec(target.width(), target.height(), diff)?)?;
    }
    manifest.write(&mut out)?;

    println!(
        "loss {:.6} -> {:.6} after {} evaluations ({:?})",
        report.initial_loss, report.final_loss, report.iterations, report.stop_reason
    );
    if let Some(m) = &report.metrics {
        println!("hausdorff {:.3} -> {:.3} mm", m.initial_hausdorff_mm, m.final_hausdorff_mm);
        if let (Some(a), Some(b)) = (m.initial_landmark_error_mm, m.final_landmark_error_mm) {
            println!("landmark error {a:.3} -> {b:.3} mm");
        }
    }
    if report.low_visibility {
        eprintln!("warning: only {:.0}% of the model projects onto the detector", 100.0 * report.visibility_fraction);
    }
    match report.stop_reason {
        StopReason::Converged => Ok(()),
        StopReason::IterationCap => Err(CliError {
            code: CliError::NO_CONVERGENCE,
            message: format!("no convergence within {} iterations", cfg.max_iterations),
        }),
        StopReason::NonFiniteLoss => Err(CliError::numeric(format!(
            "non-finite loss after {} iterations; trajectory written to report.json",
            report.iterations
        ))),
    }
}
