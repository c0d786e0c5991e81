use std::path::PathBuf;

use drr_core::geometry::load_mesh;
use drr_core::io::read_pfm;
use drr_core::registration::{hausdorff_distance, landmark_error, ngc, rotation_error_deg, translation_error_mm};
use drr_core::shapemodel::ShapeModel;
use serde::Serialize;

use crate::scene::read_params;
use crate::CliError;

#[derive(clap::Args)]
pub struct Args {
    /// Model archive; with `--params-a` and `--params-b` compares two instances of it.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    params_a: Option<PathBuf>,
    #[arg(long, requires = "model")]
    params_b: Option<PathBuf>,
    /// Two meshes (OBJ or binary STL) to compare directly.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    meshes: Option<Vec<PathBuf>>,
    /// Two PFM images to compare by NGC.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    images: Option<Vec<PathBuf>>,
}

#[derive(Default, Serialize)]
struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    hausdorff_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    landmark_error_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    translation_error_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation_error_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ngc: Option<f64>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut m = Metrics::default();
    let mut any = false;
    if let Some(dir) = &args.model {
        let (Some(pa), Some(pb)) = (&args.params_a, &args.params_b) else {
            return Err(CliError::usage("--model needs --params-a and --params-b".into()));
        };
        let model = ShapeModel::load(dir)?;
        let (a, b) = (read_params(pa)?, read_params(pb)?);
        model.check_params(&a, f64::INFINITY)?;
        model.check_params(&b, f64::INFINITY)?;
        m.hausdorff_mm = Some(hausdorff_distance(&model.full_mesh(&a), &model.full_mesh(&b))?);
        m.landmark_error_mm = Some(landmark_error(&model, &a, &model.landmark_positions(&b))?);
        m.translation_error_mm = Some(translation_error_mm(&a, &b));
        m.rotation_error_deg = Some(rotation_error_deg(&a, &b));
        any = true;
    }
    if let Some(paths) = &args.meshes {
        let a = load_mesh(&paths[0], "a")?;
        let b = load_mesh(&paths[1], "b")?;
        m.hausdorff_mm = Some(hausdorff_distance(&a, &b)?);
        any = true;
    }
    if let Some(paths) = &args.images {
        m.ngc = Some(ngc(&read_pfm(&paths[0])?, &read_pfm(&paths[1])?)?);
        any = true;
    }
    if !any {
        return Err(CliError::usage("nothing to compare: pass --model, --meshes or --images".into()));
    }
    println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
    Ok(())
}
