use serde::{Deserialize, Serialize};

use super::metrics::{hausdorff_distance, landmark_error, visibility_fraction};
use crate::error::{Error, Result};
use crate::geometry::{ProjectionCamera, TriangleMesh, Vec3};
use crate::image::Image;
use crate::pipeline::{model_loss_and_gradient, ModelEvaluation, RenderSettings};
use crate::shapemodel::{PoseShapeParams, ShapeModel, DEFAULT_BETA_MAX};

/// Below this visible fraction the report carries a low-visibility flag.
pub const MIN_VISIBILITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// mm per iteration along the normalised translation gradient.
    pub step_translation: f64,
    /// rad per iteration along the normalised rotation gradient.
    pub step_rotation: f64,
    /// Shape units per iteration along the normalised shape gradient.
    pub step_shape: f64,
    pub max_iterations: usize,
    pub window: usize,
    /// Relative loss improvement over `window` iterations below which the run has converged.
    pub tolerance: f64,
    pub beta_max: f64,
    /// Factor applied to all step sizes after `patience` iterations without a new best loss;
    /// the iterate then restarts from the best point. `1.0` keeps the steps constant.
    pub step_decay: f64,
    pub patience: usize,
    pub rule: StepRule,
}

/// How a gradient becomes a parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Each group (translation, rotation, shape) moves its full step along the group's unit
    /// gradient direction.
    Normalized,
    /// Per-coordinate Adam; the group step sizes act as learning rates. Weakly constrained
    /// coordinates (depth, out-of-plane rotation) are not slaved to the dominant ones.
    Adam { beta1: f64, beta2: f64 },
}

impl StepRule {
    pub fn adam() -> Self {
        StepRule::Adam { beta1: 0.9, beta2: 0.999 }
    }
}

#[derive(Debug, Clone)]
struct Stepper {
    rule: StepRule,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Stepper {
    fn new(rule: StepRule, n: usize) -> Self {
        Self { rule, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn reset(&mut self) {
        *self = Self::new(self.rule, self.m.len());
    }

    /// Update for `grad`, with `steps[i]` the step size of coordinate `i`'s group.
    fn step(&mut self, grad: &[f64], groups: &[(usize, usize, f64)]) -> Vec<f64> {
        match self.rule {
            StepRule::Normalized => {
                let mut out = vec![0.0; grad.len()];
                for &(lo, hi, step) in groups {
                    out[lo..hi].copy_from_slice(&normalized_step(&grad[lo..hi], step));
                }
                out
            }
            StepRule::Adam { beta1, beta2 } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                let mut out = vec![0.0; grad.len()];
                for &(lo, hi, step) in groups {
                    for i in lo..hi {
                        self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                        self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                        let denom = (self.v[i] / c2).sqrt();
                        out[i] = if denom > 0.0 { -step * (self.m[i] / c1) / denom } else { 0.0 };
                    }
                }
                out
            }
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_translation: 0.5,
            step_rotation: 0.005,
            step_shape: 0.05,
            max_iterations: 500,
            window: 20,
            tolerance: 1e-5,
            beta_max: DEFAULT_BETA_MAX,
            step_decay: 1.0,
            patience: 10,
            rule: StepRule::adam(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let steps = [self.step_translation, self.step_rotation, self.step_shape];
        if steps.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("step sizes must be positive".into()));
        }
        if self.max_iterations == 0 || self.window == 0 {
            return Err(Error::InvalidConfig("iteration cap and window must be >= 1".into()));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(Error::InvalidConfig("step decay must be in (0, 1]".into()));
        }
        if !(self.beta_max > 0.0) {
            return Err(Error::InvalidConfig("beta bound must be positive".into()));
        }
        Ok(())
    }
}

/// Known answer for a registration run, used only for reporting.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub mesh: TriangleMesh,
    pub landmarks: Vec<Vec3>,
    pub params: Option<PoseShapeParams>,
}

impl GroundTruth {
    pub fn from_params(model: &ShapeModel, params: &PoseShapeParams) -> Self {
        Self {
            mesh: model.full_mesh(params),
            landmarks: model.landmark_positions(params),
            params: Some(params.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationCap,
    NonFiniteLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    /// `[tx, ty, tz, rx, ry, rz, beta...]`
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub initial_hausdorff_mm: f64,
    pub initial_landmark_error_mm: Option<f64>,
    pub final_hausdorff_mm: f64,
    pub final_landmark_error_mm: Option<f64>,
    pub initial_translation_error_mm: Option<f64>,
    pub final_translation_error_mm: Option<f64>,
    pub initial_rotation_error_deg: Option<f64>,
    pub final_rotation_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub initial_params: PoseShapeParams,
    /// Lowest-loss iterate.
    pub final_params: PoseShapeParams,
    pub best_iteration: usize,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub visibility_fraction: f64,
    pub low_visibility: bool,
    pub metrics: Option<ErrorMetrics>,
    pub trajectory: Vec<IterationRecord>,
}

pub struct RegistrationProblem<'a> {
    pub model: &'a ShapeModel,
    pub target: &'a Image,
    pub cam: &'a ProjectionCamera,
    pub settings: &'a RenderSettings,
}

/// Geodesic angle between two rotations, degrees.
pub fn rotation_error_deg(a: &PoseShapeParams, b: &PoseShapeParams) -> f64 {
    let r = a.rotation_matrix() * b.rotation_matrix().transpose();
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

pub fn translation_error_mm(a: &PoseShapeParams, b: &PoseShapeParams) -> f64 {
    (Vec3::from(a.translation) - Vec3::from(b.translation)).norm()
}

fn clamp_beta(params: &mut PoseShapeParams, bound: f64) {
    params.beta.iter_mut().for_each(|b| *b = b.clamp(-bound, bound));
}

/// Scales a gradient group to `step` along its negative direction.
fn normalized_step(g: &[f64], step: f64) -> Vec<f64> {
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        g.iter().map(|v| -step * v / n).collect()
    } else {
        vec![0.0; g.len()]
    }
}

/// Gradient descent on `-NGC` over rigid pose and shape coefficients jointly.
pub fn register(
    problem: &RegistrationProblem<'_>,
    init: &PoseShapeParams,
    cfg: &OptimizerConfig,
    truth: Option<&GroundTruth>,
) -> Result<RegistrationReport> {
    register_with_observer(problem, init, cfg, truth, |_, _| Ok(()))
}

/// [`register`], calling `observe` with every evaluated iterate (for image dumps).
pub fn register_with_observer(
    problem: &RegistrationProblem<'_>,
    init: &PoseShapeParams,
    cfg: &OptimizerConfig,
    truth: Option<&GroundTruth>,
    mut observe: impl FnMut(usize, &ModelEvaluation) -> Result<()>,
) -> Result<RegistrationReport> {
    cfg.validate()?;
    let model = problem.model;
    if problem.target.dims() != problem.cam.dims() {
        return Err(Error::DimensionMismatch {
            expected: problem.cam.dims(),
            actual: problem.target.dims(),
        });
    }
    if init.beta.len() != model.num_modes() {
        return Err(Error::InvalidModel(format!(
            "expected {} shape coefficients, got {}",
            model.num_modes(),
            init.beta.len()
        )));
    }
    let mut params = init.clone();
    clamp_beta(&mut params, cfg.beta_max);
    let initial_params = params.clone();

    let visibility = visibility_fraction(
        model,
        truth.and_then(|t| t.params.as_ref()).unwrap_or(&params),
        problem.cam,
    );

    let mut trajectory: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(usize, f64, PoseShapeParams, Vec<f64>)> = None;
    let mut best_history: Vec<f64> = Vec::new();
    let mut step_scale = 1.0;
    let mut since_best = 0usize;
    let n_params = 6 + model.num_modes();
    let mut stepper = Stepper::new(cfg.rule, n_params);
    let mut stop_reason = StopReason::IterationCap;

    for it in 0..cfg.max_iterations {
        let eval = model_loss_and_gradient(model, &params, problem.target, problem.cam, problem.settings)?;
        observe(it, &eval)?;
        trajectory.push(IterationRecord {
            iteration: it,
            loss: eval.loss,
            params: params.to_vec(),
        });
        let grad = eval.gradient.to_vec();
        if !eval.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            stop_reason = StopReason::NonFiniteLoss;
            break;
        }
        if best.as_ref().is_none_or(|b| eval.loss < b.1) {
            best = Some((it, eval.loss, params.clone(), grad.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        best_history.push(best.as_ref().map_or(eval.loss, |b| b.1));
        if it >= cfg.window {
            // compare best-so-far values: a constant-length step oscillates around the trough
            let before = best_history[it - cfg.window];
            let improvement = (before - best_history[it]) / before.abs().max(1e-12);
            if improvement < cfg.tolerance {
                stop_reason = StopReason::Converged;
                break;
            }
        }
        if it + 1 == cfg.max_iterations {
            break;
        }
        let mut grad = grad;
        if cfg.step_decay < 1.0 && since_best >= cfg.patience {
            step_scale *= cfg.step_decay;
            since_best = 0;
            let (_, _, b_params, b_grad) = best.as_ref().expect("set above");
            params = b_params.clone();
            grad = b_grad.clone();
            stepper.reset();
        }
        let groups = [
            (0, 3, cfg.step_translation * step_scale),
            (3, 6, cfg.step_rotation * step_scale),
            (6, n_params, cfg.step_shape * step_scale),
        ];
        let delta = stepper.step(&grad, &groups);
        let mut flat = params.to_vec();
        flat.iter_mut().zip(&delta).for_each(|(p, d)| *p += d);
        params = PoseShapeParams::from_slice(&flat);
        clamp_beta(&mut params, cfg.beta_max);
    }

    let initial_loss = trajectory.first().map_or(f64::NAN, |r| r.loss);
    let (best_iteration, final_loss, final_params) = match best {
        Some((i, l, p, _)) => (i, l, p),
        None => (0, initial_loss, initial_params.clone()),
    };

    let metrics = match truth {
        Some(t) => {
            let initial_mesh = model.full_mesh(&initial_params);
            let final_mesh = model.full_mesh(&final_params);
            let lm = |p: &PoseShapeParams| {
                if t.landmarks.is_empty() {
                    Ok(None)
                } else {
                    landmark_error(model, p, &t.landmarks).map(Some)
                }
            };
            Some(ErrorMetrics {
                initial_hausdorff_mm: hausdorff_distance(&initial_mesh, &t.mesh)?,
                initial_landmark_error_mm: lm(&initial_params)?,
                final_hausdorff_mm: hausdorff_distance(&final_mesh, &t.mesh)?,
                final_landmark_error_mm: lm(&final_params)?,
                initial_translation_error_mm: t.params.as_ref().map(|g| translation_error_mm(&initial_params, g)),
                final_translation_error_mm: t.params.as_ref().map(|g| translation_error_mm(&final_params, g)),
                initial_rotation_error_deg: t.params.as_ref().map(|g| rotation_error_deg(&initial_params, g)),
                final_rotation_error_deg: t.params.as_ref().map(|g| rotation_error_deg(&final_params, g)),
            })
        }
        None => None,
    };

    Ok(RegistrationReport {
        initial_loss,
        final_loss,
        initial_params,
        final_params,
        best_iteration,
        iterations: trajectory.len(),
        converged: stop_reason == StopReason::Converged,
        stop_reason,
        visibility_fraction: visibility,
        low_visibility: visibility < MIN_VISIBILITY,
        metrics,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            step_rotation: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn normalized_step_has_fixed_length() {
        let s = normalized_step(&[3.0, 4.0], 0.5);
        assert!((s[0] + 0.3).abs() < 1e-15 && (s[1] + 0.4).abs() < 1e-15);
        assert_eq!(normalized_step(&[0.0, 0.0], 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn rotation_error_of_single_axis() {
        let a = PoseShapeParams::rest(0);
        let mut b = a.clone();
        b.rotation = [0.0, 5f64.to_radians(), 0.0];
        assert!((rotation_error_deg(&a, &b) - 5.0).abs() < 1e-9);
    }
}
