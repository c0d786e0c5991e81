use drr_core::registration::{register, GroundTruth, OptimizerConfig, RegistrationProblem, StopReason};
use drr_core::scenario::Scenario;
use drr_core::shapemodel::PoseShapeParams;
use drr_core::Error;

#[test]
fn truth_is_a_fixed_point() {
    let sc = Scenario::synthetic().unwrap();
    let truth = PoseShapeParams::rest(2).with_translation([2.0, -1.0, 3.0]);
    let target = drr_core::pipeline::render_model(&sc.model, &truth, &sc.cam, &sc.settings).unwrap().image.image;
    let problem = RegistrationProblem {
        model: &sc.model,
        target: &target,
        cam: &sc.cam,
        settings: &sc.settings,
    };
    let cfg = OptimizerConfig {
        max_iterations: 30,
        ..OptimizerConfig::default()
    };
    let report = register(&problem, &truth, &cfg, Some(&GroundTruth::from_params(&sc.model, &truth))).unwrap();
    assert!((report.initial_loss + 1.0).abs() < 1e-9);
    assert_eq!(report.best_iteration, 0);
    let m = report.metrics.unwrap();
    assert!(m.final_translation_error_mm.unwrap() < 1e-9);
    assert!(!report.low_visibility);
}

#[test]
fn perturbed_pose_recovers() {
    let sc = Scenario::synthetic().unwrap();
    let truth = PoseShapeParams {
        beta: vec![0.5, -0.3],
        rotation: [0.03, -0.05, 0.1],
        translation: [1.0, 2.0, -3.0],
    };
    let target = drr_core::pipeline::render_model(&sc.model, &truth, &sc.cam, &sc.settings).unwrap().image.image;
    let mut init = truth.clone();
    init.translation = [7.0, -4.0, 3.0];
    init.rotation = [0.08, -0.1, 0.05];
    init.beta = vec![0.0, 0.0];
    let problem = RegistrationProblem {
        model: &sc.model,
        target: &target,
        cam: &sc.cam,
        settings: &sc.settings,
    };
    let report = register(&problem, &init, &OptimizerConfig::default(), Some(&GroundTruth::from_params(&sc.model, &truth))).unwrap();
    let m = report.metrics.unwrap();
    assert!(report.final_loss < report.initial_loss);
    assert!(m.final_hausdorff_mm < m.initial_hausdorff_mm);
    assert!(m.final_translation_error_mm.unwrap() < 2.0, "{m:?}");
    assert_ne!(report.stop_reason, StopReason::NonFiniteLoss);
    assert_eq!(report.trajectory.len(), report.iterations);
}

#[test]
fn target_size_must_match_camera() {
    let sc = Scenario::synthetic().unwrap();
    let target = drr_core::image::Image::zeros(10, 10);
    let problem = RegistrationProblem {
        model: &sc.model,
        target: &target,
        cam: &sc.cam,
        settings: &sc.settings,
    };
    let err = register(&problem, &PoseShapeParams::rest(2), &OptimizerConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
}

#[test]
fn object_mostly_outside_view_is_flagged() {
    let sc = Scenario::synthetic().unwrap();
    let far = PoseShapeParams::rest(2).with_translation([75.0, 0.0, 0.0]);
    let target = drr_core::pipeline::render_model(&sc.model, &far, &sc.cam, &sc.settings).unwrap().image.image;
    let problem = RegistrationProblem {
        model: &sc.model,
        target: &target,
        cam: &sc.cam,
        settings: &sc.settings,
    };
    let cfg = OptimizerConfig {
        max_iterations: 3,
        ..OptimizerConfig::default()
    };
    let report = register(&problem, &far, &cfg, None).unwrap();
    assert!(report.low_visibility, "visibility {}", report.visibility_fraction);
}
