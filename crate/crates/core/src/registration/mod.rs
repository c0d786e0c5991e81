//! Similarity, error metrics and the gradient-descent registration loop.

pub mod metrics;
pub mod ngc;
pub mod optimizer;

pub use metrics::{hausdorff_distance, landmark_error, visibility_fraction};
pub use ngc::{ngc, ngc_forward, NgcEvaluation, NgcLoss};
pub use optimizer::{
    register, register_with_observer, rotation_error_deg, translation_error_mm, ErrorMetrics, GroundTruth,
    IterationRecord, OptimizerConfig, RegistrationProblem, RegistrationReport, StopReason,
};
