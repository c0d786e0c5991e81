pub mod gradcheck;
pub mod metrics;
pub mod register;
pub mod render;
pub mod synth;
