//! Differentiable transmission rendering of triangle meshes and 2D/3D shape-model registration.

pub mod compositor;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod pipeline;
pub mod rasterizer;
pub mod registration;
pub mod scenario;
pub mod shapemodel;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
