//! Mesh and camera primitives.

pub mod camera;
pub mod mesh;
pub mod mesh_io;
pub mod primitives;
pub mod projection;

pub use camera::{DetectorGeometry, ProjectionCamera};
pub use mesh::{TriangleMesh, Vec3, WatertightReport};
pub use mesh_io::load_mesh;
pub use projection::{face_orientation_sign, project_mesh, ProjectedMesh, EPS_PERP};
