#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Perspective camera recovery for human meshes.

pub mod body_model;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod projection;
pub mod precision;
pub mod rasterizer;
pub mod scenegen;
pub mod solver;

pub use body_model::{synthesize, BodyModel, Mesh, Pose, Shape, Vec3};
pub use error::{Error, Result};
pub use projection::{CameraParams, PerspectiveCamera, Translation};
pub use rasterizer::SilhouetteMask;
pub use solver::{solve_camera, CameraSolveConfig, CameraSolveResult};
