//! Shared fixtures for the benchmarks.

use perspcam::body_model::{make_default_model, synthesize, Mesh, Pose, Shape, Vec3};
use perspcam::projection::CameraParams;
use perspcam::rasterizer::{rasterize, SilhouetteMask};

/// A posed default body.
pub fn posed_mesh() -> Mesh {
    let model = make_default_model(12, 6).expect("default model");
    let mut rot = vec![Vec3::zeros(); model.joint_count()];
    rot[0] = Vec3::new(0.0, 0.5, 0.0);
    rot[4] = Vec3::new(0.4, 0.0, 0.0);
    rot[10] = Vec3::new(0.0, 0.0, -0.5);
    synthesize(&model, &Shape::zeros(model.shape_count()), &Pose::new(rot).expect("pose")).expect("mesh")
}

/// Ground-truth camera used by the fixtures.
pub fn truth() -> CameraParams {
    CameraParams::new(220.0, 0.03, -0.02, 2.0)
}

/// Target silhouette of [`posed_mesh`] under [`truth`] at `size`×`size`.
pub fn target(mesh: &Mesh, size: u32) -> SilhouetteMask {
    let p = truth();
    let scaled = CameraParams { f_px: p.f_px * size as f64 / 256.0, ..p };
    rasterize(mesh, &scaled.camera(size, size).expect("camera"), &scaled.translation()).expect("render")
}
