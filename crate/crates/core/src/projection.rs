//! Pinhole perspective and weak-perspective projection, plus a scalar measure
//! of how far a perspective image departs from its best orthographic fit.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::body_model::{Mesh, Vec3};
use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Points closer than this to the camera plane are treated as behind it.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveCamera {
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl PerspectiveCamera {
    pub fn new(focal_px: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = PerspectiveCamera { focal_px, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// Principal point at the image center.
    pub fn centered(focal_px: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(focal_px, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            return Err(Error::InvalidArgument(format!("focal length must be finite and positive, got {}", self.focal_px)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidArgument(format!("principal point ({}, {}) lies outside the image", self.cx, self.cy)));
        }
        Ok(())
    }

    pub fn with_focal(&self, focal_px: f64) -> Self {
        PerspectiveCamera { focal_px, ..*self }
    }

    pub fn principal(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }
}

/// Position of the pelvis in camera coordinates, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Translation {
    pub fn new(tx: f64, ty: f64, tz: f64) -> Self {
        Translation { tx, ty, tz }
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.tx, self.ty, self.tz)
    }

    pub fn from_vector(v: &Vec3) -> Self {
        Translation { tx: v.x, ty: v.y, tz: v.z }
    }
}

/// Free camera parameters of the alignment problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub f_px: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl CameraParams {
    pub fn new(f_px: f64, tx: f64, ty: f64, tz: f64) -> Self {
        CameraParams { f_px, tx, ty, tz }
    }

    pub fn is_finite(&self) -> bool {
        [self.f_px, self.tx, self.ty, self.tz].iter().all(|v| v.is_finite())
    }

    /// Camera with a centered principal point.
    pub fn camera(&self, width: u32, height: u32) -> Result<PerspectiveCamera> {
        PerspectiveCamera::centered(self.f_px, width, height)
    }

    pub fn translation(&self) -> Translation {
        Translation::new(self.tx, self.ty, self.tz)
    }
}

/// Weak-perspective camera: `(u, v) = s·(x, y) + (tx, ty)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthographicCamera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

/// `(u, v) = f·((x+Tx)/(z+Tz), (y+Ty)/(z+Tz)) + (cx, cy)`.
pub fn project_perspective(points: &[Vec3], cam: &PerspectiveCamera, t: &Translation) -> Result<Vec<Vec2>> {
    let mut behind = Vec::new();
    let projected = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let z = p.z + t.tz;
            if !(z > MIN_DEPTH) {
                behind.push(i);
            }
            Vec2::new(cam.focal_px * (p.x + t.tx) / z + cam.cx, cam.focal_px * (p.y + t.ty) / z + cam.cy)
        })
        .collect();
    if behind.is_empty() {
        Ok(projected)
    } else {
        Err(Error::BehindCamera { indices: behind })
    }
}

pub fn project_orthographic(points: &[Vec3], cam: &OrthographicCamera) -> Vec<Vec2> {
    points.iter().map(|p| Vec2::new(cam.scale * p.x + cam.tx, cam.scale * p.y + cam.ty)).collect()
}

/// Least-squares weak-perspective fit of `image` to the `(x, y)` of `points`.
pub fn fit_orthographic(points: &[Vec3], image: &[Vec2]) -> Result<OrthographicCamera> {
    if points.len() != image.len() || points.is_empty() {
        return Err(Error::InvalidArgument("fit_orthographic needs matching, non-empty point sets".into()));
    }
    let n = points.len() as f64;
    let mean_xy = points.iter().fold(Vec2::zeros(), |acc, p| acc + p.xy()) / n;
    let mean_uv = image.iter().fold(Vec2::zeros(), |acc, q| acc + q) / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (p, q) in points.iter().zip(image) {
        let a = p.xy() - mean_xy;
        num += a.dot(&(q - mean_uv));
        den += a.norm_squared();
    }
    if den <= 0.0 {
        return Err(Error::DegenerateGeometry("all points share the same (x, y)".into()));
    }
    let scale = num / den;
    let t = mean_uv - scale * mean_xy;
    Ok(OrthographicCamera { scale, tx: t.x, ty: t.y })
}

/// RMS residual of the best orthographic fit to the perspective image of
/// `mesh` at `T = (0, 0, tz)`, divided by the RMS radius of that image.
///
/// Uses a unit focal length; the ratio does not depend on it.
pub fn distortion_magnitude(mesh: &Mesh, tz: f64) -> Result<f64> {
    let cam = PerspectiveCamera { focal_px: 1.0, cx: 0.0, cy: 0.0, width: 1, height: 1 };
    let image = project_perspective(&mesh.vertices, &cam, &Translation::new(0.0, 0.0, tz))?;
    let n = image.len() as f64;
    let mean = image.iter().fold(Vec2::zeros(), |acc, q| acc + q) / n;

    // Spread of the projected points; both eigenvalues must be non-trivial.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for q in &image {
        let d = q - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    if image.len() < 3 || !(trace > 0.0) || det <= 1e-12 * trace * trace {
        return Err(Error::DegenerateGeometry("projected mesh has fewer than three non-collinear points".into()));
    }

    let ortho = fit_orthographic(&mesh.vertices, &image)?;
    let fitted = project_orthographic(&mesh.vertices, &ortho);
    let residual: f64 = image.iter().zip(&fitted).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok((residual / trace).sqrt())
}

/// Focal length heuristic `f = s·h·Tz/2` from a normalized weak-perspective scale.
pub fn zolly_heuristic_focal(scale: f64, image_height: f64, tz: f64) -> Result<f64> {
    for (name, v) in [("scale", scale), ("image height", image_height), ("tz", tz)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be finite and positive, got {v}")));
        }
    }
    Ok(scale * image_height * tz / 2.0)
}
