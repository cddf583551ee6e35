//! Supervision losses for depth, shape, pose, joints and vertices.
//!
//! L1 terms are mean-reduced over every entry so their magnitudes do not
//! depend on the number of coefficients, joints or vertices.

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::body_model::{Pose, Shape, Vec3};
use crate::error::{Error, Result};

/// `|tz − tz_gt| / tz_gt`: depth error relative to the true depth.
pub fn l_depth(tz: f64, tz_gt: f64) -> Result<f64> {
    if !(tz_gt > 0.0) {
        return Err(Error::InvalidArgument(format!("ground-truth depth must be positive, got {tz_gt}")));
    }
    Ok((tz - tz_gt).abs() / tz_gt)
}

fn mean_abs(a: impl ExactSizeIterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    a.zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64
}

pub fn l_shape(beta: &Shape, beta_gt: &Shape) -> Result<f64> {
    if beta.len() != beta_gt.len() {
        return Err(Error::InvalidArgument(format!(
            "shape sizes differ: {} vs {}",
            beta.len(),
            beta_gt.len()
        )));
    }
    Ok(mean_abs(beta.coefficients().iter().copied(), beta_gt.coefficients().iter().copied()))
}

/// Angle of `R_pred · R_gtᵀ`, in [0, π].
pub fn geodesic_angle(pred: &Vec3, gt: &Vec3) -> f64 {
    let relative = UnitQuaternion::from_scaled_axis(*gt).inverse() * UnitQuaternion::from_scaled_axis(*pred);
    let q = relative.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Mean geodesic angle over joints, radians.
pub fn l_pose(theta: &Pose, theta_gt: &Pose) -> Result<f64> {
    if theta.len() != theta_gt.len() {
        return Err(Error::InvalidArgument(format!(
            "pose joint counts differ: {} vs {}",
            theta.len(),
            theta_gt.len()
        )));
    }
    if theta.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = theta.rotations().iter().zip(theta_gt.rotations()).map(|(p, g)| geodesic_angle(p, g)).sum();
    Ok(total / theta.len() as f64)
}

fn points_l1(a: &[Vec3], b: &[Vec3], what: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("{what} counts differ: {} vs {}", a.len(), b.len())));
    }
    let flat = |p: &[Vec3]| p.iter().flat_map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>();
    Ok(mean_abs(flat(a).into_iter(), flat(b).into_iter()))
}

/// Mean absolute coordinate difference between joint sets, meters.
pub fn l_joint(joints: &[Vec3], joints_gt: &[Vec3]) -> Result<f64> {
    points_l1(joints, joints_gt, "joint")
}

/// Mean absolute coordinate difference between vertex sets, meters.
pub fn l_vert(vertices: &[Vec3], vertices_gt: &[Vec3]) -> Result<f64> {
    points_l1(vertices, vertices_gt, "vertex")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_shape: f64,
    pub w_pose: f64,
    pub w_joint: f64,
    pub w_vert: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_shape: 1.0, w_pose: 1.0, w_joint: 5.0, w_vert: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_shape", self.w_shape), ("w_pose", self.w_pose), ("w_joint", self.w_joint), ("w_vert", self.w_vert)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub shape: f64,
    pub pose: f64,
    pub joint: f64,
    pub vert: f64,
}

pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    Ok(weights.w_shape * parts.shape + weights.w_pose * parts.pose + weights.w_joint * parts.joint + weights.w_vert * parts.vert)
}
