//! Parametric articulated body.
//!
//! A [`BodyModel`] maps shape coefficients and per-joint axis-angle rotations
//! to a posed vertex mesh and joint positions:
//!
//! 1. shaped template = template + Σ β_b · blendshape_b
//! 2. rest joints regressed from the shaped template
//! 3. linear blend skinning over the kinematic tree
//! 4. recentering so the pelvis joint (joint 0) sits at the origin
//!
//! The model is dimension-generic; [`make_default_model`] builds a small
//! procedural capsule humanoid with 16 joints and 10 shape directions.

mod io;
mod procedural;

pub use io::{load_model, model_from_json, model_to_json, read_obj, save_model, write_obj, MODEL_FORMAT_VERSION};
pub use procedural::{joint_names, make_default_model, DEFAULT_RINGS, DEFAULT_SEGMENTS, LOOKAT_SPINE_JOINTS};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    template: Vec<Vec3>,
    shape_dirs: Vec<Vec<Vec3>>,
    joint_regressor: Vec<Vec<f64>>,
    skin_weights: Vec<Vec<f64>>,
    parents: Vec<Option<usize>>,
    faces: Vec<[usize; 3]>,
    // Joints sorted so every parent precedes its children.
    order: Vec<usize>,
}

impl BodyModel {
    /// Builds a model after checking every structural invariant.
    pub fn new(
        template: Vec<Vec3>,
        shape_dirs: Vec<Vec<Vec3>>,
        joint_regressor: Vec<Vec<f64>>,
        skin_weights: Vec<Vec<f64>>,
        parents: Vec<Option<usize>>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let n = template.len();
        let k = parents.len();
        if n == 0 {
            return Err(Error::Validation("template_vertices is empty".into()));
        }
        if k == 0 {
            return Err(Error::Validation("kinematic tree has no joints".into()));
        }
        if let Some(i) = template.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Validation(format!("template_vertices row {i} is not finite")));
        }
        for (b, dir) in shape_dirs.iter().enumerate() {
            if dir.len() != n {
                return Err(Error::Validation(format!(
                    "shape_blendshapes[{b}] has {} vertices, expected {n}",
                    dir.len()
                )));
            }
            if dir.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
                return Err(Error::Validation(format!("shape_blendshapes[{b}] is not finite")));
            }
        }
        if joint_regressor.len() != k {
            return Err(Error::Validation(format!(
                "joint_regressor has {} rows, expected {k}",
                joint_regressor.len()
            )));
        }
        for (j, row) in joint_regressor.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!("joint_regressor row {j} has {} entries, expected {n}", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("joint_regressor row {j} sums to {sum}, expected 1")));
            }
        }
        if skin_weights.len() != n {
            return Err(Error::Validation(format!(
                "skinning_weights has {} rows, expected {n}",
                skin_weights.len()
            )));
        }
        for (i, row) in skin_weights.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Validation(format!("skinning_weights row {i} has {} entries, expected {k}", row.len())));
            }
            if let Some(w) = row.iter().find(|w| !(**w >= 0.0)) {
                return Err(Error::Validation(format!("skinning_weights row {i} has negative or non-finite weight {w}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("skinning_weights row {i} sums to {sum}, expected 1")));
            }
        }
        if let Some(f) = faces.iter().position(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::Validation(format!("face {f} references a vertex outside [0, {n})")));
        }
        let order = kinematic_order(&parents)?;
        Ok(BodyModel { template, shape_dirs, joint_regressor, skin_weights, parents, faces, order })
    }

    pub fn vertex_count(&self) -> usize {
        self.template.len()
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn shape_count(&self) -> usize {
        self.shape_dirs.len()
    }

    pub fn template(&self) -> &[Vec3] {
        &self.template
    }

    pub fn shape_dirs(&self) -> &[Vec<Vec3>] {
        &self.shape_dirs
    }

    pub fn joint_regressor(&self) -> &[Vec<f64>] {
        &self.joint_regressor
    }

    pub fn skin_weights(&self) -> &[Vec<f64>] {
        &self.skin_weights
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Template plus shape offsets, before posing.
    pub fn shaped_template(&self, shape: &Shape) -> Result<Vec<Vec3>> {
        if shape.len() != self.shape_count() {
            return Err(Error::InvalidArgument(format!(
                "shape has {} coefficients, model expects {}",
                shape.len(),
                self.shape_count()
            )));
        }
        let mut shaped = self.template.clone();
        for (dir, &coeff) in self.shape_dirs.iter().zip(shape.coefficients()) {
            if coeff == 0.0 {
                continue;
            }
            for (v, d) in shaped.iter_mut().zip(dir) {
                *v += coeff * d;
            }
        }
        Ok(shaped)
    }

    pub fn regress_joints(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        self.joint_regressor
            .iter()
            .map(|row| {
                row.iter()
                    .zip(vertices)
                    .filter(|(w, _)| **w != 0.0)
                    .fold(Vec3::zeros(), |acc, (w, v)| acc + *w * v)
            })
            .collect()
    }
}

/// Returns joints in parent-before-child order, rejecting cycles, orphans and
/// any root other than joint 0.
fn kinematic_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let k = parents.len();
    if parents[0].is_some() {
        return Err(Error::Validation("joint 0 must be the root (parent = none)".into()));
    }
    let mut children = vec![Vec::new(); k];
    for (j, p) in parents.iter().enumerate().skip(1) {
        match p {
            None => return Err(Error::Validation(format!("joint {j} has no parent; joint 0 must be the unique root"))),
            Some(p) if *p >= k => return Err(Error::Validation(format!("joint {j} has parent {p} outside [0, {k})"))),
            Some(p) => children[*p].push(j),
        }
    }
    let mut order = Vec::with_capacity(k);
    let mut stack = vec![0usize];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    if order.len() != k {
        return Err(Error::Validation("kinematic tree contains a cycle".into()));
    }
    Ok(order)
}

/// Unitless shape coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shape {
    beta: Vec<f64>,
}

impl Shape {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("shape coefficients must be finite".into()));
        }
        Ok(Shape { beta })
    }

    pub fn zeros(count: usize) -> Self {
        Shape { beta: vec![0.0; count] }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Per-joint axis-angle rotations; entry 0 is the root orientation.
///
/// Rotations are canonicalized on construction so every angle lies in [0, π].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec3>", into = "Vec<Vec3>")]
pub struct Pose {
    rotations: Vec<Vec3>,
}

impl Pose {
    pub fn new(rotations: Vec<Vec3>) -> Result<Self> {
        if rotations.iter().any(|r| !r.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument("pose rotations must be finite".into()));
        }
        Ok(Pose { rotations: rotations.into_iter().map(canonical_axis_angle).collect() })
    }

    pub fn zeros(joint_count: usize) -> Self {
        Pose { rotations: vec![Vec3::zeros(); joint_count] }
    }

    pub fn rotations(&self) -> &[Vec3] {
        &self.rotations
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn rotation_matrix(&self, joint: usize) -> Matrix3<f64> {
        Rotation3::new(self.rotations[joint]).into_inner()
    }

    /// Replaces the root orientation with `rotation · root`.
    pub fn with_root_premultiplied(&self, rotation: &Rotation3<f64>) -> Pose {
        let mut rotations = self.rotations.clone();
        let root = rotation * Rotation3::new(rotations[0]);
        rotations[0] = canonical_axis_angle(root.scaled_axis());
        Pose { rotations }
    }
}

impl TryFrom<Vec<Vec3>> for Pose {
    type Error = Error;

    fn try_from(value: Vec<Vec3>) -> Result<Self> {
        Pose::new(value)
    }
}

impl From<Pose> for Vec<Vec3> {
    fn from(value: Pose) -> Self {
        value.rotations
    }
}

/// Wraps the rotation angle into [0, π], flipping the axis when needed.
pub fn canonical_axis_angle(v: Vec3) -> Vec3 {
    let angle = v.norm();
    if angle <= std::f64::consts::PI {
        return v;
    }
    let axis = v / angle;
    let wrapped = angle.rem_euclid(std::f64::consts::TAU);
    if wrapped > std::f64::consts::PI {
        -axis * (std::f64::consts::TAU - wrapped)
    } else {
        axis * wrapped
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Empty for meshes loaded from OBJ files.
    pub joints: Vec<Vec3>,
}

impl Mesh {
    pub fn scaled(&self, factor: f64) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            faces: self.faces.clone(),
            joints: self.joints.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Rigid transform used by the skinning stage: `x ↦ rotation · x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

/// Linear blend skinning: each vertex is moved by the weight-blended joint transforms.
pub fn blend_vertices(rest: &[Vec3], weights: &[Vec<f64>], transforms: &[JointTransform]) -> Vec<Vec3> {
    rest.iter()
        .zip(weights)
        .map(|(v, row)| {
            let mut rot = Matrix3::zeros();
            let mut trans = Vec3::zeros();
            for (w, t) in row.iter().zip(transforms) {
                if *w != 0.0 {
                    rot += *w * t.rotation;
                    trans += *w * t.translation;
                }
            }
            rot * v + trans
        })
        .collect()
}

/// Synthesizes the posed mesh with the pelvis joint at the origin.
pub fn synthesize(model: &BodyModel, shape: &Shape, pose: &Pose) -> Result<Mesh> {
    if pose.len() != model.joint_count() {
        return Err(Error::InvalidArgument(format!(
            "pose has {} joint rotations, model expects {}",
            pose.len(),
            model.joint_count()
        )));
    }
    let shaped = model.shaped_template(shape)?;
    let rest_joints = model.regress_joints(&shaped);

    let k = model.joint_count();
    let mut global_rot = vec![Matrix3::identity(); k];
    let mut global_pos = vec![Vec3::zeros(); k];
    for &j in &model.order {
        let local = pose.rotation_matrix(j);
        match model.parents[j] {
            None => {
                global_rot[j] = local;
                global_pos[j] = rest_joints[j];
            }
            Some(p) => {
                global_rot[j] = global_rot[p] * local;
                global_pos[j] = global_rot[p] * (rest_joints[j] - rest_joints[p]) + global_pos[p];
            }
        }
    }
    let transforms: Vec<JointTransform> = (0..k)
        .map(|j| JointTransform {
            rotation: global_rot[j],
            translation: global_pos[j] - global_rot[j] * rest_joints[j],
        })
        .collect();

    let pelvis = global_pos[0];
    let vertices = blend_vertices(&shaped, &model.skin_weights, &transforms)
        .into_iter()
        .map(|v| v - pelvis)
        .collect();
    let joints = global_pos.iter().map(|j| j - pelvis).collect();
    Ok(Mesh { vertices, faces: model.faces.clone(), joints })
}
