use std::f64::consts::TAU;

use super::{BodyModel, Vec3};
use crate::error::{Error, Result};

pub const DEFAULT_SEGMENTS: usize = 12;
pub const DEFAULT_RINGS: usize = 6;

/// Spine joints (pelvis up to head) used as look-at targets by the scene generator.
pub const LOOKAT_SPINE_JOINTS: [usize; 6] = [0, 3, 6, 9, 12, 15];

const JOINT_NAMES: [&str; 16] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_shoulder",
    "right_shoulder",
    "neck",
    "left_elbow",
    "right_elbow",
    "head",
];

const PARENTS: [Option<usize>; 16] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(9),
    Some(9),
    Some(9),
    Some(10),
    Some(11),
    Some(12),
];

pub fn joint_names() -> &'static [&'static str] {
    &JOINT_NAMES
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Part {
    Torso,
    Head,
    Leg,
    Arm,
}

/// One capsule: an elliptic tube from `start` to `end` closed by two apex vertices.
struct Tube {
    start: Vec3,
    end: Vec3,
    radius: (f64, f64),
    part: Part,
    side: f64,
    // Piecewise-linear skinning knots (joint, t) along the tube axis.
    skin: &'static [(usize, f64)],
}

struct VertexInfo {
    part: Part,
    side: f64,
    radial: Vec3,
}

const HIP_Y: f64 = -0.08;
const SHOULDER: Vec3 = Vec3::new(0.18, 0.48, 0.0);
const TORSO_BOTTOM: f64 = -0.10;
const TORSO_TOP: f64 = 0.54;
const HEAD_BOTTOM: f64 = 0.56;
const HEAD_TOP: f64 = 0.80;

const fn torso_t(y: f64) -> f64 {
    (y - TORSO_BOTTOM) / (TORSO_TOP - TORSO_BOTTOM)
}

const TORSO_SKIN: [(usize, f64); 5] =
    [(0, torso_t(0.0)), (3, torso_t(0.12)), (6, torso_t(0.25)), (9, torso_t(0.38)), (12, torso_t(0.52))];
const HEAD_SKIN: [(usize, f64); 2] = [(12, 0.0), (15, 0.25)];
const L_THIGH_SKIN: [(usize, f64); 3] = [(1, 0.0), (1, 0.75), (4, 1.25)];
const R_THIGH_SKIN: [(usize, f64); 3] = [(2, 0.0), (2, 0.75), (5, 1.25)];
const ANKLE_T: f64 = 0.40 / 0.45;
const L_SHIN_SKIN: [(usize, f64); 3] = [(4, 0.0), (4, 0.6), (7, ANKLE_T)];
const R_SHIN_SKIN: [(usize, f64); 3] = [(5, 0.0), (5, 0.6), (8, ANKLE_T)];
const L_UPPER_SKIN: [(usize, f64); 3] = [(10, 0.0), (10, 0.75), (13, 1.25)];
const R_UPPER_SKIN: [(usize, f64); 3] = [(11, 0.0), (11, 0.75), (14, 1.25)];
const L_FORE_SKIN: [(usize, f64); 1] = [(13, 0.0)];
const R_FORE_SKIN: [(usize, f64); 1] = [(14, 0.0)];

fn tubes() -> Vec<Tube> {
    let v = Vec3::new;
    let mut tubes = vec![
        Tube {
            start: v(0.0, TORSO_BOTTOM, 0.0),
            end: v(0.0, TORSO_TOP, 0.0),
            radius: (0.15, 0.10),
            part: Part::Torso,
            side: 0.0,
            skin: &TORSO_SKIN,
        },
        Tube {
            start: v(0.0, HEAD_BOTTOM, 0.0),
            end: v(0.0, HEAD_TOP, 0.0),
            radius: (0.095, 0.095),
            part: Part::Head,
            side: 0.0,
            skin: &HEAD_SKIN,
        },
    ];
    for side in [1.0, -1.0] {
        let left = side > 0.0;
        tubes.push(Tube {
            start: v(0.09 * side, HIP_Y, 0.0),
            end: v(0.10 * side, -0.50, 0.0),
            radius: (0.075, 0.075),
            part: Part::Leg,
            side,
            skin: if left { &L_THIGH_SKIN } else { &R_THIGH_SKIN },
        });
        tubes.push(Tube {
            start: v(0.10 * side, -0.50, 0.0),
            end: v(0.10 * side, -0.95, 0.0),
            radius: (0.055, 0.055),
            part: Part::Leg,
            side,
            skin: if left { &L_SHIN_SKIN } else { &R_SHIN_SKIN },
        });
        tubes.push(Tube {
            start: v(SHOULDER.x * side, SHOULDER.y, 0.0),
            end: v(0.32 * side, 0.24, 0.0),
            radius: (0.045, 0.045),
            part: Part::Arm,
            side,
            skin: if left { &L_UPPER_SKIN } else { &R_UPPER_SKIN },
        });
        tubes.push(Tube {
            start: v(0.32 * side, 0.24, 0.0),
            end: v(0.44 * side, 0.0, 0.0),
            radius: (0.038, 0.038),
            part: Part::Arm,
            side,
            skin: if left { &L_FORE_SKIN } else { &R_FORE_SKIN },
        });
    }
    tubes
}

// Tube index and axis parameter whose cross-section centroid defines each joint.
const JOINT_ANCHORS: [(usize, f64); 16] = [
    (0, torso_t(0.0)),
    (2, 0.0),
    (6, 0.0),
    (0, torso_t(0.12)),
    (2, 1.0),
    (6, 1.0),
    (0, torso_t(0.25)),
    (3, ANKLE_T),
    (7, ANKLE_T),
    (0, torso_t(0.38)),
    (4, 0.0),
    (8, 0.0),
    (0, torso_t(0.52)),
    (4, 1.0),
    (8, 1.0),
    (1, 0.25),
];

fn skin_weights_at(knots: &[(usize, f64)], t: f64, joint_count: usize) -> Vec<f64> {
    let mut w = vec![0.0; joint_count];
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if knots.len() == 1 || t <= first.1 {
        w[first.0] = 1.0;
    } else if t >= last.1 {
        w[last.0] = 1.0;
    } else {
        let i = knots.windows(2).position(|p| t >= p[0].1 && t <= p[1].1).unwrap();
        let (a, b) = (knots[i], knots[i + 1]);
        let lambda = (t - a.1) / (b.1 - a.1);
        w[a.0] += 1.0 - lambda;
        w[b.0] += lambda;
    }
    w
}

/// Builds the procedural capsule humanoid (16 joints, 10 shape directions).
///
/// `segments` is the number of vertices around each tube cross-section and
/// `rings` the number of cross-sections along each tube. Output is a pure
/// function of the two arguments.
pub fn make_default_model(segments: usize, rings: usize) -> Result<BodyModel> {
    if segments < 3 {
        return Err(Error::InvalidArgument(format!("segments must be >= 3, got {segments}")));
    }
    if rings < 2 {
        return Err(Error::InvalidArgument(format!("rings must be >= 2, got {rings}")));
    }
    let k = JOINT_NAMES.len();
    let tubes = tubes();

    let mut template = Vec::new();
    let mut info = Vec::new();
    let mut weights = Vec::new();
    let mut faces = Vec::new();
    // First vertex index of each tube's ring block.
    let mut ring_base = Vec::with_capacity(tubes.len());

    for tube in &tubes {
        let axis_vec = tube.end - tube.start;
        let axis = axis_vec.normalize();
        let reference = if axis.x.abs() > 0.9 { Vec3::z() } else { Vec3::x() };
        let e1 = (reference - reference.dot(&axis) * axis).normalize();
        let e2 = axis.cross(&e1);
        let base = template.len();
        ring_base.push(base);

        for r in 0..rings {
            let t = r as f64 / (rings - 1) as f64;
            let center = tube.start + t * axis_vec;
            let w = skin_weights_at(tube.skin, t, k);
            for s in 0..segments {
                let phi = TAU * s as f64 / segments as f64;
                let radial = tube.radius.0 * phi.cos() * e1 + tube.radius.1 * phi.sin() * e2;
                template.push(center + radial);
                info.push(VertexInfo { part: tube.part, side: tube.side, radial });
                weights.push(w.clone());
            }
        }
        let cap = 0.8 * tube.radius.0.min(tube.radius.1);
        let cap_len = cap / axis_vec.norm();
        for (apex, t) in [(tube.start - cap * axis, -cap_len), (tube.end + cap * axis, 1.0 + cap_len)] {
            template.push(apex);
            info.push(VertexInfo { part: tube.part, side: tube.side, radial: Vec3::zeros() });
            weights.push(skin_weights_at(tube.skin, t, k));
        }
        let apex_start = base + rings * segments;
        let apex_end = apex_start + 1;

        let idx = |r: usize, s: usize| base + r * segments + (s % segments);
        for r in 0..rings - 1 {
            for s in 0..segments {
                faces.push([idx(r, s), idx(r, s + 1), idx(r + 1, s + 1)]);
                faces.push([idx(r, s), idx(r + 1, s + 1), idx(r + 1, s)]);
            }
        }
        for s in 0..segments {
            faces.push([apex_start, idx(0, s + 1), idx(0, s)]);
            faces.push([apex_end, idx(rings - 1, s), idx(rings - 1, s + 1)]);
        }
    }

    let n = template.len();
    let mut regressor = vec![vec![0.0; n]; k];
    for (j, &(tube, t)) in JOINT_ANCHORS.iter().enumerate() {
        let pos = t * (rings - 1) as f64;
        let lo = (pos.floor() as usize).min(rings - 2);
        let lambda = pos - lo as f64;
        let base = ring_base[tube];
        for s in 0..segments {
            regressor[j][base + lo * segments + s] += (1.0 - lambda) / segments as f64;
            regressor[j][base + (lo + 1) * segments + s] += lambda / segments as f64;
        }
    }

    let shape_dirs = blendshapes(&template, &info);
    let mut model = BodyModel::new(template, shape_dirs, regressor, weights, PARENTS.to_vec(), faces)?;
    // Put the rest pelvis exactly at the origin.
    let pelvis = model.regress_joints(&model.template)[0];
    for v in &mut model.template {
        *v -= pelvis;
    }
    Ok(model)
}

fn blendshapes(template: &[Vec3], info: &[VertexInfo]) -> Vec<Vec<Vec3>> {
    let v = Vec3::new;
    let dir = |f: &dyn Fn(&Vec3, &VertexInfo) -> Vec3| -> Vec<Vec3> {
        template.iter().zip(info).map(|(p, i)| f(p, i)).collect()
    };
    let shoulder = |side: f64| v(SHOULDER.x * side, SHOULDER.y, 0.0);
    vec![
        // overall scale
        dir(&|p, _| 0.05 * p),
        // leg length
        dir(&|p, i| if i.part == Part::Leg { v(0.0, 0.06 * (p.y - HIP_Y), 0.0) } else { Vec3::zeros() }),
        // arm length
        dir(&|p, i| if i.part == Part::Arm { 0.08 * (p - shoulder(i.side)) } else { Vec3::zeros() }),
        // torso width, arms follow the shoulders
        dir(&|p, i| match i.part {
            Part::Torso => v(0.10 * p.x, 0.0, 0.0),
            Part::Arm => v(0.10 * shoulder(i.side).x, 0.0, 0.0),
            _ => Vec3::zeros(),
        }),
        // torso depth
        dir(&|p, i| if i.part == Part::Torso { v(0.0, 0.0, 0.15 * p.z) } else { Vec3::zeros() }),
        // limb girth
        dir(&|_, i| if matches!(i.part, Part::Arm | Part::Leg) { 0.12 * i.radial } else { Vec3::zeros() }),
        // head size
        dir(&|p, i| {
            if i.part == Part::Head {
                0.10 * (p - v(0.0, 0.5 * (HEAD_BOTTOM + HEAD_TOP), 0.0))
            } else {
                Vec3::zeros()
            }
        }),
        // torso length, head and arms ride along
        dir(&|p, i| match i.part {
            Part::Torso => v(0.0, 0.06 * p.y.max(0.0), 0.0),
            Part::Head => v(0.0, 0.06 * TORSO_TOP, 0.0),
            Part::Arm => v(0.0, 0.06 * SHOULDER.y, 0.0),
            Part::Leg => Vec3::zeros(),
        }),
        // shoulder width
        dir(&|_, i| if i.part == Part::Arm { v(0.02 * i.side, 0.0, 0.0) } else { Vec3::zeros() }),
        // hip width
        dir(&|_, i| if i.part == Part::Leg { v(0.015 * i.side, 0.0, 0.0) } else { Vec3::zeros() }),
    ]
}
