//! Model files (JSON) and mesh export (OBJ subset).
//!
//! Model layout, `format_version` 1:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "vertex_count": N, "joint_count": K, "shape_count": B, "face_count": F,
//!   "template_vertices":  {"shape": [N, 3],    "data": [...]},
//!   "shape_blendshapes":  {"shape": [B, N, 3], "data": [...]},
//!   "joint_regressor":    {"shape": [K, N],    "data": [...]},
//!   "skinning_weights":   {"shape": [N, K],    "data": [...]},
//!   "parents":            [-1, 0, 0, ...],
//!   "faces":              {"shape": [F, 3],    "data": [...]}
//! }
//! ```
//!
//! Arrays are row-major. Floats are written with shortest round-trip
//! formatting so save/load is lossless.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BodyModel, Mesh, Vec3};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Array<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Copy> Array<T> {
    fn check(&self, field: &str, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::Validation(format!("{field}: shape {:?}, expected {:?}", self.shape, expected)));
        }
        let len: usize = expected.iter().product();
        if self.data.len() != len {
            return Err(Error::Validation(format!("{field}: {} values, shape {:?} needs {len}", self.data.len(), expected)));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    vertex_count: usize,
    joint_count: usize,
    shape_count: usize,
    face_count: usize,
    template_vertices: Array<f64>,
    shape_blendshapes: Array<f64>,
    joint_regressor: Array<f64>,
    skinning_weights: Array<f64>,
    parents: Vec<i64>,
    faces: Array<usize>,
}

fn vec3s(data: &[f64]) -> Vec<Vec3> {
    data.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn rows(data: &[f64], width: usize) -> Vec<Vec<f64>> {
    data.chunks_exact(width).map(<[f64]>::to_vec).collect()
}

pub fn model_to_json(model: &BodyModel) -> String {
    let (n, k, b) = (model.vertex_count(), model.joint_count(), model.shape_count());
    let flat3 = |vs: &[Vec3]| vs.iter().flat_map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>();
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        vertex_count: n,
        joint_count: k,
        shape_count: b,
        face_count: model.faces().len(),
        template_vertices: Array { shape: vec![n, 3], data: flat3(model.template()) },
        shape_blendshapes: Array {
            shape: vec![b, n, 3],
            data: model.shape_dirs().iter().flat_map(|d| flat3(d)).collect(),
        },
        joint_regressor: Array { shape: vec![k, n], data: model.joint_regressor().concat() },
        skinning_weights: Array { shape: vec![n, k], data: model.skin_weights().concat() },
        parents: model.parents().iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
        faces: Array { shape: vec![model.faces().len(), 3], data: model.faces().concat() },
    };
    serde_json::to_string(&file).expect("model serialization cannot fail")
}

/// Parses and validates a model document. `context` names the source in errors.
pub fn model_from_json(text: &str, context: &str) -> Result<BodyModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse(context, e))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::parse(
            context,
            format!("format_version {} is not supported (expected {MODEL_FORMAT_VERSION})", file.format_version),
        ));
    }
    let (n, k, b, f) = (file.vertex_count, file.joint_count, file.shape_count, file.face_count);
    file.template_vertices.check("template_vertices", &[n, 3])?;
    file.shape_blendshapes.check("shape_blendshapes", &[b, n, 3])?;
    file.joint_regressor.check("joint_regressor", &[k, n])?;
    file.skinning_weights.check("skinning_weights", &[n, k])?;
    file.faces.check("faces", &[f, 3])?;
    if file.parents.len() != k {
        return Err(Error::Validation(format!("parents: {} entries, expected {k}", file.parents.len())));
    }
    let parents = file
        .parents
        .iter()
        .enumerate()
        .map(|(j, &p)| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            p => Err(Error::Validation(format!("parents[{j}] = {p} is not a joint index"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let shape_dirs = if n == 0 {
        vec![Vec::new(); b]
    } else {
        file.shape_blendshapes.data.chunks_exact(3 * n).map(vec3s).collect()
    };
    BodyModel::new(
        vec3s(&file.template_vertices.data),
        shape_dirs,
        rows(&file.joint_regressor.data, n.max(1)),
        rows(&file.skinning_weights.data, k.max(1)),
        parents,
        file.faces.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    )
}

pub fn save_model(model: &BodyModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<BodyModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, &path.display().to_string())
}

/// Writes `v` and `f` lines only, with 1-based face indices.
pub fn write_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 20);
    for v in &mesh.vertices {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `v` and `f` lines; other statements are ignored. Polygons are fan-triangulated
/// and `v/vt/vn` index forms are accepted. The returned mesh has no joints.
pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

pub(crate) fn parse_obj(text: &str, context: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_ctx = || format!("{context}:{}", lineno + 1);
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(line_ctx(), e))?;
                if coords.len() != 3 {
                    return Err(Error::parse(line_ctx(), "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<i64> = tokens
                    .map(|t| t.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(line_ctx(), e))?;
                if idx.len() < 3 {
                    return Err(Error::parse(line_ctx(), "face needs at least three vertices"));
                }
                polygons.push((lineno + 1, idx));
            }
            _ => {}
        }
    }
    let n = vertices.len() as i64;
    let mut faces = Vec::new();
    for (lineno, idx) in polygons {
        // Negative indices count back from the end of the vertex list.
        let resolved = idx
            .iter()
            .map(|&i| {
                let r = if i < 0 { n + i } else { i - 1 };
                if (0..n).contains(&r) {
                    Ok(r as usize)
                } else {
                    Err(Error::parse(format!("{context}:{lineno}"), format!("face index {i} out of range")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for w in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[w], resolved[w + 1]]);
        }
    }
    Ok(Mesh { vertices, faces, joints: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::super::make_default_model;
    use super::*;

    #[test]
    fn json_round_trip_is_lossless() {
        let model = make_default_model(8, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = model_to_json(&make_default_model(4, 2).unwrap());
        let err = model_from_json(&text[..text.len() / 2], "cut.json").unwrap_err();
        match err {
            Error::Parse { context, message } => {
                assert_eq!(context, "cut.json");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn bad_skinning_row_is_named() {
        let model = make_default_model(4, 2).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&model_to_json(&model)).unwrap();
        let k = model.joint_count();
        let row = 5;
        let data = doc["skinning_weights"]["data"].as_array_mut().unwrap();
        let scale = 0.9 / data[row * k..(row + 1) * k].iter().map(|v| v.as_f64().unwrap()).sum::<f64>();
        for v in &mut data[row * k..(row + 1) * k] {
            *v = serde_json::json!(v.as_f64().unwrap() * scale);
        }
        let err = model_from_json(&doc.to_string(), "m.json").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("skinning_weights row 5"), "{err}");
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let model = make_default_model(4, 2).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&model_to_json(&model)).unwrap();
        doc["template_vertices"]["shape"] = serde_json::json!([3, 3]);
        let err = model_from_json(&doc.to_string(), "m.json").unwrap_err();
        assert!(err.to_string().contains("template_vertices"), "{err}");
    }

    #[test]
    fn obj_round_trip() {
        let model = make_default_model(6, 3).unwrap();
        let mesh = super::super::synthesize(
            &model,
            &super::super::Shape::zeros(10),
            &super::super::Pose::zeros(16),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        write_obj(&mesh, &path).unwrap();
        let back = read_obj(&path).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.faces, mesh.faces);
        assert!(back.joints.is_empty());
    }

    #[test]
    fn obj_quads_and_slashes() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";
        let mesh = parse_obj(text, "q.obj").unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n", "bad.obj").is_err());
    }
}
