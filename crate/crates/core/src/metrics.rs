//! Camera-parameter errors and mesh/joint/mask accuracy metrics.

use std::path::Path;

use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, Pose, Shape, Vec3};
use crate::error::{Error, Result};
use crate::precision::fmt_sig;
use crate::projection::Translation;
use crate::rasterizer::{rasterize, read_pgm, SilhouetteMask};
use crate::scenegen::{mask_file, SceneRecord};

/// `|f_pred − f_gt| / f_gt`.
pub fn e_f(f_pred: f64, f_gt: f64) -> Result<f64> {
    if !(f_gt > 0.0) {
        return Err(Error::InvalidArgument(format!("ground-truth focal length must be positive, got {f_gt}")));
    }
    Ok((f_pred - f_gt).abs() / f_gt)
}

/// `|Tz_pred − Tz_gt|`, meters.
pub fn e_tz(tz_pred: f64, tz_gt: f64) -> f64 {
    (tz_pred - tz_gt).abs()
}

/// `|1/Tz_pred − 1/Tz_gt|`, 1/meters.
pub fn e_inv_tz(tz_pred: f64, tz_gt: f64) -> Result<f64> {
    if !(tz_pred > 0.0 && tz_gt > 0.0) {
        return Err(Error::InvalidArgument(format!("depths must be positive, got {tz_pred} and {tz_gt}")));
    }
    Ok((1.0 / tz_pred - 1.0 / tz_gt).abs())
}

/// `‖(Tx, Ty)_pred − (Tx, Ty)_gt‖`, meters.
pub fn e_txy(txy_pred: [f64; 2], txy_gt: [f64; 2]) -> f64 {
    (txy_pred[0] - txy_gt[0]).hypot(txy_pred[1] - txy_gt[1])
}

fn check_pair(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("point counts differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("point sets are empty".into()));
    }
    Ok(())
}

fn mean_distance_mm(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_pair(a, b)?;
    Ok(1000.0 * a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64)
}

/// Mean per-vertex Euclidean distance, millimeters. No alignment is applied.
pub fn pve(v_pred: &[Vec3], v_gt: &[Vec3]) -> Result<f64> {
    mean_distance_mm(v_pred, v_gt)
}

/// Mean per-joint Euclidean distance, millimeters. No alignment is applied.
pub fn mpjpe(j_pred: &[Vec3], j_gt: &[Vec3]) -> Result<f64> {
    mean_distance_mm(j_pred, j_gt)
}

/// Subtracts `points[root]` from every point.
pub fn root_relative(points: &[Vec3], root: usize) -> Vec<Vec3> {
    points.iter().map(|p| p - points[root]).collect()
}

/// Similarity transform `x ↦ s·R·x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Similarity {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * self.rotation * p + self.translation
    }
}

fn centered(points: &[Vec3]) -> (Vec3, Vec<Vec3>) {
    let mean = points.iter().sum::<Vec3>() / points.len() as f64;
    (mean, points.iter().map(|p| p - mean).collect())
}

fn check_not_collinear(centered: &[Vec3], which: &str) -> Result<()> {
    let scatter: Matrix3<f64> = centered.iter().map(|p| p * p.transpose()).sum();
    let mut s = scatter.symmetric_eigenvalues();
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(s[0] > 0.0) || s[1] <= 1e-12 * s[0] {
        return Err(Error::DegenerateGeometry(format!("{which} joints are collinear or coincident")));
    }
    Ok(())
}

/// Least-squares similarity mapping `source` onto `target`, rotations restricted to det = +1.
pub fn procrustes(source: &[Vec3], target: &[Vec3]) -> Result<Similarity> {
    check_pair(source, target)?;
    if source.len() < 3 {
        return Err(Error::DegenerateGeometry("at least 3 joints are required".into()));
    }
    let (mu_s, xs) = centered(source);
    let (mu_t, ys) = centered(target);
    check_not_collinear(&xs, "predicted")?;
    check_not_collinear(&ys, "ground-truth")?;
    let cov: Matrix3<f64> = ys.iter().zip(&xs).map(|(y, x)| y * x.transpose()).sum();
    let svd = SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let var_s: f64 = xs.iter().map(|x| x.norm_squared()).sum();
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * d[(i, i)]).sum();
    let scale = trace / var_s;
    Ok(Similarity { scale, rotation, translation: mu_t - scale * rotation * mu_s })
}

/// MPJPE after optimal similarity alignment of the prediction, millimeters.
pub fn pa_mpjpe(j_pred: &[Vec3], j_gt: &[Vec3]) -> Result<f64> {
    let s = procrustes(j_pred, j_gt)?;
    let aligned: Vec<Vec3> = j_pred.iter().map(|p| s.apply(p)).collect();
    mpjpe(&aligned, j_gt)
}

/// Percentage IoU of the masks thresholded at 0.5. Two empty masks give 100.
pub fn miou(pred: &SilhouetteMask, gt: &SilhouetteMask) -> Result<f64> {
    if !pred.same_size(gt) {
        return Err(Error::InvalidArgument(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (a, b) in pred.values().iter().zip(gt.values()) {
        let (a, b) = (*a > 0.5, *b > 0.5);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 100.0 } else { 100.0 * inter as f64 / union as f64 })
}

/// Estimated camera (and optionally body) for one record.
///
/// Missing `shape`/`pose` mean the ground-truth body is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub f_px: f64,
    pub t: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
}

impl Prediction {
    pub fn from_record(record: &SceneRecord) -> Prediction {
        Prediction {
            id: record.id.clone(),
            f_px: record.camera.focal_px,
            t: [record.t.tx, record.t.ty, record.t.tz],
            shape: Some(record.shape.clone()),
            pose: Some(record.pose.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub e_f: f64,
    pub e_tz: f64,
    pub e_inv_tz: f64,
    pub e_txy: f64,
    pub pve_mm: f64,
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
    pub miou_pct: f64,
}

impl MetricRow {
    fn values(&self) -> [f64; 8] {
        [self.e_f, self.e_tz, self.e_inv_tz, self.e_txy, self.pve_mm, self.mpjpe_mm, self.pa_mpjpe_mm, self.miou_pct]
    }
}

pub const METRIC_COLUMNS: [&str; 8] = ["e_f", "e_tz", "e_inv_tz", "e_txy", "pve_mm", "mpjpe_mm", "pa_mpjpe_mm", "miou_pct"];

/// Aggregates over rows; JSON writes NaN (no rows) as `null` and reads it back as NaN.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(deserialize_with = "nan_if_null")]
    pub e_f: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub e_tz: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub e_inv_tz: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub e_txy: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub pve_mm: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub mpjpe_mm: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub pa_mpjpe_mm: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub miou_pct: f64,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl MetricSummary {
    fn from_values(v: [f64; 8]) -> Self {
        let [e_f, e_tz, e_inv_tz, e_txy, pve_mm, mpjpe_mm, pa_mpjpe_mm, miou_pct] = v;
        MetricSummary { e_f, e_tz, e_inv_tz, e_txy, pve_mm, mpjpe_mm, pa_mpjpe_mm, miou_pct }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// Record ids without a prediction; excluded from the aggregates.
    pub missing: Vec<String>,
    pub warnings: usize,
    /// NaN when there are no rows.
    pub mean: MetricSummary,
    pub median: MetricSummary,
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>, missing: Vec<String>) -> Self {
        let mut columns: [Vec<f64>; 8] = Default::default();
        for r in &rows {
            for (c, v) in columns.iter_mut().zip(r.values()) {
                c.push(v);
            }
        }
        let mean = columns.each_ref().map(|c| if c.is_empty() { f64::NAN } else { c.iter().sum::<f64>() / c.len() as f64 });
        let med = columns.map(|mut c| median(&mut c));
        MetricReport {
            warnings: missing.len(),
            rows,
            missing,
            mean: MetricSummary::from_values(mean),
            median: MetricSummary::from_values(med),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("id,{}\n", METRIC_COLUMNS.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.values().iter().map(|v| fmt_sig(*v)).collect();
            out.push_str(&format!("{},{}\n", r.id, cells.join(",")));
        }
        out
    }
}

/// Metrics of one prediction against its record. Meshes and joints are
/// compared pelvis-relative; masks are the stored ground truth (or a fresh
/// rendering) versus the prediction rendered with the record's intrinsics.
pub fn evaluate_record(
    model: &BodyModel,
    record: &SceneRecord,
    gt_mask: &SilhouetteMask,
    pred: &Prediction,
) -> Result<MetricRow> {
    let gt_mesh = record.mesh(model)?;
    let shape = pred.shape.as_ref().unwrap_or(&record.shape);
    let pose = pred.pose.as_ref().unwrap_or(&record.pose);
    let pred_mesh = crate::body_model::synthesize(model, shape, pose)?;

    let pred_cam = record.camera.with_focal(pred.f_px);
    let pred_t = Translation::new(pred.t[0], pred.t[1], pred.t[2]);
    let pred_mask = match rasterize(&pred_mesh, &pred_cam, &pred_t) {
        Ok(m) => m,
        Err(Error::EmptySilhouette | Error::BehindCamera { .. } | Error::InvalidArgument(_)) => {
            SilhouetteMask::empty(gt_mask.width(), gt_mask.height())
        }
        Err(e) => return Err(e),
    };

    let j_pred = root_relative(&pred_mesh.joints, 0);
    let j_gt = root_relative(&gt_mesh.joints, 0);
    let v_pred: Vec<Vec3> = pred_mesh.vertices.iter().map(|v| v - pred_mesh.joints[0]).collect();
    let v_gt: Vec<Vec3> = gt_mesh.vertices.iter().map(|v| v - gt_mesh.joints[0]).collect();
    let tz_pred = pred.t[2];
    Ok(MetricRow {
        id: record.id.clone(),
        e_f: e_f(pred.f_px, record.camera.focal_px)?,
        e_tz: e_tz(tz_pred, record.t.tz),
        e_inv_tz: if tz_pred > 0.0 { e_inv_tz(tz_pred, record.t.tz)? } else { f64::INFINITY },
        e_txy: e_txy([pred.t[0], pred.t[1]], [record.t.tx, record.t.ty]),
        pve_mm: pve(&v_pred, &v_gt)?,
        mpjpe_mm: mpjpe(&j_pred, &j_gt)?,
        pa_mpjpe_mm: pa_mpjpe(&j_pred, &j_gt)?,
        miou_pct: miou(&pred_mask, gt_mask)?,
    })
}

/// Evaluates every record that has a prediction, in record order.
///
/// Ground-truth masks are read from `dataset_dir` when given, otherwise
/// re-rendered from the record.
pub fn evaluate_dataset(
    model: &BodyModel,
    records: &[SceneRecord],
    predictions: &[Prediction],
    dataset_dir: Option<&Path>,
) -> Result<MetricReport> {
    let by_id: std::collections::HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let outcomes: Vec<Result<Option<MetricRow>>> = records
        .par_iter()
        .map(|record| {
            let Some(pred) = by_id.get(record.id.as_str()) else { return Ok(None) };
            let gt_mask = match dataset_dir {
                Some(dir) => read_pgm(&mask_file(dir, record))?,
                None => record.render(model)?,
            };
            evaluate_record(model, record, &gt_mask, pred).map(Some)
        })
        .collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (record, outcome) in records.iter().zip(outcomes) {
        match outcome? {
            Some(row) => rows.push(row),
            None => missing.push(record.id.clone()),
        }
    }
    if !missing.is_empty() {
        log::warn!("{} record(s) have no prediction", missing.len());
    }
    Ok(MetricReport::from_rows(rows, missing))
}
