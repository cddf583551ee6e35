//! Deterministic synthetic scenes with known body and camera.
//!
//! Each record samples a shape, a pose, a pelvis depth `Tz`, a camera
//! direction in spherical coordinates around the pelvis looking at a
//! spine/head joint, and a dolly-zoom focal length. The camera is placed
//! along that direction so the pelvis sits at depth `Tz`. The camera rotation is folded into the root
//! orientation, so every record reads as "camera-frame vertices = posed
//! pelvis-centered vertices + T" with a translation-only extrinsic.
//!
//! Randomness comes from ChaCha8 streams keyed by `(global_seed, record
//! index, purpose)`; any record can be regenerated on its own.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{synthesize, BodyModel, Mesh, Pose, Shape, Vec3, LOOKAT_SPINE_JOINTS};
use crate::error::{Error, Result};
use crate::precision::{round_sig, to_json_line};
use crate::projection::{PerspectiveCamera, Translation};
use crate::rasterizer::{rasterize, write_pgm, SilhouetteMask};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MASK_DIR: &str = "masks";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_records: usize,
    pub global_seed: u64,
    pub width: u32,
    pub height: u32,
    pub near_fraction: f64,
    pub near_band: [f64; 2],
    pub far_band: [f64; 2],
    pub focal_jitter: [f64; 2],
    pub f_default_mm: f64,
    pub sensor_mm: f64,
    pub phi_range: [f64; 2],
    pub theta_range: [f64; 2],
    pub lookat_bones: Vec<usize>,
    /// Half-width of the uniform look-at target noise, meters.
    pub lookat_noise_m: f64,
    /// Shape coefficients are standard normal truncated to ±this.
    pub shape_clip: f64,
    /// Maximum per-joint rotation angle, radians.
    pub pose_max_angle: f64,
    /// Vertices must lie at least this far in front of the camera, meters.
    pub min_vertex_depth: f64,
    /// Camera draws per record before the record is skipped.
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_records: 100,
            global_seed: 0,
            width: 256,
            height: 256,
            near_fraction: 0.8,
            near_band: [0.3, 1.2],
            far_band: [1.2, 10.0],
            focal_jitter: [0.7, 1.3],
            f_default_mm: 15.0,
            sensor_mm: 36.0,
            phi_range: [0.1 * PI, 0.7 * PI],
            theta_range: [0.0, 2.0 * PI],
            lookat_bones: LOOKAT_SPINE_JOINTS.to_vec(),
            lookat_noise_m: 0.05,
            shape_clip: 2.0,
            pose_max_angle: 0.4,
            min_vertex_depth: 0.01,
            max_attempts: 20,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::InvalidArgument(format!("{field}: {msg}")));
        if self.width == 0 || self.height == 0 {
            return err("size", format!("image must be non-empty, got {}x{}", self.width, self.height));
        }
        if !(0.0..=1.0).contains(&self.near_fraction) {
            return err("near_fraction", format!("must lie in [0, 1], got {}", self.near_fraction));
        }
        let [n0, n1] = self.near_band;
        let [f0, f1] = self.far_band;
        if !(0.0 < n0 && n0 < n1 && n1 <= f0 && f0 < f1 && f1.is_finite()) {
            return err("near_band/far_band", format!("bands must be positive, ordered and disjoint, got {:?} {:?}", self.near_band, self.far_band));
        }
        let [j0, j1] = self.focal_jitter;
        if !(0.0 < j0 && j0 <= j1 && j1.is_finite()) {
            return err("focal_jitter", format!("need 0 < lo <= hi, got {:?}", self.focal_jitter));
        }
        for (field, v) in [("f_default_mm", self.f_default_mm), ("sensor_mm", self.sensor_mm)] {
            if !(v.is_finite() && v > 0.0) {
                return err(field, format!("must be positive, got {v}"));
            }
        }
        for (field, [lo, hi]) in [("phi_range", self.phi_range), ("theta_range", self.theta_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return err(field, format!("need lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if self.lookat_bones.is_empty() {
            return err("lookat_bones", "at least one bone is required".into());
        }
        for (field, v) in [
            ("lookat_noise_m", self.lookat_noise_m),
            ("shape_clip", self.shape_clip),
            ("pose_max_angle", self.pose_max_angle),
            ("min_vertex_depth", self.min_vertex_depth),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return err(field, format!("must be finite and non-negative, got {v}"));
            }
        }
        if self.shape_clip == 0.0 {
            return err("shape_clip", "must be positive".into());
        }
        if self.max_attempts == 0 {
            return err("max_attempts", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Independent random streams of one record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Shape = 0,
    Pose = 1,
    Depth = 2,
    Camera = 3,
    Focal = 4,
}

pub fn stream(global_seed: u64, record_index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    rng.set_stream(record_index.wrapping_mul(16) + purpose as u64);
    rng
}

/// Pelvis depth with uniformly distributed inverse depth inside each band.
pub fn sample_tz(rng: &mut impl Rng, cfg: &GenConfig) -> f64 {
    let near = rng.random::<f64>() < cfg.near_fraction;
    let (lo, hi) = if near { (cfg.near_band[0], cfg.near_band[1]) } else { (cfg.far_band[0], cfg.far_band[1]) };
    // u ∈ [1/hi, 1/lo]; the far band excludes its near edge.
    loop {
        let u = rng.random_range(1.0 / hi..=1.0 / lo);
        let tz = 1.0 / u;
        if near || tz > lo {
            return tz.clamp(lo, hi);
        }
    }
}

/// Focal length of the dolly-zoom law at depth `tz`, before jitter, in pixels.
pub fn nominal_focal_px(tz: f64, cfg: &GenConfig) -> f64 {
    cfg.f_default_mm * tz / cfg.sensor_mm * cfg.width as f64
}

pub fn sample_focal(rng: &mut impl Rng, tz: f64, cfg: &GenConfig) -> Result<f64> {
    if !(tz > 0.0) {
        return Err(Error::InvalidArgument(format!("tz must be positive, got {tz}")));
    }
    let jitter = rng.random_range(cfg.focal_jitter[0]..=cfg.focal_jitter[1]);
    Ok(nominal_focal_px(tz, cfg) * jitter)
}

/// Point at polar angle `phi` from +Y and azimuth `theta` in the XZ plane.
pub fn spherical_position(center: &Vec3, radius: f64, phi: f64, theta: f64) -> Vec3 {
    center + radius * Vec3::new(phi.sin() * theta.cos(), phi.cos(), phi.sin() * theta.sin())
}

/// World-to-camera rotation with +z along the view direction, +y pointing
/// down in the image, and world +Y as up (world +Z within 1° of vertical).
pub fn look_at(position: &Vec3, target: &Vec3) -> Result<Rotation3<f64>> {
    let dir = target - position;
    let len = dir.norm();
    if !(len > 1e-9) {
        return Err(Error::DegenerateGeometry("look-at target coincides with the camera position".into()));
    }
    let z = dir / len;
    let up = if z.y.abs() > 1f64.to_radians().cos() { Vec3::z() } else { Vec3::y() };
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    Ok(Rotation3::from_matrix_unchecked(Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraSample {
    pub position: Vec3,
    pub rotation: Rotation3<f64>,
    pub phi: f64,
    pub theta: f64,
    pub bone: usize,
    pub target: Vec3,
}

/// Camera on the sphere of radius `tz` around the pelvis (`joints[0]`),
/// looking at a randomly chosen bone plus noise.
pub fn sample_camera(rng: &mut impl Rng, joints: &[Vec3], tz: f64, cfg: &GenConfig) -> Result<CameraSample> {
    if joints.is_empty() {
        return Err(Error::InvalidArgument("at least the pelvis joint is required".into()));
    }
    let pelvis = joints[0];
    for _ in 0..10 {
        let phi = rng.random_range(cfg.phi_range[0]..=cfg.phi_range[1]);
        let theta = rng.random_range(cfg.theta_range[0]..=cfg.theta_range[1]);
        let pick = cfg.lookat_bones[rng.random_range(0..cfg.lookat_bones.len())];
        let bone = pick.min(joints.len() - 1);
        let h = cfg.lookat_noise_m;
        let noise = Vec3::from_fn(|_, _| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 });
        let position = spherical_position(&pelvis, tz, phi, theta);
        let target = joints[bone] + noise;
        if let Ok(rotation) = look_at(&position, &target) {
            return Ok(CameraSample { position, rotation, phi, theta, bone, target });
        }
    }
    Err(Error::DegenerateGeometry("look-at target kept coinciding with the camera position".into()))
}

/// Moves the camera along its sampled direction (same look-at target) until
/// the pelvis lies at depth `tz` on the optical axis. With a target away from
/// the pelvis the sphere radius alone would leave the pelvis shallower than `tz`.
pub fn place_at_depth(sample: &CameraSample, pelvis: &Vec3, tz: f64) -> Option<CameraSample> {
    let at = |r: f64| -> Option<(CameraSample, f64)> {
        let position = spherical_position(pelvis, r, sample.phi, sample.theta);
        let rotation = look_at(&position, &sample.target).ok()?;
        let depth = (rotation * (pelvis - position)).z;
        Some((CameraSample { position, rotation, ..sample.clone() }, depth))
    };
    // depth(r) ≤ r, and depth(r) − r tends to a constant as r grows.
    let (mut lo, mut hi) = (tz, tz + 2.0 * (sample.target - pelvis).norm() + 1.0);
    if at(lo)?.1 >= tz {
        return at(lo).map(|(c, _)| c);
    }
    if at(hi)?.1 < tz {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)?.1 < tz {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    at(hi).map(|(c, _)| c)
}

pub fn sample_shape(rng: &mut impl Rng, count: usize, clip: f64) -> Shape {
    let beta = (0..count)
        .map(|_| loop {
            let b: f64 = rng.sample(StandardNormal);
            if b.abs() <= clip {
                break b;
            }
        })
        .collect();
    Shape::new(beta).expect("finite coefficients")
}

/// Root at identity; every other joint rotated by `U[0, max_angle]` about a uniform axis.
pub fn sample_pose(rng: &mut impl Rng, joint_count: usize, max_angle: f64) -> Pose {
    let mut rotations = vec![Vec3::zeros(); joint_count];
    for r in rotations.iter_mut().skip(1) {
        let axis = loop {
            let v = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        };
        *r = axis * rng.random_range(0.0..=max_angle);
    }
    Pose::new(rotations).expect("finite rotations")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub global_seed: u64,
    pub record_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub id: String,
    pub shape: Shape,
    /// Root orientation already includes the camera rotation.
    pub pose: Pose,
    pub camera: PerspectiveCamera,
    /// Camera-frame pelvis position.
    #[serde(rename = "T")]
    pub t: Translation,
    /// World-to-camera rotation of the sampled camera (informational).
    pub camera_rotation: Matrix3<f64>,
    /// Distance from the camera center to the pelvis, meters.
    pub camera_distance: f64,
    pub mask_path: String,
    pub seed_provenance: SeedProvenance,
}

impl SceneRecord {
    pub fn mesh(&self, model: &BodyModel) -> Result<Mesh> {
        synthesize(model, &self.shape, &self.pose)
    }

    pub fn render(&self, model: &BodyModel) -> Result<SilhouetteMask> {
        rasterize(&self.mesh(model)?, &self.camera, &self.t)
    }
}

pub fn record_id(index: u64) -> String {
    format!("{index:06}")
}

fn round_vec(v: &Vec3) -> Vec3 {
    v.map(round_sig)
}

/// Why a record was not produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub index: u64,
    pub reason: String,
}

/// Samples record `index`, retrying the camera until the body lies fully in
/// front of it, the pelvis depth is in the far/near band range and the mask is
/// non-empty. Returns the record (values rounded to 9 significant digits) and
/// its mask rendered from the rounded values.
pub fn generate_record(cfg: &GenConfig, model: &BodyModel, index: u64) -> Result<(SceneRecord, SilhouetteMask)> {
    let seed = cfg.global_seed;
    let shape = sample_shape(&mut stream(seed, index, Purpose::Shape), model.shape_count(), cfg.shape_clip);
    let pose = sample_pose(&mut stream(seed, index, Purpose::Pose), model.joint_count(), cfg.pose_max_angle);
    let tz = sample_tz(&mut stream(seed, index, Purpose::Depth), cfg);
    let f_px = sample_focal(&mut stream(seed, index, Purpose::Focal), tz, cfg)?;
    let camera = PerspectiveCamera::centered(round_sig(f_px), cfg.width, cfg.height)?;
    let shape = Shape::new(shape.coefficients().iter().map(|b| round_sig(*b)).collect())?;
    let world = synthesize(model, &shape, &pose)?;

    let mut cam_rng = stream(seed, index, Purpose::Camera);
    let mut last = String::new();
    for _ in 0..cfg.max_attempts {
        let sample = sample_camera(&mut cam_rng, &world.joints, tz, cfg)?;
        let Some(cam) = place_at_depth(&sample, &world.joints[0], tz) else {
            last = "pelvis depth unreachable along the sampled direction".into();
            continue;
        };
        let folded = pose.with_root_premultiplied(&cam.rotation);
        let folded = Pose::new(folded.rotations().iter().map(round_vec).collect())?;
        let t = round_vec(&(cam.rotation * (world.joints[0] - cam.position)));
        let record = SceneRecord {
            id: record_id(index),
            shape: shape.clone(),
            pose: folded,
            camera,
            t: Translation::from_vector(&t),
            camera_rotation: cam.rotation.into_inner().map(round_sig),
            camera_distance: round_sig((cam.position - world.joints[0]).norm()),
            mask_path: format!("{MASK_DIR}/{}.pgm", record_id(index)),
            seed_provenance: SeedProvenance { global_seed: seed, record_index: index },
        };
        let mesh = record.mesh(model)?;
        let min_depth = mesh.vertices.iter().map(|v| v.z + t.z).fold(f64::INFINITY, f64::min);
        if min_depth < cfg.min_vertex_depth {
            last = format!("closest vertex {min_depth:.3} m from the camera plane");
            continue;
        }
        match rasterize(&mesh, &record.camera, &record.t) {
            Ok(mask) => return Ok((record, mask)),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Validation(format!(
        "record {index}: no valid camera after {} attempts ({last})",
        cfg.max_attempts
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub config: GenConfig,
    /// Where the body model came from (a file path or the built-in model).
    pub model: String,
    pub records: usize,
    pub gaps: Vec<Gap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<SceneRecord>,
}

/// Generates `cfg.n_records` scenes into `out_dir` (masks plus `manifest.jsonl`).
pub fn generate_dataset(cfg: &GenConfig, model: &BodyModel, model_source: &str, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let mask_dir = out_dir.join(MASK_DIR);
    std::fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let file = File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;

    let outcomes: Vec<Result<std::result::Result<SceneRecord, Gap>>> = (0..cfg.n_records as u64)
        .into_par_iter()
        .map(|index| match generate_record(cfg, model, index) {
            Ok((record, mask)) => {
                write_pgm(&mask, &out_dir.join(&record.mask_path))?;
                log::info!("record {} ok (Tz {:.3} m, f {:.1} px)", record.id, record.t.tz, record.camera.focal_px);
                Ok(Ok(record))
            }
            Err(e @ (Error::Validation(_) | Error::EmptySilhouette | Error::BehindCamera { .. } | Error::DegenerateGeometry(_))) => {
                log::warn!("skipping record {index}: {e}");
                Ok(Err(Gap { index, reason: e.to_string() }))
            }
            Err(e) => Err(e),
        })
        .collect();

    let mut records = Vec::new();
    let mut gaps = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Ok(r) => records.push(r),
            Err(g) => gaps.push(g),
        }
    }
    let header = ManifestHeader {
        format_version: MANIFEST_FORMAT_VERSION,
        config: cfg.clone(),
        model: model_source.to_string(),
        records: records.len(),
        gaps,
    };
    let manifest = Manifest { header, records };
    write_manifest_to(&manifest, file).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

fn write_manifest_to(manifest: &Manifest, file: File) -> std::io::Result<()> {
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", to_json_line(&manifest.header)?)?;
    for r in &manifest.records {
        writeln!(w, "{}", to_json_line(r)?)?;
    }
    w.flush()
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest_to(manifest, file).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: ManifestHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::parse(&ctx, format!("line 1 (header): {e}")))?
        }
        None => return Err(Error::parse(&ctx, "empty manifest, header line missing")),
    };
    if header.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::parse(&ctx, format!("unsupported format_version {}", header.format_version)));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: SceneRecord = serde_json::from_str(&line).map_err(|e| Error::parse(&ctx, format!("line {}: {e}", i + 1)))?;
        records.push(r);
    }
    Ok(Manifest { header, records })
}

/// Absolute path of a record's mask given the manifest directory.
pub fn mask_file(dataset_dir: &Path, record: &SceneRecord) -> PathBuf {
    dataset_dir.join(&record.mask_path)
}
