//! Binary silhouette rendering, Gaussian smoothing and soft IoU: the
//! objective the camera solver minimizes.

mod mask;
mod pgm;

pub use mask::{gaussian_smooth, gaussian_taps, soft_iou, MaskKind, Overlap, SilhouetteMask};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};

use rayon::prelude::*;

use crate::body_model::Mesh;
use crate::error::{Error, Result};
use crate::projection::{project_perspective, CameraParams, PerspectiveCamera, Translation, Vec2};

/// Objective value returned when the camera cannot render the mesh.
pub const OBJECTIVE_PENALTY: f64 = 2.0;

pub const DEFAULT_SIGMA_PX: f64 = 2.0;

/// Signed doubled area of `(a, b, p)`; positive when `p` is left of `a → b`.
#[inline]
fn orient(a: &Vec2, b: &Vec2, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Pixel index range whose centers `i + 0.5` fall in `[lo, hi]`, clipped to `[0, n)`.
fn center_range(lo: f64, hi: f64, n: u32) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

fn fill_triangle(mask: &mut SilhouetteMask, a: &Vec2, b: &Vec2, c: &Vec2) -> bool {
    let area = orient(a, b, c.x, c.y);
    if area == 0.0 || !area.is_finite() {
        return false;
    }
    let Some((x0, x1)) = center_range(a.x.min(b.x).min(c.x), a.x.max(b.x).max(c.x), mask.width()) else {
        return false;
    };
    let Some((y0, y1)) = center_range(a.y.min(b.y).min(c.y), a.y.max(b.y).max(c.y), mask.height()) else {
        return false;
    };
    let mut hit = false;
    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let e0 = orient(a, b, px, py);
            let e1 = orient(b, c, px, py);
            let e2 = orient(c, a, px, py);
            let inside = if area > 0.0 { e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0 } else { e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0 };
            if inside {
                mask.set_inside(x, y);
                hit = true;
            }
        }
    }
    hit
}

/// Renders the union of all projected triangles, sampled at pixel centers.
///
/// Pixel `(x, y)` covers `[x, x+1] × [y, y+1]` in image coordinates; a pixel is
/// set when its center lies in the closed projected triangle.
pub fn rasterize(mesh: &Mesh, cam: &PerspectiveCamera, t: &Translation) -> Result<SilhouetteMask> {
    cam.validate()?;
    let projected = project_perspective(&mesh.vertices, cam, t)?;
    let mut mask = SilhouetteMask::empty(cam.width, cam.height);
    let mut any = false;
    for face in &mesh.faces {
        let [a, b, c] = face.map(|i| projected[i]);
        any |= fill_triangle(&mut mask, &a, &b, &c);
    }
    if any {
        Ok(mask)
    } else {
        Err(Error::EmptySilhouette)
    }
}

/// Renders independent camera configurations concurrently; output order matches input.
pub fn rasterize_batch(mesh: &Mesh, jobs: &[(PerspectiveCamera, Translation)]) -> Vec<Result<SilhouetteMask>> {
    jobs.par_iter().map(|(cam, t)| rasterize(mesh, cam, t)).collect()
}

/// `1 − soft_iou(smooth(rasterize(mesh, params)), target)`.
///
/// `target` must already be smoothed with the same `sigma_px`. Render
/// failures yield [`OBJECTIVE_PENALTY`]; non-finite parameters yield NaN.
pub fn objective(params: &CameraParams, mesh: &Mesh, target: &SilhouetteMask, sigma_px: f64) -> f64 {
    if !params.is_finite() {
        return f64::NAN;
    }
    let Ok(cam) = params.camera(target.width(), target.height()) else {
        return OBJECTIVE_PENALTY;
    };
    let rendered = match rasterize(mesh, &cam, &params.translation()) {
        Ok(m) => m,
        Err(_) => return OBJECTIVE_PENALTY,
    };
    let smoothed = match gaussian_smooth(&rendered, sigma_px) {
        Ok(m) => m,
        Err(_) => return OBJECTIVE_PENALTY,
    };
    match soft_iou(&smoothed, target) {
        Ok(o) => 1.0 - o.iou,
        Err(_) => OBJECTIVE_PENALTY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{make_default_model, synthesize, Pose, Shape, Vec3};

    fn square(half: f64, z: f64) -> Mesh {
        Mesh {
            vertices: vec![
                Vec3::new(-half, -half, z),
                Vec3::new(half, -half, z),
                Vec3::new(half, half, z),
                Vec3::new(-half, half, z),
            ],
            faces: vec![[0, 1, 2], [0, 2, 3]],
            joints: vec![],
        }
    }

    fn body() -> Mesh {
        let m = make_default_model(8, 4).unwrap();
        synthesize(&m, &Shape::zeros(10), &Pose::zeros(16)).unwrap()
    }

    #[test]
    fn full_frame_triangle_covers_everything() {
        let tri = Mesh {
            vertices: vec![Vec3::new(-10.0, -10.0, 0.0), Vec3::new(30.0, -10.0, 0.0), Vec3::new(-10.0, 30.0, 0.0)],
            faces: vec![[0, 1, 2]],
            joints: vec![],
        };
        let cam = PerspectiveCamera::centered(100.0, 32, 24).unwrap();
        let m = rasterize(&tri, &cam, &Translation::new(0.0, 0.0, 1.0)).unwrap();
        assert!(m.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn out_of_view_mesh_is_empty() {
        let cam = PerspectiveCamera::centered(256.0, 64, 64).unwrap();
        let err = rasterize(&body(), &cam, &Translation::new(50.0, 0.0, 2.0)).unwrap_err();
        assert!(matches!(err, Error::EmptySilhouette));
    }

    #[test]
    fn degenerate_triangles_are_empty() {
        let flat = Mesh {
            vertices: vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.2, 0.0, 0.0)],
            faces: vec![[0, 1, 2]],
            joints: vec![],
        };
        let cam = PerspectiveCamera::centered(256.0, 64, 64).unwrap();
        assert!(matches!(rasterize(&flat, &cam, &Translation::new(0.0, 0.0, 2.0)), Err(Error::EmptySilhouette)));
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cam = PerspectiveCamera::centered(256.0, 64, 64).unwrap();
        assert!(matches!(rasterize(&body(), &cam, &Translation::new(0.0, 0.0, 0.05)), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn unit_square_projects_to_128_px_square() {
        let cam = PerspectiveCamera::centered(256.0, 512, 512).unwrap();
        let m = rasterize(&square(0.5, 0.0), &cam, &Translation::new(0.0, 0.0, 2.0)).unwrap();
        // Corners project to 256 ± 64: a brute-force point-in-square count.
        let mut expected = 0;
        for y in 0..512 {
            for x in 0..512 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if (192.0..=320.0).contains(&px) && (192.0..=320.0).contains(&py) {
                    expected += 1;
                }
            }
        }
        let count = m.count_inside() as i64;
        assert_eq!(count, expected);
        assert!((count - 128 * 128).abs() <= 4 * 128);
        assert_eq!(m.moments().unwrap(), (count as f64, 256.0, 256.0));
    }

    #[test]
    fn integer_pixel_shift_from_tx() {
        // Planar geometry at z = 0: shifting Tx by k·Tz/f moves the image by exactly k px.
        let cam = PerspectiveCamera::centered(256.0, 128, 128).unwrap();
        let mesh = Mesh {
            vertices: vec![Vec3::new(-0.13, -0.2, 0.0), Vec3::new(0.21, -0.07, 0.0), Vec3::new(0.02, 0.23, 0.0)],
            faces: vec![[0, 1, 2]],
            joints: vec![],
        };
        let tz = 2.0;
        let base = rasterize(&mesh, &cam, &Translation::new(0.0, 0.0, tz)).unwrap();
        for k in [1i32, 3, -5] {
            let shifted = rasterize(&mesh, &cam, &Translation::new(k as f64 * tz / 256.0, 0.0, tz)).unwrap();
            for y in 0..128u32 {
                for x in 10..118u32 {
                    assert_eq!(shifted.get(x, y), base.get((x as i32 - k) as u32, y), "k={k} at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn objective_contract() {
        let mesh = body();
        let params = CameraParams::new(150.0, 0.0, 0.1, 2.5);
        let cam = params.camera(96, 96).unwrap();
        let target = gaussian_smooth(&rasterize(&mesh, &cam, &params.translation()).unwrap(), 2.0).unwrap();
        assert!(objective(&params, &mesh, &target, 2.0) < 0.01);
        let far = CameraParams { tx: 5.0 * 0.6, ..params };
        assert!(objective(&far, &mesh, &target, 2.0) > 0.9);
        let behind = CameraParams { tz: -1.0, ..params };
        assert_eq!(objective(&behind, &mesh, &target, 2.0), OBJECTIVE_PENALTY);
        assert!(objective(&CameraParams { tx: f64::NAN, ..params }, &mesh, &target, 2.0).is_nan());
    }

    #[test]
    fn batch_matches_serial() {
        let mesh = body();
        let jobs: Vec<_> = (0..6)
            .map(|i| (PerspectiveCamera::centered(100.0 + 20.0 * i as f64, 64, 64).unwrap(), Translation::new(0.0, 0.0, 3.0)))
            .collect();
        let batch = rasterize_batch(&mesh, &jobs);
        for ((cam, t), got) in jobs.iter().zip(batch) {
            assert_eq!(got.unwrap(), rasterize(&mesh, cam, t).unwrap());
        }
    }
}
