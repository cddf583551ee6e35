//! Camera recovery by silhouette alignment.
//!
//! Given a body mesh (pelvis at the origin), a target mask and a depth guess,
//! the solver searches `(f, Tx, Ty)` (and optionally `Tz`) minimizing
//! [`objective`]. Gradients are central finite differences of the smoothed
//! soft-IoU objective.
//!
//! Internally the search runs over `x = [ln(f/Tz), Tx, Ty, ln Tz]`. Both logs
//! keep `f` and `Tz` positive, and with `f/Tz` held fixed a change of `Tz`
//! leaves the image scale nearly unchanged, which decouples the depth
//! direction from the zoom direction.
//!
//! Stages:
//! 1. start at `(f, Tx, Ty, Tz) = (image height, 0, 0, tz_init)`;
//! 2. optional coarse alignment matching silhouette area and centroid;
//! 3. diagonally scaled steepest descent with step halving on failure.

use serde::{Deserialize, Serialize};

use crate::body_model::Mesh;
use crate::error::{Error, Result};
use crate::projection::CameraParams;
use crate::rasterizer::{gaussian_smooth, objective, rasterize, SilhouetteMask, DEFAULT_SIGMA_PX};

/// Finite-difference half-steps in the solver's internal coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSteps {
    /// Relative step on the focal length (applied to `ln(f/Tz)`).
    pub log_f: f64,
    /// Absolute step on `Tx` and `Ty`, meters.
    pub txy_m: f64,
    /// Relative step on `Tz`.
    pub log_tz: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps { log_f: 1e-3, txy_m: 1e-4, log_tz: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSolveConfig {
    pub sigma_px: f64,
    pub max_iters: usize,
    /// Unit step per coordinate: `[ln(f/Tz), Tx (pixels), Ty (pixels), ln Tz]`.
    pub learning_rates: [f64; 4],
    /// Relative objective decrease over `convergence_window` iterations below
    /// which the descent stops.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub optimize_tz: bool,
    pub fd_steps: FdSteps,
    /// Match silhouette area and centroid before descending.
    pub coarse_align: bool,
}

impl Default for CameraSolveConfig {
    fn default() -> Self {
        CameraSolveConfig {
            sigma_px: DEFAULT_SIGMA_PX,
            max_iters: 300,
            learning_rates: [0.05, 2.0, 2.0, 0.05],
            convergence_tol: 1e-5,
            convergence_window: 10,
            optimize_tz: false,
            fd_steps: FdSteps::default(),
            coarse_align: true,
        }
    }
}

impl CameraSolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_px", self.sigma_px),
            ("convergence_tol", self.convergence_tol),
            ("fd_steps.log_f", self.fd_steps.log_f),
            ("fd_steps.txy_m", self.fd_steps.txy_m),
            ("fd_steps.log_tz", self.fd_steps.log_tz),
        ];
        for (name, v) in positive.into_iter().chain(self.learning_rates.iter().map(|v| ("learning_rates", *v))) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidArgument("convergence_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Init,
    Coarse,
    Descent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub objective: f64,
    pub params: CameraParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSolveResult {
    pub f_px: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub final_objective: f64,
    pub iters_used: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl CameraSolveResult {
    pub fn params(&self) -> CameraParams {
        CameraParams::new(self.f_px, self.tx, self.ty, self.tz)
    }

    /// Soft IoU at the reported parameters.
    pub fn soft_iou(&self) -> f64 {
        (1.0 - self.final_objective).max(0.0)
    }
}

/// Central differences `(fn(p + h·e_i) − fn(p − h·e_i)) / 2h` per coordinate.
pub fn numerical_gradient(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    if params.len() != steps.len() {
        return Err(Error::InvalidArgument("one finite-difference step per parameter is required".into()));
    }
    if let Some(h) = steps.iter().find(|h| !(**h > 0.0)) {
        return Err(Error::InvalidArgument(format!("finite-difference steps must be positive, got {h}")));
    }
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for (i, &h) in steps.iter().enumerate() {
        probe[i] = params[i] + h;
        let up = f(&probe);
        probe[i] = params[i] - h;
        let down = f(&probe);
        probe[i] = params[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::SolverDiverged {
                reason: format!("non-finite objective while probing coordinate {i}"),
                trace: Vec::new(),
            });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

fn to_internal(p: &CameraParams) -> [f64; 4] {
    [(p.f_px / p.tz).ln(), p.tx, p.ty, p.tz.ln()]
}

fn to_params(x: &[f64]) -> CameraParams {
    let tz = x[3].exp();
    CameraParams::new((x[0] + x[3]).exp(), x[1], x[2], tz)
}

/// Objective bound to one mesh and one smoothed target.
pub struct Alignment<'a> {
    mesh: &'a Mesh,
    target: SilhouetteMask,
    sigma_px: f64,
    // Pixel count and centroid of the binarized target.
    target_moments: (f64, f64, f64),
}

impl<'a> Alignment<'a> {
    pub fn new(mesh: &'a Mesh, target: &SilhouetteMask, sigma_px: f64) -> Result<Self> {
        let inside = target.count_inside();
        if (inside as f64) < 0.01 * (target.width() as f64 * target.height() as f64) {
            return Err(Error::InvalidArgument(format!(
                "target mask is empty: {inside} pixels above 0.5, at least 1% of the image is required"
            )));
        }
        let target_moments = target.moments().expect("non-empty target");
        Ok(Alignment { mesh, target: gaussian_smooth(target, sigma_px)?, sigma_px, target_moments })
    }

    pub fn smoothed_target(&self) -> &SilhouetteMask {
        &self.target
    }

    pub fn evaluate(&self, params: &CameraParams) -> f64 {
        objective(params, self.mesh, &self.target, self.sigma_px)
    }

    fn eval_internal(&self, x: &[f64]) -> f64 {
        self.evaluate(&to_params(x))
    }

    /// Gradient with respect to `[ln(f/Tz), Tx, Ty, ln Tz]` (first `free` coordinates).
    ///
    /// The rendered silhouette is piecewise constant in the parameters, so a
    /// probe too small to flip any pixel reads as exactly zero. Such
    /// coordinates are re-probed with doubled steps, up to `MAX_FD_DOUBLINGS` times.
    pub fn gradient(&self, params: &CameraParams, fd: &FdSteps, free: usize) -> Result<Vec<f64>> {
        let x = to_internal(params);
        let base = [fd.log_f, fd.txy_m, fd.txy_m, fd.log_tz];
        let mut grad = Vec::with_capacity(free);
        for i in 0..free {
            let mut h = base[i];
            let mut g = 0.0;
            for _ in 0..=MAX_FD_DOUBLINGS {
                let mut probe = x;
                g = numerical_gradient(
                    |v| {
                        probe[i] = v[0];
                        self.eval_internal(&probe)
                    },
                    &x[i..=i],
                    &[h],
                )?[0];
                if g != 0.0 {
                    break;
                }
                h *= 2.0;
            }
            grad.push(g);
        }
        Ok(grad)
    }
}

const MAX_FD_DOUBLINGS: usize = 7;

struct Search {
    trace: Vec<TraceEntry>,
    best_x: [f64; 4],
    best: f64,
}

impl Search {
    fn record(&mut self, stage: Stage, x: &[f64; 4], value: f64) -> Result<()> {
        self.trace.push(TraceEntry { stage, objective: value, params: to_params(x) });
        if value.is_nan() {
            return Err(Error::SolverDiverged { reason: "objective evaluated to NaN".into(), trace: self.trace.clone() });
        }
        if value < self.best {
            self.best = value;
            self.best_x = *x;
        }
        Ok(())
    }

    fn diverged(&self, err: Error) -> Error {
        match err {
            Error::SolverDiverged { reason, .. } => Error::SolverDiverged { reason, trace: self.trace.clone() },
            other => other,
        }
    }
}

/// Relative zooms tried around the starting `f/Tz`.
const ZOOM_SCAN: [f64; 13] = [1.0 / 16.0, 0.088, 0.125, 0.177, 0.25, 0.354, 0.5, 0.707, 1.0, 1.414, 2.0, 2.828, 4.0];

/// Tries a geometric ladder of zooms, each with the centroid matched, and
/// keeps the best. Guards against starting on the wrong side of a basin when
/// the initial focal length is far from the truth.
fn zoom_scan(problem: &Alignment, x: &mut [f64; 4], current: &mut f64, search: &mut Search) -> Result<()> {
    let (_, cu_t, cv_t) = problem.target_moments;
    let (w, h) = (problem.target.width(), problem.target.height());
    let mut best = (*x, *current);
    for factor in ZOOM_SCAN {
        let zoom = x[0].exp() * factor;
        let mut candidate = [zoom.ln(), x[1], x[2], x[3]];
        let p = to_params(&candidate);
        let Ok(cam) = p.camera(w, h) else { continue };
        if let Some((_, cu, cv)) = rasterize(problem.mesh, &cam, &p.translation()).ok().and_then(|m| m.moments()) {
            candidate[1] += (cu_t - cu) / zoom;
            candidate[2] += (cv_t - cv) / zoom;
        }
        let value = problem.eval_internal(&candidate);
        search.record(Stage::Coarse, &candidate, value)?;
        if value < best.1 {
            best = (candidate, value);
        }
    }
    (*x, *current) = best;
    Ok(())
}

/// Iteratively matches silhouette area (via the zoom `f/Tz`) and centroid
/// (via `Tx`, `Ty`). Each update is kept only if the objective improves.
fn coarse_align(problem: &Alignment, x: &mut [f64; 4], current: &mut f64, search: &mut Search) -> Result<()> {
    let (n_t, cu_t, cv_t) = problem.target_moments;
    let (w, h) = (problem.target.width(), problem.target.height());
    zoom_scan(problem, x, current, search)?;
    for _ in 0..8 {
        let p = to_params(x);
        let Ok(cam) = p.camera(w, h) else { break };
        let Ok(rendered) = rasterize(problem.mesh, &cam, &p.translation()) else { break };
        let Some((n_r, cu_r, cv_r)) = rendered.moments() else { break };
        let ratio = (n_t / n_r).sqrt().clamp(0.25, 4.0);
        let zoom = x[0].exp() * ratio;
        // Centroid after rescaling about the principal point, then the shift still needed.
        let du = cu_t - (cam.cx + (cu_r - cam.cx) * ratio);
        let dv = cv_t - (cam.cy + (cv_r - cam.cy) * ratio);
        let candidate = [zoom.ln(), x[1] + du / zoom, x[2] + dv / zoom, x[3]];
        let value = problem.eval_internal(&candidate);
        search.record(Stage::Coarse, &candidate, value)?;
        if !(value < *current) {
            break;
        }
        *x = candidate;
        *current = value;
        if (ratio - 1.0).abs() < 1e-3 && du.hypot(dv) < 0.05 {
            break;
        }
    }
    Ok(())
}

const MAX_HALVINGS: usize = 12;
const MAX_STEP_SCALE: f64 = 4.0;

/// Steepest descent in coordinates scaled by `learning_rates`: each accepted
/// step moves the dominant coordinate by `alpha` units; a failed step halves
/// `alpha` and retries from the same point.
fn descend(
    problem: &Alignment,
    x: &mut [f64; 4],
    current: &mut f64,
    cfg: &CameraSolveConfig,
    free: usize,
    search: &mut Search,
) -> Result<(usize, bool)> {
    let mut alpha = 1.0;
    let mut history = vec![*current];
    for iter in 0..cfg.max_iters {
        let grad = problem.gradient(&to_params(x), &cfg.fd_steps, free).map_err(|e| search.diverged(e))?;
        // Pixel-valued translation units: one pixel of pelvis motion is 1/(f/Tz) meters.
        let zoom = x[0].exp();
        let unit = [cfg.learning_rates[0], cfg.learning_rates[1] / zoom, cfg.learning_rates[2] / zoom, cfg.learning_rates[3]];
        let scaled: Vec<f64> = grad.iter().zip(&unit).map(|(g, u)| g * u).collect();
        let norm = scaled.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if norm == 0.0 {
            return Ok((iter, true));
        }

        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut candidate = *x;
            for i in 0..free {
                candidate[i] -= alpha * unit[i] * scaled[i] / norm;
            }
            let value = problem.eval_internal(&candidate);
            search.record(Stage::Descent, &candidate, value)?;
            if value < *current {
                *x = candidate;
                *current = value;
                alpha = (alpha * 1.5).min(MAX_STEP_SCALE);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // The joint direction is dominated by one coordinate; the others
            // may still descend on their own.
            accepted = coordinate_steps(problem, x, current, &unit, &scaled, free, search)?
                || diagonal_steps(problem, x, current, &unit, free, search)?;
            alpha = 1.0;
        }
        if !accepted {
            // No descent at the finest step: stationary at this resolution.
            return Ok((iter + 1, true));
        }

        history.push(*current);
        if history.len() > cfg.convergence_window {
            let before = history[history.len() - 1 - cfg.convergence_window];
            if before - *current <= cfg.convergence_tol * before.max(f64::MIN_POSITIVE) {
                return Ok((iter + 1, true));
            }
        }
    }
    Ok((cfg.max_iters, false))
}

/// Backtracking along each coordinate separately, starting from one unit step.
///
/// The gradient sign is tried first, then the opposite direction, since a
/// finite difference over a few flipped pixels can point the wrong way.
fn coordinate_steps(
    problem: &Alignment,
    x: &mut [f64; 4],
    current: &mut f64,
    unit: &[f64; 4],
    scaled: &[f64],
    free: usize,
    search: &mut Search,
) -> Result<bool> {
    let mut improved = false;
    for i in 0..free {
        let first = if scaled[i] < 0.0 { -1.0 } else { 1.0 };
        'directions: for sign in [first, -first] {
            let mut step = unit[i] * sign;
            for _ in 0..MAX_HALVINGS / 2 {
                let mut candidate = *x;
                candidate[i] -= step;
                let value = problem.eval_internal(&candidate);
                search.record(Stage::Descent, &candidate, value)?;
                if value < *current {
                    *x = candidate;
                    *current = value;
                    improved = true;
                    break 'directions;
                }
                step *= 0.5;
            }
        }
    }
    Ok(improved)
}

/// Steps along `±e_i ± e_j` for every coordinate pair: the objective has
/// kinks, and a valley running diagonally defeats single-coordinate moves.
fn diagonal_steps(
    problem: &Alignment,
    x: &mut [f64; 4],
    current: &mut f64,
    unit: &[f64; 4],
    free: usize,
    search: &mut Search,
) -> Result<bool> {
    for i in 0..free {
        for j in i + 1..free {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut scale = 1.0;
                for _ in 0..MAX_HALVINGS / 2 {
                    let mut candidate = *x;
                    candidate[i] += si * scale * unit[i];
                    candidate[j] += sj * scale * unit[j];
                    let value = problem.eval_internal(&candidate);
                    search.record(Stage::Descent, &candidate, value)?;
                    if value < *current {
                        *x = candidate;
                        *current = value;
                        return Ok(true);
                    }
                    scale *= 0.5;
                }
            }
        }
    }
    Ok(false)
}

fn run(
    mesh: &Mesh,
    target: &SilhouetteMask,
    start: CameraParams,
    cfg: &CameraSolveConfig,
    coarse: bool,
    free: usize,
) -> Result<CameraSolveResult> {
    cfg.validate()?;
    let problem = Alignment::new(mesh, target, cfg.sigma_px)?;
    let mut x = to_internal(&start);
    let mut current = problem.eval_internal(&x);
    let mut search = Search { trace: Vec::new(), best_x: x, best: f64::INFINITY };
    search.record(Stage::Init, &x, current)?;

    if coarse {
        coarse_align(&problem, &mut x, &mut current, &mut search)?;
    }
    let (iters_used, converged) = descend(&problem, &mut x, &mut current, cfg, free, &mut search)?;

    let best = to_params(&search.best_x);
    Ok(CameraSolveResult {
        f_px: best.f_px,
        tx: best.tx,
        ty: best.ty,
        tz: best.tz,
        final_objective: search.best,
        iters_used,
        converged,
        trace: search.trace,
    })
}

/// Recovers `(f, Tx, Ty)` (and `Tz` when `cfg.optimize_tz`) aligning `mesh` to `target`.
pub fn solve_camera(mesh: &Mesh, target: &SilhouetteMask, tz_init: f64, cfg: &CameraSolveConfig) -> Result<CameraSolveResult> {
    if !(tz_init.is_finite() && tz_init > 0.0) {
        return Err(Error::InvalidArgument(format!("tz_init must be finite and positive, got {tz_init}")));
    }
    let start = CameraParams::new(target.height() as f64, 0.0, 0.0, tz_init);
    let free = if cfg.optimize_tz { 4 } else { 3 };
    run(mesh, target, start, cfg, cfg.coarse_align, free)
}

/// Continues from `result` with all four parameters free.
pub fn refine_tz(
    mesh: &Mesh,
    target: &SilhouetteMask,
    result: &CameraSolveResult,
    cfg: &CameraSolveConfig,
) -> Result<CameraSolveResult> {
    if cfg.max_iters == 0 {
        return Ok(CameraSolveResult { converged: false, ..result.clone() });
    }
    let refined = run(mesh, target, result.params(), cfg, false, 4)?;
    let mut trace = result.trace.clone();
    trace.extend(refined.trace.iter().copied());
    if refined.final_objective <= result.final_objective {
        Ok(CameraSolveResult { trace, ..refined })
    } else {
        Ok(CameraSolveResult { trace, iters_used: refined.iters_used, converged: refined.converged, ..result.clone() })
    }
}
