use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MaskKind {
    Binary,
    Soft { sigma_px: f64 },
}

/// Row-major grid of coverage values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SilhouetteMask {
    width: u32,
    height: u32,
    values: Vec<f64>,
    kind: MaskKind,
}

impl SilhouetteMask {
    pub fn empty(width: u32, height: u32) -> Self {
        SilhouetteMask { width, height, values: vec![0.0; width as usize * height as usize], kind: MaskKind::Binary }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>, kind: MaskKind) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "mask of {width}x{height} needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("mask value {v} outside [0, 1]")));
        }
        if kind == MaskKind::Binary && values.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidArgument("binary mask may only contain 0 and 1".into()));
        }
        Ok(SilhouetteMask { width, height, values, kind })
    }

    /// Binary mask from a predicate over pixel coordinates.
    pub fn from_fn(width: u32, height: u32, inside: impl Fn(u32, u32) -> bool) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(if inside(x, y) { 1.0 } else { 0.0 });
            }
        }
        SilhouetteMask { width, height, values, kind: MaskKind::Binary }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub(crate) fn set_inside(&mut self, x: usize, y: usize) {
        self.values[y * self.width as usize + x] = 1.0;
    }

    pub fn same_size(&self, other: &SilhouetteMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Number of pixels with value above 0.5.
    pub fn count_inside(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.5).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count_inside() as f64 / self.values.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Binary mask with pixels above 0.5 set.
    pub fn thresholded(&self) -> SilhouetteMask {
        SilhouetteMask {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| if *v > 0.5 { 1.0 } else { 0.0 }).collect(),
            kind: MaskKind::Binary,
        }
    }

    /// Pixel count and centroid (pixel-center coordinates) of the thresholded mask.
    pub fn moments(&self) -> Option<(f64, f64, f64)> {
        let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
        let w = self.width as usize;
        for (i, v) in self.values.iter().enumerate() {
            if *v > 0.5 {
                n += 1.0;
                sx += (i % w) as f64 + 0.5;
                sy += (i / w) as f64 + 0.5;
            }
        }
        (n > 0.0).then(|| (n, sx / n, sy / n))
    }
}

/// Truncated (at ⌈3σ⌉) and unnormalized Gaussian taps, index 0 is the center.
pub fn gaussian_taps(sigma_px: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_px).ceil() as usize;
    (0..=radius).map(|k| (-((k * k) as f64) / (2.0 * sigma_px * sigma_px)).exp()).collect()
}

/// Separable Gaussian blur. Taps falling outside the image are dropped and the
/// remaining weights renormalized, so constant images are fixed points.
pub fn gaussian_smooth(mask: &SilhouetteMask, sigma_px: f64) -> Result<SilhouetteMask> {
    if !(sigma_px.is_finite() && sigma_px > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be finite and positive, got {sigma_px}")));
    }
    let taps = gaussian_taps(sigma_px);
    let (w, h) = (mask.width as usize, mask.height as usize);
    let horizontal = blur_lines(&mask.values, w, h, 1, w, &taps);
    let vertical = blur_lines(&horizontal, h, w, w, 1, &taps);
    Ok(SilhouetteMask {
        width: mask.width,
        height: mask.height,
        values: vertical.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        kind: MaskKind::Soft { sigma_px },
    })
}

/// Blurs `count` lines of `len` samples; sample `i` of line `l` lives at
/// `l * line_stride + i * step`.
fn blur_lines(input: &[f64], len: usize, count: usize, step: usize, line_stride: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() - 1;
    let norm: Vec<f64> = (0..len)
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(len - 1);
            (lo..=hi).map(|j| taps[i.abs_diff(j)]).sum()
        })
        .collect();
    let mut out = vec![0.0; input.len()];
    for l in 0..count {
        let base = l * line_stride;
        let at = |i: usize| input[base + i * step];
        let Some(first) = (0..len).find(|&i| at(i) != 0.0) else { continue };
        let last = (0..len).rev().find(|&i| at(i) != 0.0).unwrap();
        for i in first.saturating_sub(r)..=(last + r).min(len - 1) {
            let lo = i.saturating_sub(r).max(first);
            let hi = (i + r).min(last);
            if lo > hi {
                continue;
            }
            let acc: f64 = (lo..=hi).map(|j| taps[i.abs_diff(j)] * at(j)).sum();
            out[base + i * step] = acc / norm[i];
        }
    }
    out
}

/// Soft IoU value; `empty_union` flags the 0/0 case, reported as 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Overlap {
    pub iou: f64,
    pub empty_union: bool,
}

/// Σ min(a, b) / Σ max(a, b).
pub fn soft_iou(a: &SilhouetteMask, b: &SilhouetteMask) -> Result<Overlap> {
    if !a.same_size(b) {
        return Err(Error::InvalidArgument(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        inter += x.min(*y);
        union += x.max(*y);
    }
    if union == 0.0 {
        log::warn!("soft IoU of two empty masks; reporting 0");
        return Ok(Overlap { iou: 0.0, empty_union: true });
    }
    Ok(Overlap { iou: inter / union, empty_union: false })
}
