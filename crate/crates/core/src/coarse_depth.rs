//! Plane-sweep coarse depth.
//!
//! For every fronto-parallel depth hypothesis of the target camera, each
//! reference image is warped into the target view through the plane-induced
//! homography. The per-pixel cost is the across-view color variance of the
//! warped values; depth is the softmin-weighted mean of the hypotheses.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::channel_mean_variance;
use crate::geometry::{apply_homography, pixel_center, plane_homography, z_to_ray_distance, Camera};
use crate::image::{write_f32_raw, DepthMap, PosedImage};

pub const DEFAULT_HYPOTHESES: usize = 64;
/// Cost for pixels seen by fewer than two warped views.
pub const DEFAULT_COST_CEILING: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    hypotheses: Vec<f64>,
    /// Hypothesis-major: `costs[k * width * height + y * width + x]`.
    costs: Vec<f64>,
}

impl CostVolume {
    pub fn new(width: usize, height: usize, hypotheses: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        validate_hypotheses(&hypotheses)?;
        if costs.len() != width * height * hypotheses.len() {
            return Err(Error::domain("cost buffer does not match volume dimensions"));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::domain("costs must be finite and non-negative"));
        }
        Ok(Self {
            width,
            height,
            hypotheses,
            costs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn hypotheses(&self) -> &[f64] {
        &self.hypotheses
    }

    pub fn cost(&self, x: usize, y: usize, k: usize) -> f64 {
        self.costs[k * self.width * self.height + y * self.width + x]
    }

    pub fn pixel_costs(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.hypotheses.len()).map(|k| self.cost(x, y, k)).collect()
    }

    /// Index of the cheapest hypothesis; `None` on ties for the minimum.
    pub fn unique_argmin(&self, x: usize, y: usize) -> Option<usize> {
        let costs = self.pixel_costs(x, y);
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hits = costs.iter().enumerate().filter(|(_, c)| **c == min);
        let first = hits.next()?.0;
        hits.next().is_none().then_some(first)
    }

    pub fn argmin(&self, x: usize, y: usize) -> usize {
        let costs = self.pixel_costs(x, y);
        (0..costs.len()).fold(0, |best, k| if costs[k] < costs[best] { k } else { best })
    }

    /// Writes the raw costs (hypothesis-major `f32`) for inspection.
    pub fn dump_raw(&self, path: &Path) -> Result<()> {
        write_f32_raw(path, self.costs.iter().copied())
    }
}

fn validate_hypotheses(h: &[f64]) -> Result<()> {
    if h.len() < 2 {
        return Err(Error::domain("at least two depth hypotheses are required"));
    }
    if h[0] <= 0.0 || h.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain(
            "depth hypotheses must be positive and strictly increasing",
        ));
    }
    Ok(())
}

/// `count` depths spaced uniformly in inverse depth over `[near, far]`.
pub fn inverse_depth_hypotheses(near: f64, far: f64, count: usize) -> Result<Vec<f64>> {
    if !(near > 0.0 && far > near) || count < 2 {
        return Err(Error::domain(format!(
            "need 0 < near < far and >= 2 hypotheses, got [{near}, {far}] x {count}"
        )));
    }
    let (a, b) = (1.0 / far, 1.0 / near);
    let mut out: Vec<f64> = (0..count)
        .map(|i| 1.0 / (a + (b - a) * i as f64 / (count - 1) as f64))
        .collect();
    out.reverse();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostVolumeParams {
    pub ceiling: f64,
    /// 3x3 box filter over each hypothesis slice.
    pub box_filter: bool,
}

impl Default for CostVolumeParams {
    fn default() -> Self {
        Self {
            ceiling: DEFAULT_COST_CEILING,
            box_filter: false,
        }
    }
}

pub fn build_cost_volume(
    target: &Camera,
    refs: &[PosedImage],
    hypotheses: &[f64],
    params: &CostVolumeParams,
) -> Result<CostVolume> {
    if refs.len() < 2 {
        return Err(Error::Config(format!(
            "plane sweep needs at least two reference views, got {}",
            refs.len()
        )));
    }
    validate_hypotheses(hypotheses)?;
    let (w, h) = (target.width(), target.height());

    let slices: Vec<Vec<f64>> = hypotheses
        .par_iter()
        .map(|&depth| {
            let homographies = refs
                .iter()
                .map(|r| plane_homography(&r.camera, target, depth))
                .collect::<Result<Vec<_>>>()?;
            let mut slice = vec![0.0; w * h];
            let mut fetched: Vec<[f64; 3]> = Vec::with_capacity(refs.len());
            for y in 0..h {
                for x in 0..w {
                    fetched.clear();
                    let px = pixel_center(x, y);
                    for (r, hm) in refs.iter().zip(&homographies) {
                        if let Some(c) = apply_homography(hm, px).and_then(|q| r.image.bilinear(q)) {
                            fetched.push(c);
                        }
                    }
                    slice[y * w + x] = if fetched.len() < 2 {
                        params.ceiling
                    } else {
                        let views: Vec<&[f64]> = fetched.iter().map(|c| c.as_slice()).collect();
                        channel_mean_variance(&views)
                    };
                }
            }
            if params.box_filter {
                slice = box_filter_3x3(&slice, w, h);
            }
            Ok(slice)
        })
        .collect::<Result<Vec<_>>>()?;

    CostVolume::new(w, h, hypotheses.to_vec(), slices.concat())
}

fn box_filter_3x3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut sum, mut n) = (0.0, 0.0);
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    sum += src[yy * w + xx];
                    n += 1.0;
                }
            }
            out[y * w + x] = sum / n;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthProbabilities {
    width: usize,
    height: usize,
    n_hypotheses: usize,
    probs: Vec<f64>,
}

impl DepthProbabilities {
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.n_hypotheses;
        &self.probs[i..i + self.n_hypotheses]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Per-pixel `softmax(-cost / tau)` over the hypotheses.
pub fn depth_probabilities(vol: &CostVolume, tau: f64) -> Result<DepthProbabilities> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!(
            "softmax temperature must be positive, got {tau}"
        )));
    }
    let d = vol.hypotheses.len();
    let mut probs = Vec::with_capacity(vol.width * vol.height * d);
    for y in 0..vol.height {
        for x in 0..vol.width {
            let costs = vol.pixel_costs(x, y);
            let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let e: Vec<f64> = costs.iter().map(|c| (-(c - min) / tau).exp()).collect();
            let total: f64 = e.iter().sum();
            probs.extend(e.iter().map(|v| v / total));
        }
    }
    Ok(DepthProbabilities {
        width: vol.width,
        height: vol.height,
        n_hypotheses: d,
        probs,
    })
}

/// Probability-weighted hypothesis depth (camera-frame z) per pixel.
pub fn regress_depth(vol: &CostVolume, tau: f64) -> Result<DepthMap> {
    let probs = depth_probabilities(vol, tau)?;
    let mut out = DepthMap::new(vol.width, vol.height, 0.0);
    for y in 0..vol.height {
        for x in 0..vol.width {
            let d: f64 = probs.pixel(x, y).iter().zip(&vol.hypotheses).map(|(p, h)| p * h).sum();
            // Rounding can push a convex combination a hair outside the hull.
            let d = d.clamp(vol.hypotheses[0], vol.hypotheses[vol.hypotheses.len() - 1]);
            out.set(x, y, Some(d));
        }
    }
    Ok(out)
}

/// Per-pixel affine map `scale · d + offset`; background stays background.
pub fn rescale_depth(d: &DepthMap, scale: f64, offset: f64) -> Result<DepthMap> {
    if !(scale > 0.0) {
        return Err(Error::domain(format!("depth scale must be positive, got {scale}")));
    }
    let mut out = d.clone();
    for v in out.values_mut() {
        *v = v.map(|z| scale * z + offset);
    }
    Ok(out)
}

/// Converts a camera-frame z depth map into per-pixel ray distances.
pub fn z_depth_to_ray_distance(d: &DepthMap, camera: &Camera) -> DepthMap {
    let mut out = d.clone();
    for y in 0..d.height() {
        for x in 0..d.width() {
            out.set(
                x,
                y,
                d.get(x, y)
                    .map(|z| z_to_ray_distance(&camera.intrinsics, pixel_center(x, y), z)),
            );
        }
    }
    out
}
