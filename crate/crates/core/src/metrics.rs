//! Image and depth quality metrics.
//!
//! `msc` is a multi-level consistency score: both images are pushed through a
//! fixed pyramid encoder (blur + 2x decimation per level, each level carrying
//! its color channels and Sobel gradients) and the mean squared feature
//! differences are summed over levels. It is a hand-built perceptual proxy and
//! is not comparable to learned perceptual metrics.

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image};

pub const PSNR_CAP: f64 = 99.0;
pub const DEFAULT_MSC_LEVELS: usize = 3;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub msc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Pixels that entered the averages.
    pub valid_pixels: usize,
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::domain(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(pred: &Image, gt: &Image) -> Result<f64> {
    check_dims(pred, gt)?;
    let n = (pred.pixels().len() * 3) as f64;
    // Channel-major order, the same order the consistency score sums in.
    let sum: f64 = (0..3)
        .flat_map(|k| {
            pred.pixels()
                .iter()
                .zip(gt.pixels())
                .map(move |(p, g)| (p[k] - g[k]).powi(2))
        })
        .sum();
    Ok(sum / n)
}

/// `10 log10(1 / mse)` for unit dynamic range, capped for identical images.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse > 0.0 {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    } else {
        PSNR_CAP
    }
}

fn gaussian_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable gaussian filter with the window truncated and renormalized at
/// the image border.
fn gaussian_filter(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (i, kv) in kernel.iter().enumerate() {
                    let off = i as isize - r as isize;
                    let (xx, yy) = if horizontal {
                        (x as isize + off, y as isize)
                    } else {
                        (x as isize, y as isize + off)
                    };
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        acc += kv * src[yy as usize * w + xx as usize];
                        norm += kv;
                    }
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Mean SSIM over pixels and channels (11x11 gaussian window, sigma 1.5,
/// unit dynamic range).
pub fn ssim(pred: &Image, gt: &Image) -> Result<f64> {
    check_dims(pred, gt)?;
    let (w, h) = (pred.width(), pred.height());
    let kernel = gaussian_kernel();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for k in 0..3 {
        let x: Vec<f64> = pred.pixels().iter().map(|p| p[k]).collect();
        let y: Vec<f64> = gt.pixels().iter().map(|p| p[k]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = gaussian_filter(&x, w, h, &kernel);
        let my = gaussian_filter(&y, w, h, &kernel);
        let sxx = gaussian_filter(&xx, w, h, &kernel);
        let syy = gaussian_filter(&yy, w, h, &kernel);
        let sxy = gaussian_filter(&xy, w, h, &kernel);
        let mut sum = 0.0;
        for i in 0..w * h {
            let vx = sxx[i] - mx[i] * mx[i];
            let vy = syy[i] - my[i] * my[i];
            let cov = sxy[i] - mx[i] * my[i];
            sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2))
                / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += sum / (w * h) as f64;
    }
    Ok(total / 3.0)
}

/// MSE, PSNR, SSIM and the multi-level consistency score. The consistency
/// score uses [`DEFAULT_MSC_LEVELS`], reduced when the image size is not
/// divisible enough.
pub fn image_metrics(pred: &Image, gt: &Image) -> Result<ImageMetrics> {
    let levels = max_msc_levels(pred.width(), pred.height()).min(DEFAULT_MSC_LEVELS);
    image_metrics_with_levels(pred, gt, levels)
}

pub fn image_metrics_with_levels(pred: &Image, gt: &Image, msc_levels: usize) -> Result<ImageMetrics> {
    let mse = mse(pred, gt)?;
    Ok(ImageMetrics {
        mse,
        psnr: psnr_from_mse(mse),
        ssim: ssim(pred, gt)?,
        msc: msc(pred, gt, msc_levels)?,
    })
}

/// Largest level count whose size constraint `width, height % 2^(m-1) == 0`
/// holds (at least one).
pub fn max_msc_levels(width: usize, height: usize) -> usize {
    let mut m = 1;
    while m < 16 && width.is_multiple_of(1 << m) && height.is_multiple_of(1 << m) {
        m += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MscOptions {
    pub levels: usize,
    pub gradients: bool,
}

pub fn msc(pred: &Image, gt: &Image, levels: usize) -> Result<f64> {
    msc_with(
        pred,
        gt,
        &MscOptions {
            levels,
            gradients: true,
        },
    )
}

pub fn msc_with(pred: &Image, gt: &Image, opts: &MscOptions) -> Result<f64> {
    check_dims(pred, gt)?;
    if opts.levels == 0 {
        return Err(Error::domain("msc needs at least one level"));
    }
    let div = 1usize << (opts.levels - 1);
    if !pred.width().is_multiple_of(div) || !pred.height().is_multiple_of(div) {
        return Err(Error::domain(format!(
            "{}x{} image is not divisible by {div} for {} levels",
            pred.width(),
            pred.height(),
            opts.levels
        )));
    }
    let mut a = Planar::from_image(pred);
    let mut b = Planar::from_image(gt);
    let mut total = 0.0;
    for level in 0..opts.levels {
        if level > 0 {
            a = a.pyramid_down();
            b = b.pyramid_down();
        }
        let fa = a.features(opts.gradients);
        let fb = b.features(opts.gradients);
        total += fa.iter().zip(&fb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / fa.len() as f64;
    }
    Ok(total)
}

/// Three color planes.
struct Planar {
    w: usize,
    h: usize,
    planes: [Vec<f64>; 3],
}

impl Planar {
    fn from_image(img: &Image) -> Self {
        let plane = |k: usize| img.pixels().iter().map(|p| p[k]).collect::<Vec<_>>();
        Self {
            w: img.width(),
            h: img.height(),
            planes: [plane(0), plane(1), plane(2)],
        }
    }

    fn at(&self, k: usize, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.planes[k][y * self.w + x]
    }

    /// Binomial 5-tap blur followed by 2x decimation.
    fn pyramid_down(&self) -> Self {
        const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w2, h2) = (self.w / 2, self.h / 2);
        let down = |k: usize| {
            let mut out = vec![0.0; w2 * h2];
            for y in 0..h2 {
                for x in 0..w2 {
                    let mut acc = 0.0;
                    for (j, ty) in TAPS.iter().enumerate() {
                        for (i, tx) in TAPS.iter().enumerate() {
                            acc += ty * tx * self.at(k, (2 * x + i) as isize - 2, (2 * y + j) as isize - 2);
                        }
                    }
                    out[y * w2 + x] = acc;
                }
            }
            out
        };
        Self {
            w: w2,
            h: h2,
            planes: [down(0), down(1), down(2)],
        }
    }

    /// Color planes, then normalized Sobel x and y per channel.
    fn features(&self, gradients: bool) -> Vec<f64> {
        let mut out: Vec<f64> = self.planes.iter().flatten().copied().collect();
        if gradients {
            for k in 0..3 {
                for y in 0..self.h as isize {
                    for x in 0..self.w as isize {
                        let p = |dx: isize, dy: isize| self.at(k, x + dx, y + dy);
                        let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1)) / 8.0;
                        out.push(gx);
                    }
                }
                for y in 0..self.h as isize {
                    for x in 0..self.w as isize {
                        let p = |dx: isize, dy: isize| self.at(k, x + dx, y + dy);
                        let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1)) / 8.0;
                        out.push(gy);
                    }
                }
            }
        }
        out
    }
}

/// Weighted sum of the pixel loss and the consistency score.
pub fn composite_score(mse: f64, msc: f64, alpha: f64, beta: f64) -> f64 {
    alpha * mse + beta * msc
}

/// Standard monocular depth metrics over pixels where both maps have a
/// positive depth. Threshold ratios use strict inequality.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::domain("depth map sizes differ"));
    }
    let (mut abs_rel, mut sq_rel, mut sq, mut n) = (0.0, 0.0, 0.0, 0usize);
    let mut within = [0usize; 3];
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    for (p, g) in pred.values().iter().zip(gt.values()) {
        let (Some(p), Some(g)) = (*p, *g) else { continue };
        if !(g > 0.0) {
            continue;
        }
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let ratio = (p / g).max(g / p);
        for (c, t) in within.iter_mut().zip(thresholds) {
            if ratio < t {
                *c += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoData(
            "no pixel has both a predicted and a ground-truth depth".into(),
        ));
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
        valid_pixels: n,
    })
}
