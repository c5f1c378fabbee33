//! Volumetric accumulation along rays and whole-view rendering.
//!
//! Samples are sorted by `t`. Each sample owns the slab that ends at it:
//! `delta_j = t_j - t_{j-1}`, with the first slab measured from the start of
//! the sampled interval. Anything beyond the last sample shows the background.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{FieldProvider, FieldSample};
use crate::geometry::{pixel_center, Camera, Ray};
use crate::image::{DepthMap, Image, Rgb};
use crate::sampling::{dynamic_samples, geometry_interval, stratified_samples, SamplerBudget, SamplingInterval};

/// Default opacity below which a ray has no depth.
pub const DEFAULT_EPS_BG: f64 = 1e-3;
/// Samples closer than this are merged.
pub const DUPLICATE_T_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Stratified,
    /// Uniform pre-samples placed before dynamic sampling.
    Coarse,
    /// The three seeded starting points of dynamic sampling.
    Initial,
    /// Placed by a predict-then-refine step.
    Refined,
}

impl SampleKind {
    pub fn is_dynamic(self) -> bool {
        matches!(self, SampleKind::Initial | SampleKind::Refined)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub t: f64,
    pub sigma: f64,
    pub color: Rgb,
    pub delta: f64,
    /// Transmittance reaching the start of this sample's slab.
    pub transmittance: f64,
    pub weight: f64,
    pub kind: SampleKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples {
    start: f64,
    samples: Vec<RaySample>,
}

impl RaySamples {
    /// Builds samples from evaluated positions. Positions are sorted,
    /// near-duplicates collapsed, deltas set and transmittances filled.
    pub fn new(start: f64, mut points: Vec<(f64, FieldSample, SampleKind)>) -> Result<Self> {
        if points.iter().any(|(t, _, _)| !t.is_finite() || *t < start) {
            return Err(Error::domain(
                "sample positions must be finite and not before the interval start",
            ));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points.dedup_by(|b, a| (b.0 - a.0).abs() <= DUPLICATE_T_TOLERANCE);
        let mut prev = start;
        let samples = points
            .into_iter()
            .map(|(t, f, kind)| {
                let delta = t - prev;
                prev = t;
                RaySample {
                    t,
                    sigma: f.sigma,
                    color: f.color,
                    delta,
                    transmittance: 1.0,
                    weight: 0.0,
                    kind,
                }
            })
            .collect();
        let mut out = Self { start, samples };
        transmittances(&mut out);
        Ok(out)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn samples(&self) -> &[RaySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn opacity(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }

    /// Transmittance left after the last sample.
    pub fn residual_transmittance(&self) -> f64 {
        (-self.samples.iter().map(|s| s.sigma * s.delta).sum::<f64>()).exp()
    }
}

/// Fills `T_j = exp(-Σ_{k<j} σ_k δ_k)` and `w_j = T_j (1 - exp(-σ_j δ_j))`.
pub fn transmittances(samples: &mut RaySamples) {
    let mut optical_depth = 0.0f64;
    for s in &mut samples.samples {
        let t = (-optical_depth).exp();
        let tau = s.sigma * s.delta;
        s.transmittance = t;
        s.weight = t * (1.0 - (-tau).exp());
        optical_depth += tau;
    }
}

/// `Σ w_j c_j + (1 - Σ w_j) · background`.
pub fn composite_color(samples: &RaySamples, background: Rgb) -> Rgb {
    let mut c = [0.0; 3];
    let mut opacity = 0.0;
    for s in &samples.samples {
        opacity += s.weight;
        for k in 0..3 {
            c[k] += s.weight * s.color[k];
        }
    }
    let rest = 1.0 - opacity;
    [
        (c[0] + rest * background[0]).clamp(0.0, 1.0),
        (c[1] + rest * background[1]).clamp(0.0, 1.0),
        (c[2] + rest * background[2]).clamp(0.0, 1.0),
    ]
}

/// Weight-normalized mean sample depth, `None` when the ray is nearly empty.
pub fn fine_depth(samples: &RaySamples, eps_bg: f64) -> Option<f64> {
    let (mut wt, mut w) = (0.0, 0.0);
    for s in &samples.samples {
        wt += s.weight * s.t;
        w += s.weight;
    }
    (w >= eps_bg && w > 0.0).then(|| wt / w)
}

/// Per-ray sampling strategy.
#[derive(Debug, Clone, Copy)]
pub enum RaySampler<'a> {
    Stratified {
        n: usize,
    },
    /// Geometry-aware dynamic sampling around a coarse depth map. The map
    /// holds distances along each pixel's ray, not camera-frame z.
    Gads {
        n_coarse: usize,
        n_dynamic: usize,
        delta_d: f64,
        coarse_depth: &'a DepthMap,
    },
}

impl RaySampler<'_> {
    pub fn samples_per_ray(&self) -> usize {
        match self {
            RaySampler::Stratified { n } => *n,
            RaySampler::Gads {
                n_coarse, n_dynamic, ..
            } => n_coarse + n_dynamic,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RenderSettings {
    pub near: f64,
    pub far: f64,
    pub seed: u64,
    pub eps_bg: f64,
    pub background: Rgb,
}

#[derive(Debug, Clone)]
pub struct RenderedImage {
    pub image: Image,
    /// Accumulated opacity Σw per pixel.
    pub opacity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: RenderedImage,
    pub depth: DepthMap,
    /// Exact number of field queries made.
    pub field_evaluations: u64,
}

struct CountingField<'a> {
    inner: &'a dyn FieldProvider,
    count: AtomicU64,
}

impl FieldProvider for CountingField<'_> {
    fn query(&self, x: &Vector3<f64>, dir: &Vector3<f64>) -> FieldSample {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.query(x, dir)
    }
}

/// Samples one ray with the stratified sampler over its full bounds.
pub fn sample_stratified(field: &dyn FieldProvider, ray: &Ray, n: usize, seed: u64) -> Result<RaySamples> {
    let points = stratified_samples(ray, n, seed)?
        .into_iter()
        .map(|t| (t, field.query(&ray.at(t), &ray.direction), SampleKind::Stratified))
        .collect();
    RaySamples::new(ray.t_near, points)
}

fn render_pixel(
    field: &dyn FieldProvider,
    camera: &Camera,
    sampler: &RaySampler,
    settings: &RenderSettings,
    x: usize,
    y: usize,
) -> Result<RaySamples> {
    let ray = camera.ray(pixel_center(x, y), settings.near, settings.far)?;
    let seed = crate::rng::derive_seed(settings.seed, (y * camera.width() + x) as u64);
    match sampler {
        RaySampler::Stratified { n } => sample_stratified(field, &ray, *n, seed),
        RaySampler::Gads {
            n_coarse,
            n_dynamic,
            delta_d,
            coarse_depth,
        } => {
            let interval = geometry_interval(coarse_depth.get(x, y), *delta_d, ray.t_near, ray.t_far)?;
            let budget = SamplerBudget::new(*n_coarse, *n_dynamic, seed)?;
            dynamic_samples(field, &ray, interval, &budget)
        }
    }
}

/// Renders every pixel of `camera` with the given sampler. Pixels run in
/// parallel; results do not depend on the thread count.
pub fn render_view(
    field: &dyn FieldProvider,
    camera: &Camera,
    sampler: &RaySampler,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    let (w, h) = (camera.width(), camera.height());
    if let RaySampler::Gads {
        coarse_depth, delta_d, ..
    } = sampler
    {
        if coarse_depth.width() != w || coarse_depth.height() != h {
            return Err(Error::Config(format!(
                "coarse depth is {}x{}, camera is {w}x{h}",
                coarse_depth.width(),
                coarse_depth.height()
            )));
        }
        if !(*delta_d > 0.0) {
            return Err(Error::domain(format!("delta_d must be positive, got {delta_d}")));
        }
    }
    let counting = CountingField {
        inner: field,
        count: AtomicU64::new(0),
    };
    let rows: Vec<Vec<(Rgb, f64, Option<f64>)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let samples =
                        render_pixel(&counting, camera, sampler, settings, x, y).map_err(|e| Error::Pixel {
                            x,
                            y,
                            source: Box::new(e),
                        })?;
                    Ok((
                        composite_color(&samples, settings.background),
                        samples.opacity().clamp(0.0, 1.0),
                        fine_depth(&samples, settings.eps_bg),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut image = Image::new(w, h, [0.0; 3]);
    let mut opacity = vec![0.0; w * h];
    let mut depth = DepthMap::new(w, h, settings.eps_bg);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (c, a, d)) in row.into_iter().enumerate() {
            image.set(x, y, c);
            opacity[y * w + x] = a;
            depth.set(x, y, d);
        }
    }
    Ok(RenderOutput {
        image: RenderedImage { image, opacity },
        depth,
        field_evaluations: counting.count.into_inner(),
    })
}

/// Samples one ray of a GADS sampler given its coarse depth; exposed for
/// single-ray experiments.
pub fn sample_gads(
    field: &dyn FieldProvider,
    ray: &Ray,
    coarse_depth: Option<f64>,
    delta_d: f64,
    budget: &SamplerBudget,
) -> Result<(SamplingInterval, RaySamples)> {
    let interval = geometry_interval(coarse_depth, delta_d, ray.t_near, ray.t_far)?;
    Ok((interval, dynamic_samples(field, ray, interval, budget)?))
}
