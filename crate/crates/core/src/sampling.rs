//! Sample placement along rays.
//!
//! Two strategies are provided: stratified sampling over the whole ray, and
//! geometry-aware dynamic sampling. The latter restricts samples to an
//! interval around a coarse depth estimate, then repeatedly fits a local
//! linear model of transmittance and places the next sample where that model
//! predicts `T = 0.5`, i.e. on the implicit surface.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fields::{FieldProvider, FieldSample, ISO_TRANSMITTANCE};
use crate::geometry::Ray;
use crate::rendering::{RaySamples, SampleKind};

/// Transmittance slopes below this are treated as flat.
pub const FLAT_SLOPE: f64 = 1e-9;
/// Intervals narrower than this receive a single sample.
pub const DEGENERATE_WIDTH: f64 = 1e-9;
/// A new sample this close to an existing one is a duplicate.
pub const DUPLICATE_DISTANCE: f64 = 1e-9;
/// Duplicates are moved by this fraction of the interval width.
pub const NUDGE_FRACTION: f64 = 1e-6;
/// A prediction this close (as a fraction of the interval width) to an
/// existing sample adds no information about the crossing.
pub const CONVERGED_FRACTION: f64 = 5e-3;
/// A slab whose thinner end has at most this fraction of the denser end's
/// density is treated as holding a surface boundary.
pub const BOUNDARY_DENSITY_RATIO: f64 = 0.1;
const INITIAL_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SamplingInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::domain(format!("invalid sampling interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

/// Two-point linear model `T(t) ≈ slope · t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittanceModel {
    pub slope: f64,
    pub intercept: f64,
    pub support: (f64, f64),
}

impl TransmittanceModel {
    pub fn fit(a: (f64, f64), b: (f64, f64)) -> Result<Self> {
        if !(a.0 < b.0) {
            return Err(Error::domain(format!(
                "fit points must be ordered, got t = {} and {}",
                a.0, b.0
            )));
        }
        let slope = (b.1 - a.1) / (b.0 - a.0);
        Ok(Self {
            slope,
            intercept: a.1 - slope * a.0,
            support: (a.0, b.0),
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }

    /// Unclamped position where the model reaches 0.5, `None` if flat.
    pub fn predict_half(&self) -> Option<f64> {
        (self.slope.abs() >= FLAT_SLOPE).then(|| (ISO_TRANSMITTANCE - self.intercept) / self.slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerBudget {
    pub n_coarse: usize,
    pub n_dynamic: usize,
    pub seed: u64,
}

impl SamplerBudget {
    pub fn new(n_coarse: usize, n_dynamic: usize, seed: u64) -> Result<Self> {
        if n_coarse + n_dynamic == 0 {
            return Err(Error::domain("sampler budget must place at least one sample"));
        }
        Ok(Self {
            n_coarse,
            n_dynamic,
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.n_coarse + self.n_dynamic
    }
}

/// One jittered position per equal bin of `[lo, hi]`. `jitter` yields values
/// in `[0, 1)`.
pub fn stratified_positions(lo: f64, hi: f64, n: usize, mut jitter: impl FnMut() -> f64) -> Vec<f64> {
    let step = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + jitter()) * step).collect()
}

pub fn stratified_samples(ray: &Ray, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("stratified sampling needs at least one sample"));
    }
    let mut rng = crate::rng::stream_rng(seed, 0);
    Ok(stratified_positions(ray.t_near, ray.t_far, n, || rng.gen::<f64>()))
}

/// `[d_c - Δd, d_c + Δd]` clamped to the ray bounds. Falls back to the whole
/// ray when there is no coarse depth or the clamped interval is empty.
pub fn geometry_interval(d_c: Option<f64>, delta_d: f64, t_near: f64, t_far: f64) -> Result<SamplingInterval> {
    if !(delta_d > 0.0) {
        return Err(Error::domain(format!("delta_d must be positive, got {delta_d}")));
    }
    let full = SamplingInterval::new(t_near, t_far)?;
    let Some(d) = d_c.filter(|d| d.is_finite()) else {
        return Ok(full);
    };
    let lo = (d - delta_d).max(t_near);
    let hi = (d + delta_d).min(t_far);
    if lo < hi {
        SamplingInterval::new(lo, hi)
    } else {
        Ok(full)
    }
}

/// Position where the model predicts `T = 0.5`, clamped to the interval. A
/// flat model yields the interval midpoint.
pub fn solve_t_half(model: &TransmittanceModel, interval: &SamplingInterval) -> f64 {
    model.predict_half().map_or(interval.midpoint(), |t| interval.clamp(t))
}

/// Working set of evaluated samples, kept sorted by `t`.
struct SampleSet {
    points: Vec<(f64, FieldSample, SampleKind)>,
}

impl SampleSet {
    fn insert(&mut self, t: f64, f: FieldSample, kind: SampleKind) {
        let idx = self.points.partition_point(|p| p.0 < t);
        self.points.insert(idx, (t, f, kind));
    }

    /// `(t, T(t))` for the interval start and for every sample. Optical
    /// depth between samples uses the trapezoid rule; the first slab takes
    /// the first sample's density.
    fn profile(&self, lo: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.points.len() + 1);
        out.push((lo, 1.0));
        let (mut prev, mut prev_sigma, mut depth) = (lo, None, 0.0);
        for (t, f, _) in &self.points {
            let left = prev_sigma.unwrap_or(f.sigma);
            depth += 0.5 * (left + f.sigma) * (t - prev);
            prev = *t;
            prev_sigma = Some(f.sigma);
            out.push((*t, (-depth).exp()));
        }
        out
    }

    fn nearest_distance(&self, t: f64) -> f64 {
        self.points
            .iter()
            .map(|p| (p.0 - t).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Midpoint of the widest-impact slab up to `end` that enters or
    /// leaves matter. The trapezoid rule cannot tell where inside such a
    /// slab the boundary sits, so its optical depth is the least certain.
    fn boundary_slab(&self, end: f64, min_width: f64) -> Option<f64> {
        let mut best = None;
        let mut best_score = 0.0;
        for w in self.points.windows(2).take_while(|w| w[1].0 <= end) {
            let (a, b) = (&w[0], &w[1]);
            let (thin, dense) = (a.1.sigma.min(b.1.sigma), a.1.sigma.max(b.1.sigma));
            let score = (dense - thin) * (b.0 - a.0);
            if thin <= BOUNDARY_DENSITY_RATIO * dense && b.0 - a.0 > min_width && score > best_score {
                best_score = score;
                best = Some(0.5 * (a.0 + b.0));
            }
        }
        best
    }

    fn is_duplicate(&self, lo: f64, t: f64) -> bool {
        if (t - lo).abs() < DUPLICATE_DISTANCE {
            return true;
        }
        let idx = self.points.partition_point(|p| p.0 < t);
        let near = |i: usize| self.points.get(i).is_some_and(|p| (p.0 - t).abs() < DUPLICATE_DISTANCE);
        near(idx) || (idx > 0 && near(idx - 1))
    }

    /// Midpoint of the widest gap between consecutive samples, counting the
    /// interval ends.
    fn largest_gap_midpoint(&self, interval: &SamplingInterval) -> f64 {
        let mut best = (interval.lo, interval.hi);
        let mut prev = interval.lo;
        let mut widest = -1.0;
        for t in self.points.iter().map(|p| p.0).chain(std::iter::once(interval.hi)) {
            if t - prev > widest {
                widest = t - prev;
                best = (prev, t);
            }
            prev = t;
        }
        0.5 * (best.0 + best.1)
    }
}

/// The adjacent profile pair used for the linear fit, and whether its
/// transmittances straddle 0.5.
fn select_pair(profile: &[(f64, f64)]) -> ((f64, f64), (f64, f64), bool) {
    // Transmittance is non-increasing, so the first drop below 0.5 is the
    // only straddling pair.
    if let Some(i) = profile.iter().position(|p| p.1 < ISO_TRANSMITTANCE).filter(|&i| i > 0) {
        return (profile[i - 1], profile[i], true);
    }
    let mut best = 1;
    let mut best_score = f64::INFINITY;
    for i in 1..profile.len() {
        let score = (profile[i - 1].1 - ISO_TRANSMITTANCE)
            .abs()
            .min((profile[i].1 - ISO_TRANSMITTANCE).abs());
        if score < best_score {
            best_score = score;
            best = i;
        }
    }
    (profile[best - 1], profile[best], false)
}

fn next_position(set: &SampleSet, interval: &SamplingInterval) -> f64 {
    let profile = set.profile(interval.lo);
    let (a, b, straddles) = select_pair(&profile);
    let model = match TransmittanceModel::fit(a, b) {
        Ok(m) => m,
        Err(_) => return set.largest_gap_midpoint(interval),
    };
    let mut t = match model.predict_half() {
        None => return set.largest_gap_midpoint(interval),
        Some(t) if straddles => {
            let t = t.clamp(a.0, b.0);
            // Once predictions stop moving, the remaining error is in the
            // profile itself, so spend the sample where it is least known.
            let settle = CONVERGED_FRACTION * interval.width();
            if set.nearest_distance(t) < settle {
                if let Some(m) = set.boundary_slab(b.0, 2.0 * settle) {
                    return m;
                }
            }
            t
        }
        // Without a straddling pair the fit is an extrapolation; once it
        // leaves the interval it carries no information about where to look.
        Some(t) if !interval.contains(t) => return set.largest_gap_midpoint(interval),
        Some(t) => t,
    };
    if set.is_duplicate(interval.lo, t) {
        let nudge = NUDGE_FRACTION * interval.width();
        t = if t + nudge <= interval.hi { t + nudge } else { t - nudge };
        if set.is_duplicate(interval.lo, t) || !interval.contains(t) {
            t = set.largest_gap_midpoint(interval);
        }
    }
    t
}

/// Geometry-aware dynamic sampling of `ray` inside `interval`.
///
/// Places `n_coarse` stratified samples, then up to three seeded starting
/// points in the thirds of the interval, then predict-then-refine samples
/// until `n_dynamic` dynamic samples exist. Each sample costs exactly one
/// field query and every queried sample is returned.
pub fn dynamic_samples(
    field: &dyn FieldProvider,
    ray: &Ray,
    interval: SamplingInterval,
    budget: &SamplerBudget,
) -> Result<RaySamples> {
    let query = |t: f64| field.query(&ray.at(t), &ray.direction);
    if interval.width() < DEGENERATE_WIDTH {
        let t = interval.lo;
        return RaySamples::new(t, vec![(t, query(t), SampleKind::Coarse)]);
    }

    let mut rng = crate::rng::stream_rng(budget.seed, 1);
    let coarse = stratified_positions(interval.lo, interval.hi, budget.n_coarse, || rng.gen::<f64>());
    // Always draw all three starting jitters so smaller budgets produce a
    // prefix of the sample sequence of larger ones.
    let initial = stratified_positions(interval.lo, interval.hi, INITIAL_POINTS, || rng.gen::<f64>());

    let mut set = SampleSet {
        points: Vec::with_capacity(budget.total()),
    };
    for t in coarse {
        set.insert(t, query(t), SampleKind::Coarse);
    }
    for &t in initial.iter().take(budget.n_dynamic) {
        set.insert(t, query(t), SampleKind::Initial);
    }
    for _ in INITIAL_POINTS.min(budget.n_dynamic)..budget.n_dynamic {
        let t = next_position(&set, &interval);
        set.insert(t, query(t), SampleKind::Refined);
    }
    RaySamples::new(interval.lo, set.points)
}
