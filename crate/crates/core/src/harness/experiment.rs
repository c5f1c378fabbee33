//! Experiment pipeline: oracle renders, plane-sweep depth, sampler arms.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::coarse_depth::{
    build_cost_volume, inverse_depth_hypotheses, regress_depth, z_depth_to_ray_distance, CostVolume,
};
use crate::error::{Error, Result};
use crate::fields::{ground_truth_depth, FieldProvider, PhotoConsistencyField};
use crate::geometry::{pixel_center, Camera};
use crate::image::{DepthMap, PosedImage};
use crate::metrics::{composite_score, depth_metrics, image_metrics_with_levels, DepthMetrics, ImageMetrics};
use crate::rendering::{render_view, RaySampler, RenderOutput, RenderSettings};
use crate::rng::{derive_seed, stream_rng};

use super::config::{ArmConfig, ExperimentConfig, FieldKind, SamplerKind};
use super::report;
use super::suite::SuiteScene;

const ORACLE_STREAM: u64 = 0x0AC1E;
const REFERENCE_STREAM: u64 = 0x4EF0;
const ARM_STREAM: u64 = 0xA4A;
const NOISE_STREAM: u64 = 0xD0C;

/// Everything shared by the arms of one experiment.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub scene: SuiteScene,
    /// Dense stratified render of the target view.
    pub oracle: RenderOutput,
    /// Ray distance of the `T = 0.5` crossing per target pixel.
    pub ground_truth: DepthMap,
    /// Oracle renders of the reference cameras.
    pub references: Vec<PosedImage>,
    pub cost_volume: Option<CostVolume>,
    /// Plane-sweep depth as ray distance, before any injected noise.
    pub coarse_depth: Option<DepthMap>,
}

fn needs_references(config: &ExperimentConfig) -> bool {
    config
        .arms
        .iter()
        .any(|a| a.sampler == SamplerKind::Gads || a.field == FieldKind::Photo)
}

fn needs_coarse_depth(config: &ExperimentConfig) -> bool {
    config.arms.iter().any(|a| a.sampler == SamplerKind::Gads)
}

fn oracle_settings(config: &ExperimentConfig, scene: &SuiteScene, stream: u64) -> RenderSettings {
    RenderSettings {
        near: scene.rig.near,
        far: scene.rig.far,
        seed: derive_seed(config.seed, stream),
        eps_bg: config.eps_bg,
        background: scene.description.background,
    }
}

/// Ground-truth depth for every pixel of `camera`.
pub fn ground_truth_depth_map(
    field: &dyn FieldProvider,
    camera: &Camera,
    near: f64,
    far: f64,
    eps_bg: f64,
) -> Result<DepthMap> {
    let (w, h) = (camera.width(), camera.height());
    let rows = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| Ok(ground_truth_depth(field, &camera.ray(pixel_center(x, y), near, far)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    DepthMap::from_values(w, h, rows.concat(), eps_bg)
}

/// Renders the oracle target, ground truth and (when any arm needs them)
/// reference views and plane-sweep depth.
pub fn prepare_scene(config: &ExperimentConfig) -> Result<PreparedScene> {
    config.check()?;
    let scene = config.resolve_scene()?;
    let field = &scene.description;
    let oracle_sampler = RaySampler::Stratified {
        n: config.oracle_samples,
    };
    let oracle = render_view(
        field,
        &scene.rig.target,
        &oracle_sampler,
        &oracle_settings(config, &scene, ORACLE_STREAM),
    )?;
    let ground_truth = ground_truth_depth_map(field, &scene.rig.target, scene.rig.near, scene.rig.far, config.eps_bg)?;
    let mut prepared = PreparedScene {
        scene,
        oracle,
        ground_truth,
        references: Vec::new(),
        cost_volume: None,
        coarse_depth: None,
    };
    if needs_references(config) {
        prepared.references = render_references(config, &prepared.scene)?;
        if needs_coarse_depth(config) {
            prepared.compute_coarse_depth(config)?;
        }
    }
    Ok(prepared)
}

fn render_references(config: &ExperimentConfig, scene: &SuiteScene) -> Result<Vec<PosedImage>> {
    let sampler = RaySampler::Stratified {
        n: config.oracle_samples,
    };
    scene
        .rig
        .references
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let settings = oracle_settings(config, scene, REFERENCE_STREAM + i as u64);
            let out = render_view(&scene.description, cam, &sampler, &settings)?;
            Ok(PosedImage {
                camera: *cam,
                image: out.image.image,
            })
        })
        .collect()
}

impl PreparedScene {
    fn compute_coarse_depth(&mut self, config: &ExperimentConfig) -> Result<()> {
        let cd = &config.coarse_depth;
        let rig = &self.scene.rig;
        let hyps = inverse_depth_hypotheses(cd.near.unwrap_or(rig.near), cd.far.unwrap_or(rig.far), cd.hypotheses)?;
        let volume = build_cost_volume(&rig.target, &self.references, &hyps, &cd.cost_params())?;
        let z = regress_depth(&volume, cd.tau)?;
        self.coarse_depth = Some(z_depth_to_ray_distance(&z, &rig.target));
        self.cost_volume = Some(volume);
        Ok(())
    }

    /// Same scene restricted to the first `n_views` references, with the
    /// plane sweep redone on them.
    pub fn with_reference_prefix(&self, config: &ExperimentConfig, n_views: usize) -> Result<PreparedScene> {
        if n_views > self.references.len() {
            return Err(Error::Config(format!(
                "{n_views} views requested, {} prepared",
                self.references.len()
            )));
        }
        let mut out = self.clone();
        out.references.truncate(n_views);
        out.scene.rig.references.truncate(n_views);
        out.cost_volume = None;
        out.coarse_depth = None;
        if needs_coarse_depth(config) {
            out.compute_coarse_depth(config)?;
        }
        Ok(out)
    }

    /// Coarse depth with `N(0, sigma)` noise added to every finite pixel.
    pub fn noisy_coarse_depth(&self, sigma: f64, seed: u64) -> Result<Option<DepthMap>> {
        let Some(d) = &self.coarse_depth else { return Ok(None) };
        if sigma == 0.0 {
            return Ok(Some(d.clone()));
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::domain(e.to_string()))?;
        let mut rng = stream_rng(seed, NOISE_STREAM);
        let mut noisy = d.clone();
        for v in noisy.values_mut().iter_mut().flatten() {
            *v += normal.sample(&mut rng);
        }
        Ok(Some(noisy))
    }
}

#[derive(Debug, Clone)]
pub struct ArmMetrics {
    pub image: ImageMetrics,
    /// `alpha * mse + beta * msc`.
    pub score: f64,
    /// `None` when no pixel has both a predicted and a true depth.
    pub depth: Option<DepthMetrics>,
    pub field_evaluations: u64,
}

#[derive(Debug, Clone)]
pub enum ArmOutcome {
    Done { metrics: ArmMetrics, render: RenderOutput },
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct ArmReport {
    pub name: String,
    pub sampler: SamplerKind,
    pub field: FieldKind,
    pub n_coarse: usize,
    pub n_dynamic: usize,
    /// Interval half-width; `None` for stratified arms.
    pub delta_d: Option<f64>,
    pub dc_noise: f64,
    pub outcome: ArmOutcome,
    pub wall_time: Duration,
}

impl ArmReport {
    pub fn metrics(&self) -> Option<&ArmMetrics> {
        match &self.outcome {
            ArmOutcome::Done { metrics, .. } => Some(metrics),
            ArmOutcome::Failed(_) => None,
        }
    }

    pub fn render(&self) -> Option<&RenderOutput> {
        match &self.outcome {
            ArmOutcome::Done { render, .. } => Some(render),
            ArmOutcome::Failed(_) => None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.metrics().is_some()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scene: String,
    /// One entry per configured arm, in config order.
    pub arms: Vec<ArmReport>,
}

impl ExperimentReport {
    pub fn all_succeeded(&self) -> bool {
        self.arms.iter().all(ArmReport::succeeded)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn to_csv(&self) -> String {
        report::csv(None, std::slice::from_ref(&(0.0, self.clone())))
    }
}

fn run_arm(prepared: &PreparedScene, config: &ExperimentConfig, arm: &ArmConfig) -> Result<(ArmMetrics, RenderOutput)> {
    let scene = &prepared.scene;
    let photo;
    let field: &dyn FieldProvider = match arm.field {
        FieldKind::Analytic => &scene.description,
        FieldKind::Photo => {
            photo = PhotoConsistencyField::new(prepared.references.clone(), config.photo.params());
            &photo
        }
    };
    let coarse;
    let sampler = match arm.sampler {
        SamplerKind::Stratified => RaySampler::Stratified {
            n: arm.n_samples.unwrap_or(0),
        },
        SamplerKind::Gads => {
            coarse = prepared
                .noisy_coarse_depth(config.dc_noise, config.seed)?
                .ok_or_else(|| Error::Config("gads arm without a coarse depth map".into()))?;
            RaySampler::Gads {
                n_coarse: arm.n_coarse.unwrap_or(0),
                n_dynamic: arm.n_dynamic.unwrap_or(0),
                delta_d: arm.delta_d.unwrap_or(config.delta_d),
                coarse_depth: &coarse,
            }
        }
    };
    let settings = RenderSettings {
        near: scene.rig.near,
        far: scene.rig.far,
        seed: derive_seed(config.seed, ARM_STREAM),
        eps_bg: config.eps_bg,
        background: scene.description.background,
    };
    let render = render_view(field, &scene.rig.target, &sampler, &settings)?;
    let image = image_metrics_with_levels(
        &render.image.image,
        &prepared.oracle.image.image,
        config.metrics.msc_levels,
    )?;
    let depth = match depth_metrics(&render.depth, &prepared.ground_truth) {
        Ok(d) => Some(d),
        Err(Error::NoData(_)) => None,
        Err(e) => return Err(e),
    };
    let metrics = ArmMetrics {
        image,
        score: composite_score(image.mse, image.msc, config.metrics.alpha, config.metrics.beta),
        depth,
        field_evaluations: render.field_evaluations,
    };
    Ok((metrics, render))
}

/// Runs every arm in config order. A failing arm is recorded and does not
/// stop the others.
pub fn run_arms(prepared: &PreparedScene, config: &ExperimentConfig) -> ExperimentReport {
    let arms = config
        .arms
        .iter()
        .map(|arm| {
            let start = Instant::now();
            let outcome = match run_arm(prepared, config, arm) {
                Ok((metrics, render)) => ArmOutcome::Done { metrics, render },
                Err(e) => ArmOutcome::Failed(e.to_string()),
            };
            let (n_coarse, n_dynamic) = arm.budget();
            ArmReport {
                name: arm.name.clone(),
                sampler: arm.sampler,
                field: arm.field,
                n_coarse,
                n_dynamic,
                delta_d: (arm.sampler == SamplerKind::Gads).then(|| arm.delta_d.unwrap_or(config.delta_d)),
                dc_noise: if arm.sampler == SamplerKind::Gads {
                    config.dc_noise
                } else {
                    0.0
                },
                outcome,
                wall_time: start.elapsed(),
            }
        })
        .collect();
    ExperimentReport {
        scene: prepared.scene.name.clone(),
        arms,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the shared renders of a prepared scene.
pub fn write_prepared(prepared: &PreparedScene, dir: &Path, dump_cost_volume: bool) -> Result<()> {
    create_dir(dir)?;
    prepared.oracle.image.image.write_ppm(&dir.join("oracle.ppm"))?;
    prepared.ground_truth.write_raw(&dir.join("ground_truth_depth.f32"))?;
    for (i, r) in prepared.references.iter().enumerate() {
        r.image.write_ppm(&dir.join(format!("reference_{i}.ppm")))?;
    }
    if let Some(d) = &prepared.coarse_depth {
        d.write_raw(&dir.join("coarse_depth.f32"))?;
    }
    if dump_cost_volume {
        if let Some(v) = &prepared.cost_volume {
            v.dump_raw(&dir.join("cost_volume.f32"))?;
        }
    }
    Ok(())
}

/// Writes each arm's image and depth map.
pub fn write_arm_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for arm in &report.arms {
        if let Some(render) = arm.render() {
            render.image.image.write_ppm(&dir.join(format!("{}.ppm", arm.name)))?;
            render.depth.write_raw(&dir.join(format!("{}_depth.f32", arm.name)))?;
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Full pipeline: prepare, run all arms, write images, depth maps and
/// `metrics.csv` to the output directory. Per-arm failures are in the
/// report; only configuration and preparation errors fail the call.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prepared = prepare_scene(config)?;
    let report = run_arms(&prepared, config);
    let dir = config.resolved_output_dir();
    write_prepared(&prepared, &dir, config.dump_cost_volume)?;
    write_arm_outputs(&report, &dir)?;
    write_text(&dir.join("metrics.csv"), &report.to_csv())?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DeltaD,
    NSamples,
    NViews,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::DeltaD => "delta_d",
            SweepAxis::NSamples => "n_samples",
            SweepAxis::NViews => "n_views",
        }
    }

    /// The config for one sweep value. `n_samples` splits gads budgets
    /// evenly between coarse and dynamic samples; `delta_d` replaces any
    /// per-arm override.
    pub fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{} values must be positive integers, got {value}",
                    self.name()
                )))
            }
        };
        match self {
            SweepAxis::DeltaD => {
                c.delta_d = value;
                for arm in &mut c.arms {
                    arm.delta_d = None;
                }
            }
            SweepAxis::NSamples => {
                let n = count()?;
                for arm in &mut c.arms {
                    match arm.sampler {
                        SamplerKind::Stratified => arm.n_samples = Some(n),
                        SamplerKind::Gads => {
                            arm.n_coarse = Some(n / 2);
                            arm.n_dynamic = Some(n - n / 2);
                        }
                    }
                }
            }
            SweepAxis::NViews => c.n_views = count()?,
        }
        c.check()?;
        Ok(c)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_d" | "delta-d" => Ok(SweepAxis::DeltaD),
            "n_samples" | "n-samples" => Ok(SweepAxis::NSamples),
            "n_views" | "n-views" => Ok(SweepAxis::NViews),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected delta_d, n_samples or n_views)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    /// `(value, report)` in the order given.
    pub points: Vec<(f64, ExperimentReport)>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        report::csv(Some(self.axis.name()), &self.points)
    }

    pub fn all_succeeded(&self) -> bool {
        self.points.iter().all(|(_, r)| r.all_succeeded())
    }
}

/// Runs the experiment once per value, sharing the oracle renders and
/// plane sweep where the axis allows it. Results stay in memory; see
/// [`run_sweep`] for the on-disk variant.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport> {
    sweep_inner(config, axis, values, None)
}

/// [`sweep`] plus images per value under `<output>/<axis>_<value>/` and
/// `sweep_<axis>.csv`.
pub fn run_sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport> {
    let dir = config.resolved_output_dir();
    let report = sweep_inner(config, axis, values, Some(&dir))?;
    write_text(&dir.join(format!("sweep_{}.csv", axis.name())), &report.to_csv())?;
    Ok(report)
}

fn sweep_inner(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    dir: Option<&PathBuf>,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    let base = match axis {
        SweepAxis::NViews => {
            let most = configs.iter().max_by_key(|c| c.n_views).expect("non-empty");
            prepare_scene(most)?
        }
        _ => prepare_scene(&configs[0])?,
    };
    if let Some(dir) = dir {
        write_prepared(&base, dir, config.dump_cost_volume)?;
    }
    let mut points = Vec::with_capacity(values.len());
    for (&value, cfg) in values.iter().zip(&configs) {
        let report = if axis == SweepAxis::NViews && cfg.n_views != base.references.len() {
            run_arms(&base.with_reference_prefix(cfg, cfg.n_views)?, cfg)
        } else {
            run_arms(&base, cfg)
        };
        if let Some(dir) = dir {
            write_arm_outputs(&report, &dir.join(format!("{}_{value}", axis.name())))?;
        }
        points.push((value, report));
    }
    Ok(SweepReport { axis, points })
}
