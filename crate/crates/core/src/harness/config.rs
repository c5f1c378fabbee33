//! Experiment configuration (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::coarse_depth::{CostVolumeParams, DEFAULT_COST_CEILING, DEFAULT_HYPOTHESES};
use crate::error::{Error, Result};
use crate::fields::{PhotoConsistencyParams, SceneDescription, GROUND_TRUTH_STEPS};
use crate::fusion::FusionScheme;
use crate::geometry::{Camera, CameraIntrinsics, Pose};
use crate::metrics::DEFAULT_MSC_LEVELS;
use crate::rendering::DEFAULT_EPS_BG;

use super::suite::{self, Rig, SuiteScene};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "GADS_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub scene: SceneSpec,
    #[serde(default = "default_resolution")]
    pub width: usize,
    #[serde(default = "default_resolution")]
    pub height: usize,
    /// Reference views used for plane sweep and photo-consistency fields.
    #[serde(default = "default_n_views")]
    pub n_views: usize,
    #[serde(default = "default_delta_d")]
    pub delta_d: f64,
    /// Standard deviation of gaussian noise added to the coarse depth.
    #[serde(default)]
    pub dc_noise: f64,
    /// Stratified samples per ray for reference views and the target oracle.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    #[serde(default = "default_eps_bg")]
    pub eps_bg: f64,
    #[serde(default)]
    pub coarse_depth: CoarseDepthConfig,
    #[serde(default)]
    pub photo: PhotoConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Also write the raw cost volume of the target view.
    #[serde(default)]
    pub dump_cost_volume: bool,
    pub arms: Vec<ArmConfig>,
}

fn default_resolution() -> usize {
    suite::DEFAULT_RESOLUTION
}
fn default_n_views() -> usize {
    suite::DEFAULT_REFERENCE_VIEWS
}
fn default_delta_d() -> f64 {
    0.8
}
fn default_oracle_samples() -> usize {
    GROUND_TRUTH_STEPS
}
fn default_eps_bg() -> f64 {
    DEFAULT_EPS_BG
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A built-in scene by name, or an inline scene with its own rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSpec {
    Named(String),
    Inline(InlineScene),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScene {
    pub name: String,
    pub description: SceneDescription,
    pub rig: RigConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub near: f64,
    pub far: f64,
    pub target: CameraConfig,
    pub references: Vec<CameraConfig>,
}

/// Pinhole camera. Both matrices are row-major; `world_to_camera` is `[R | t]`
/// with `x_cam = R x_world + t`. Units are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub intrinsics: [[f64; 3]; 3],
    pub world_to_camera: [[f64; 4]; 3],
}

impl CameraConfig {
    pub fn from_camera(cam: &Camera) -> Self {
        let k = cam.intrinsics.matrix();
        let (r, t) = (cam.pose.rotation(), cam.pose.translation());
        Self {
            width: cam.width(),
            height: cam.height(),
            intrinsics: [0, 1, 2].map(|i| [k[(i, 0)], k[(i, 1)], k[(i, 2)]]),
            world_to_camera: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]]),
        }
    }

    pub fn to_camera(&self) -> Result<Camera> {
        let k = &self.intrinsics;
        if k[0][1] != 0.0 || k[1][0] != 0.0 || k[2] != [0.0, 0.0, 1.0] {
            return Err(Error::Config("intrinsics must be [[fx,0,cx],[0,fy,cy],[0,0,1]]".into()));
        }
        let intr = CameraIntrinsics::new(k[0][0], k[1][1], k[0][2], k[1][2], self.width, self.height)?;
        let m = &self.world_to_camera;
        let r = Matrix3::from_fn(|i, j| m[i][j]);
        let t = Vector3::new(m[0][3], m[1][3], m[2][3]);
        Ok(Camera::new(intr, Pose::new(r, t)?))
    }
}

impl RigConfig {
    pub fn from_rig(rig: &Rig) -> Self {
        Self {
            near: rig.near,
            far: rig.far,
            target: CameraConfig::from_camera(&rig.target),
            references: rig.references.iter().map(CameraConfig::from_camera).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseDepthConfig {
    pub hypotheses: usize,
    /// Hypothesis range; the rig's ray bounds when absent.
    pub near: Option<f64>,
    pub far: Option<f64>,
    /// Softmax temperature of the depth regression.
    pub tau: f64,
    pub ceiling: f64,
    /// Experiments smooth the cost volume by default; the plane-sweep
    /// module itself leaves it off.
    pub box_filter: bool,
}

impl Default for CoarseDepthConfig {
    fn default() -> Self {
        Self {
            hypotheses: DEFAULT_HYPOTHESES,
            near: None,
            far: None,
            tau: 1e-4,
            ceiling: DEFAULT_COST_CEILING,
            box_filter: true,
        }
    }
}

impl CoarseDepthConfig {
    pub fn cost_params(&self) -> CostVolumeParams {
        CostVolumeParams {
            ceiling: self.ceiling,
            box_filter: self.box_filter,
        }
    }
}

/// Photo-consistency field settings, used by arms with `field = "photo"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotoConfig {
    pub tau: f64,
    pub sigma_scale: f64,
    pub fusion: FusionScheme,
    pub fusion_tau: f64,
}

impl Default for PhotoConfig {
    fn default() -> Self {
        let p = PhotoConsistencyParams::default();
        Self {
            tau: p.tau,
            sigma_scale: p.sigma_scale,
            fusion: p.fusion,
            fusion_tau: p.fusion_tau,
        }
    }
}

impl PhotoConfig {
    pub fn params(&self) -> PhotoConsistencyParams {
        PhotoConsistencyParams {
            tau: self.tau,
            sigma_scale: self.sigma_scale,
            fusion: self.fusion,
            fusion_tau: self.fusion_tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub msc_levels: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            msc_levels: DEFAULT_MSC_LEVELS,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Stratified,
    Gads,
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Stratified => "stratified",
            SamplerKind::Gads => "gads",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    #[default]
    Analytic,
    Photo,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::Analytic => "analytic",
            FieldKind::Photo => "photo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    pub sampler: SamplerKind,
    /// Samples per ray for stratified arms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_coarse: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_dynamic: Option<usize>,
    /// Overrides the experiment-wide `delta_d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_d: Option<f64>,
    #[serde(default)]
    pub field: FieldKind,
}

impl ArmConfig {
    pub fn stratified(name: &str, n: usize) -> Self {
        Self {
            name: name.into(),
            sampler: SamplerKind::Stratified,
            n_samples: Some(n),
            n_coarse: None,
            n_dynamic: None,
            delta_d: None,
            field: FieldKind::Analytic,
        }
    }

    pub fn gads(name: &str, n_coarse: usize, n_dynamic: usize) -> Self {
        Self {
            name: name.into(),
            sampler: SamplerKind::Gads,
            n_samples: None,
            n_coarse: Some(n_coarse),
            n_dynamic: Some(n_dynamic),
            delta_d: None,
            field: FieldKind::Analytic,
        }
    }

    /// `(n_coarse, n_dynamic)`; stratified arms report their count as coarse.
    pub fn budget(&self) -> (usize, usize) {
        match self.sampler {
            SamplerKind::Stratified => (self.n_samples.unwrap_or(0), 0),
            SamplerKind::Gads => (self.n_coarse.unwrap_or(0), self.n_dynamic.unwrap_or(0)),
        }
    }
}

/// One validation problem, located by its key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ExperimentConfig {
    /// Minimal config for a named scene.
    pub fn for_scene(scene: &str, seed: u64, arms: Vec<ArmConfig>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            scene: SceneSpec::Named(scene.into()),
            width: default_resolution(),
            height: default_resolution(),
            n_views: default_n_views(),
            delta_d: default_delta_d(),
            dc_noise: 0.0,
            oracle_samples: default_oracle_samples(),
            eps_bg: default_eps_bg(),
            coarse_depth: CoarseDepthConfig::default(),
            photo: PhotoConfig::default(),
            metrics: MetricsConfig::default(),
            output_dir: default_output_dir(),
            dump_cost_volume: false,
            arms,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fails with every issue listed when the config is invalid.
    pub fn check(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
            Err(Error::Config(format!(
                "invalid experiment config:\n  {}",
                lines.join("\n  ")
            )))
        }
    }

    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, message: String| {
            issues.push(ConfigIssue {
                path: path.into(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            bad(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        match &self.scene {
            SceneSpec::Named(name) => {
                if !suite::SUITE_SCENES.contains(&name.as_str()) && name != suite::TEXTURED_PLANE {
                    bad("scene", format!("unknown scene `{name}`"));
                }
                if self.n_views > suite::MAX_REFERENCE_VIEWS {
                    bad(
                        "n_views",
                        format!(
                            "built-in rigs have at most {} reference views",
                            suite::MAX_REFERENCE_VIEWS
                        ),
                    );
                }
            }
            SceneSpec::Inline(inline) => {
                if let Err(m) = inline.description.validate() {
                    bad("scene.description", m);
                }
                let rig = &inline.rig;
                if !(rig.near > 0.0 && rig.far > rig.near) {
                    bad(
                        "scene.rig",
                        format!("need 0 < near < far, got {}..{}", rig.near, rig.far),
                    );
                }
                let cams = std::iter::once(("scene.rig.target".to_string(), &rig.target)).chain(
                    rig.references
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (format!("scene.rig.references[{i}]"), c)),
                );
                for (path, cam) in cams {
                    if let Err(e) = cam.to_camera() {
                        bad(&path, e.to_string());
                    }
                    if (cam.width, cam.height) != (self.width, self.height) {
                        bad(
                            &path,
                            format!(
                                "camera is {}x{}, experiment is {}x{}",
                                cam.width, cam.height, self.width, self.height
                            ),
                        );
                    }
                }
                if self.n_views > rig.references.len() {
                    bad(
                        "n_views",
                        format!(
                            "{} requested but the rig has {} references",
                            self.n_views,
                            rig.references.len()
                        ),
                    );
                }
            }
        }
        if self.width == 0 || self.height == 0 {
            bad("width", "image size must be positive".into());
        }
        if !(self.delta_d > 0.0) {
            bad("delta_d", format!("must be positive, got {}", self.delta_d));
        }
        if !(self.dc_noise >= 0.0) {
            bad("dc_noise", format!("must be non-negative, got {}", self.dc_noise));
        }
        if self.oracle_samples == 0 {
            bad("oracle_samples", "must be positive".into());
        }
        if !(self.eps_bg >= 0.0) {
            bad("eps_bg", "must be non-negative".into());
        }
        let cd = &self.coarse_depth;
        if cd.hypotheses < 2 {
            bad("coarse_depth.hypotheses", "need at least two".into());
        }
        if !(cd.tau > 0.0) {
            bad("coarse_depth.tau", "must be positive".into());
        }
        if !(cd.ceiling >= 0.0) {
            bad("coarse_depth.ceiling", "must be non-negative".into());
        }
        if let (Some(n), Some(f)) = (cd.near, cd.far) {
            if !(n > 0.0 && f > n) {
                bad("coarse_depth", format!("need 0 < near < far, got {n}..{f}"));
            }
        }
        if !(self.photo.tau > 0.0) {
            bad("photo.tau", "must be positive".into());
        }
        if !(self.photo.sigma_scale >= 0.0) {
            bad("photo.sigma_scale", "must be non-negative".into());
        }
        if !(self.photo.fusion_tau > 0.0) {
            bad("photo.fusion_tau", "must be positive".into());
        }
        if self.metrics.msc_levels == 0 {
            bad("metrics.msc_levels", "must be at least 1".into());
        } else if !self.width.is_multiple_of(1 << (self.metrics.msc_levels - 1))
            || !self.height.is_multiple_of(1 << (self.metrics.msc_levels - 1))
        {
            bad(
                "metrics.msc_levels",
                format!(
                    "{}x{} is not divisible by 2^{}",
                    self.width,
                    self.height,
                    self.metrics.msc_levels - 1
                ),
            );
        }
        if !(self.metrics.alpha >= 0.0 && self.metrics.beta >= 0.0) {
            bad("metrics", "alpha and beta must be non-negative".into());
        }
        if self.arms.is_empty() {
            bad("arms", "at least one arm is required".into());
        }
        let needs_views = self
            .arms
            .iter()
            .any(|a| a.sampler == SamplerKind::Gads || a.field == FieldKind::Photo);
        if needs_views && self.n_views < 2 {
            bad(
                "n_views",
                "plane sweep and photo-consistency need at least two reference views".into(),
            );
        }
        for (i, arm) in self.arms.iter().enumerate() {
            let p = |k: &str| format!("arms[{i}].{k}");
            if arm.name.is_empty()
                || !arm
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                bad(
                    &p("name"),
                    format!("`{}` must be non-empty and use [A-Za-z0-9_-]", arm.name),
                );
            }
            if self.arms[..i].iter().any(|a| a.name == arm.name) {
                bad(&p("name"), format!("duplicate arm name `{}`", arm.name));
            }
            match arm.sampler {
                SamplerKind::Stratified => {
                    if arm.n_samples.unwrap_or(0) == 0 {
                        bad(&p("n_samples"), "stratified arms need n_samples >= 1".into());
                    }
                    if arm.n_coarse.is_some() || arm.n_dynamic.is_some() {
                        bad(&p("sampler"), "n_coarse/n_dynamic only apply to gads arms".into());
                    }
                }
                SamplerKind::Gads => {
                    match (arm.n_coarse, arm.n_dynamic) {
                        (Some(c), Some(d)) if c + d == 0 => {
                            bad(&p("n_coarse"), "total budget must be at least one sample".into())
                        }
                        (Some(_), Some(_)) => {}
                        _ => bad(&p("sampler"), "gads arms need n_coarse and n_dynamic".into()),
                    }
                    if arm.n_samples.is_some() {
                        bad(&p("n_samples"), "only applies to stratified arms".into());
                    }
                }
            }
            if let Some(d) = arm.delta_d {
                if !(d > 0.0) {
                    bad(&p("delta_d"), format!("must be positive, got {d}"));
                }
            }
        }
        issues
    }

    /// Resolves the scene and rig, honouring `n_views`.
    pub fn resolve_scene(&self) -> Result<SuiteScene> {
        match &self.scene {
            SceneSpec::Named(name) => suite::suite_scene(name, self.seed, self.width, self.height, self.n_views),
            SceneSpec::Inline(inline) => Ok(SuiteScene {
                name: inline.name.clone(),
                description: inline.description.clone(),
                rig: Rig {
                    target: inline.rig.target.to_camera()?,
                    references: inline.rig.references[..self.n_views]
                        .iter()
                        .map(CameraConfig::to_camera)
                        .collect::<Result<_>>()?,
                    near: inline.rig.near,
                    far: inline.rig.far,
                },
            }),
        }
    }

    pub fn scene_name(&self) -> &str {
        match &self.scene {
            SceneSpec::Named(n) => n,
            SceneSpec::Inline(i) => &i.name,
        }
    }

    /// `output_dir`, placed under `$GADS_OUTPUT_ROOT` when that is set and
    /// the directory is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
