//! `gads`: render scenes and run sampler comparisons from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gads_core::fusion::FusionScheme;
use gads_core::harness::config::{ArmConfig, ExperimentConfig, FieldKind, InlineScene, RigConfig, SceneSpec};
use gads_core::harness::experiment::{run_experiment, run_sweep, ExperimentReport, SweepAxis};
use gads_core::harness::suite::suite_scene;

#[derive(Parser)]
#[command(
    name = "gads",
    version,
    about = "Geometry-aware dynamic sampling for volume rendering"
)]
struct Cli {
    /// Worker threads for pixel rendering. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the target view with one sampler and score it against the oracle.
    Render {
        #[command(flatten)]
        setup: Setup,
        #[command(flatten)]
        arm: ArmArgs,
    },
    /// Run every arm of an experiment and write images, depth maps and metrics.csv.
    Experiment {
        #[command(flatten)]
        setup: Setup,
        /// Replace the configured arms with a single arm built from these flags.
        #[command(flatten)]
        arm: ArmArgs,
    },
    /// Repeat an experiment for each value of one parameter.
    Sweep {
        #[command(flatten)]
        setup: Setup,
        #[command(flatten)]
        arm: ArmArgs,
        /// Parameter to vary: delta_d, n_samples or n_views.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. 0.1,0.4,0.8.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Print a built-in scene and its rig as an editable experiment config.
    SceneDump {
        /// sphere_on_plane, occluding_boxes, blob_cluster or textured_plane.
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 5)]
        n_views: usize,
        /// Write to this file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Scene, rig and pipeline settings shared by the running subcommands. Flags
/// override the config file.
#[derive(Args)]
struct Setup {
    /// Experiment config (TOML). Without one, `--scene` picks a built-in scene.
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Reference views for plane sweep and photo-consistency.
    #[arg(long)]
    n_views: Option<usize>,
    /// Stratified samples per ray for the oracle and reference renders.
    #[arg(long)]
    oracle_samples: Option<usize>,
    /// Half-width of the sampling interval around the coarse depth.
    #[arg(long)]
    delta_d: Option<f64>,
    /// Standard deviation of gaussian noise added to the coarse depth.
    #[arg(long)]
    dc_noise: Option<f64>,
    /// Number of plane-sweep depth hypotheses.
    #[arg(long)]
    depth_hypotheses: Option<usize>,
    /// Plane-sweep depth range as near:far.
    #[arg(long, value_parser = parse_range)]
    depth_range: Option<(f64, f64)>,
    /// Softmax temperature of the depth regression.
    #[arg(long)]
    tau: Option<f64>,
    /// Fusion scheme of the photo-consistency field: uniform, var or angle.
    #[arg(long)]
    fusion: Option<FusionScheme>,
    #[arg(long)]
    fusion_tau: Option<f64>,
    /// Also write the raw plane-sweep cost volume.
    #[arg(long)]
    dump_cost_volume: bool,
    /// Output directory; relative paths go under $GADS_OUTPUT_ROOT when set.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ArmArgs {
    #[arg(long)]
    sampler: Option<Sampler>,
    /// Samples per ray for the stratified sampler.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Stratified samples inside the interval for the gads sampler.
    #[arg(long)]
    n_coarse: Option<usize>,
    /// Predict-then-refine samples for the gads sampler.
    #[arg(long)]
    n_dynamic: Option<usize>,
    #[arg(long)]
    field: Option<Field>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Stratified,
    Gads,
}

#[derive(Clone, Copy, ValueEnum)]
enum Field {
    Analytic,
    Photo,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected near:far, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

impl ArmArgs {
    fn is_set(&self) -> bool {
        self.sampler.is_some()
            || self.n_samples.is_some()
            || self.n_coarse.is_some()
            || self.n_dynamic.is_some()
            || self.field.is_some()
    }

    /// The arm described by the flags; gads with 24+24 samples by default.
    fn arm(&self) -> ArmConfig {
        let sampler = self.sampler.unwrap_or(if self.n_samples.is_some() {
            Sampler::Stratified
        } else {
            Sampler::Gads
        });
        let mut arm = match sampler {
            Sampler::Stratified => {
                let n = self.n_samples.unwrap_or(64);
                ArmConfig::stratified(&format!("stratified{n}"), n)
            }
            Sampler::Gads => {
                let (c, d) = (self.n_coarse.unwrap_or(24), self.n_dynamic.unwrap_or(24));
                ArmConfig::gads(&format!("gads{c}_{d}"), c, d)
            }
        };
        if let Some(Field::Photo) = self.field {
            arm.field = FieldKind::Photo;
            arm.name.push_str("_photo");
        }
        arm
    }
}

fn default_arms() -> Vec<ArmConfig> {
    vec![
        ArmConfig::stratified("stratified64", 64),
        ArmConfig::gads("gads24_24", 24, 24),
    ]
}

impl Setup {
    fn build(&self, arm: &ArmArgs, single_arm: bool) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::for_scene(self.scene.as_deref().unwrap_or("sphere_on_plane"), 0, default_arms()),
        };
        if let Some(s) = &self.scene {
            c.scene = SceneSpec::Named(s.clone());
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.width {
            c.width = v;
        }
        if let Some(v) = self.height {
            c.height = v;
        }
        if let Some(v) = self.n_views {
            c.n_views = v;
        }
        if let Some(v) = self.oracle_samples {
            c.oracle_samples = v;
        }
        if let Some(v) = self.delta_d {
            c.delta_d = v;
        }
        if let Some(v) = self.dc_noise {
            c.dc_noise = v;
        }
        if let Some(v) = self.depth_hypotheses {
            c.coarse_depth.hypotheses = v;
        }
        if let Some((near, far)) = self.depth_range {
            c.coarse_depth.near = Some(near);
            c.coarse_depth.far = Some(far);
        }
        if let Some(v) = self.tau {
            c.coarse_depth.tau = v;
        }
        if let Some(v) = self.fusion {
            c.photo.fusion = v;
        }
        if let Some(v) = self.fusion_tau {
            c.photo.fusion_tau = v;
        }
        c.dump_cost_volume |= self.dump_cost_volume;
        if let Some(o) = &self.output {
            c.output_dir = o.clone();
        }
        if single_arm || arm.is_set() {
            c.arms = vec![arm.arm()];
        }
        c.check()?;
        Ok(c)
    }
}

fn print_summary(report: &ExperimentReport) {
    for arm in &report.arms {
        match arm.metrics() {
            Some(m) => eprintln!(
                "{:<20} psnr {:>7.3} dB  ssim {:.4}  field evals {}",
                arm.name, m.image.psnr, m.image.ssim, m.field_evaluations
            ),
            None => eprintln!("{:<20} FAILED", arm.name),
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Render { setup, arm } => experiment(&setup.build(&arm, true)?),
        Command::Experiment { setup, arm } => experiment(&setup.build(&arm, false)?),
        Command::Sweep {
            setup,
            arm,
            axis,
            values,
        } => {
            let config = setup.build(&arm, false)?;
            let report = run_sweep(&config, axis, &values)?;
            print!("{}", report.to_csv());
            for (value, r) in &report.points {
                eprintln!("{axis} = {value}");
                print_summary(r);
            }
            eprintln!("wrote {}", config.resolved_output_dir().display());
            Ok(report.all_succeeded())
        }
        Command::SceneDump {
            scene,
            seed,
            width,
            height,
            n_views,
            output,
        } => {
            let s = suite_scene(&scene, seed, width, height, n_views)?;
            let mut config = ExperimentConfig::for_scene(&scene, seed, default_arms());
            config.width = width;
            config.height = height;
            config.n_views = n_views;
            config.scene = SceneSpec::Inline(InlineScene {
                name: s.name.clone(),
                description: s.description,
                rig: RigConfig::from_rig(&s.rig),
            });
            config.check()?;
            let text = config.to_toml_string();
            match output {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
    }
}

fn experiment(config: &ExperimentConfig) -> Result<bool> {
    let report = run_experiment(config)?;
    print!("{}", report.to_csv());
    print_summary(&report);
    eprintln!("wrote {}", config.resolved_output_dir().display());
    Ok(report.all_succeeded())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
