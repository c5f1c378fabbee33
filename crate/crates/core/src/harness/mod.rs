//! End-to-end experiments: scene suite, configuration, sampler comparisons
//! and CSV reports.

pub mod config;
pub mod experiment;
pub mod report;
pub mod suite;

pub use config::{ArmConfig, ExperimentConfig, FieldKind, SamplerKind, SceneSpec};
pub use experiment::{
    prepare_scene, run_arms, run_experiment, sweep, ArmOutcome, ArmReport, ExperimentReport, PreparedScene, SweepAxis,
    SweepReport,
};
pub use suite::{make_scene_suite, suite_scene, Rig, SuiteScene};
