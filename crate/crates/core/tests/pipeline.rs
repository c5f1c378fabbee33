//! End-to-end harness behavior at small resolutions.

use gads_core::fields::ground_truth_depth;
use gads_core::geometry::pixel_center;
use gads_core::harness::config::{ArmConfig, ExperimentConfig};
use gads_core::harness::experiment::{
    prepare_scene, run_arms, run_experiment, sweep, ArmOutcome, ExperimentReport, SweepAxis,
};
use gads_core::harness::report::CSV_COLUMNS;
use gads_core::harness::suite::{make_scene_suite, suite_scene, SUITE_SCENES};
use gads_core::Ray;

fn small(scene: &str, size: usize, arms: Vec<ArmConfig>) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_scene(scene, 0, arms);
    c.width = size;
    c.height = size;
    c.oracle_samples = 1024;
    c
}

fn psnr(report: &ExperimentReport, arm: &str) -> f64 {
    report
        .arm(arm)
        .and_then(|a| a.metrics())
        .expect("arm succeeded")
        .image
        .psnr
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().skip(1).collect()
}

#[test]
fn suite_ground_truth_has_no_nan() {
    for scene in make_scene_suite(0) {
        let cam = scene.rig.target;
        // Every fourth pixel keeps the sweep quick at full resolution.
        for y in (0..cam.height()).step_by(4) {
            for x in (0..cam.width()).step_by(4) {
                let ray = cam.ray(pixel_center(x, y), scene.rig.near, scene.rig.far).unwrap();
                if let Some(d) = ground_truth_depth(&scene.description, &ray) {
                    assert!(
                        d.is_finite() && d >= scene.rig.near && d <= scene.rig.far,
                        "{} ({x}, {y}): {d}",
                        scene.name
                    );
                }
            }
        }
    }
}

#[test]
fn occluding_boxes_hide_surface_from_some_references() {
    let scene = suite_scene("occluding_boxes", 0, 64, 64, 5).unwrap();
    let cam = scene.rig.target;
    let (mut surface, mut hidden) = (0usize, 0usize);
    for y in 0..64 {
        for x in 0..64 {
            let ray = cam.ray(pixel_center(x, y), scene.rig.near, scene.rig.far).unwrap();
            let Some(d) = ground_truth_depth(&scene.description, &ray) else {
                continue;
            };
            let p = ray.at(d);
            surface += 1;
            let occluded = scene.rig.references.iter().any(|r| {
                let in_view = r.project(&p).is_ok_and(|q| q.in_view);
                if !in_view {
                    return false;
                }
                let to_p = p - r.center();
                let dist = to_p.norm();
                let ray = Ray::new(r.center(), to_p, 1e-3, dist + 0.5).unwrap();
                ground_truth_depth(&scene.description, &ray).is_some_and(|hit| hit < dist - 0.05)
            });
            hidden += usize::from(occluded);
        }
    }
    let fraction = hidden as f64 / surface as f64;
    assert!(fraction >= 0.10, "{hidden}/{surface} surface points hidden");
}

#[test]
fn identical_arms_give_identical_rows() {
    let mut config = small(
        "sphere_on_plane",
        32,
        vec![ArmConfig::gads("a", 8, 8), ArmConfig::gads("b", 8, 8)],
    );
    config.oracle_samples = 256;
    let report = run_arms(&prepare_scene(&config).unwrap(), &config);
    let csv = report.to_csv();
    let rows = data_rows(&csv);
    let strip = |r: &str| r.replacen(",a,", ",", 1).replacen(",b,", ",", 1);
    assert_eq!(strip(rows[0]), strip(rows[1]));
}

#[test]
fn report_lists_every_arm_once_in_order() {
    let arms = vec![
        ArmConfig::stratified("s16", 16),
        ArmConfig::gads("g8", 4, 4),
        ArmConfig::stratified("s8", 8),
        ArmConfig::gads("g12", 6, 6),
    ];
    let mut config = small("blob_cluster", 16, arms);
    config.oracle_samples = 256;
    config.metrics.msc_levels = 2;
    let report = run_arms(&prepare_scene(&config).unwrap(), &config);
    let names: Vec<&str> = report.arms.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(names, ["s16", "g8", "s8", "g12"]);
    let csv = report.to_csv();
    assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let csv_names: Vec<&str> = data_rows(&csv).iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(csv_names, names);
    for row in data_rows(&csv) {
        assert_eq!(row.split(',').count(), CSV_COLUMNS.len());
    }
}

#[test]
fn stratified_field_evaluations_are_exact() {
    let mut config = small(
        "occluding_boxes",
        24,
        vec![ArmConfig::stratified("s7", 7), ArmConfig::stratified("s32", 32)],
    );
    config.oracle_samples = 128;
    config.metrics.msc_levels = 2;
    let report = run_arms(&prepare_scene(&config).unwrap(), &config);
    for (arm, n) in [("s7", 7), ("s32", 32)] {
        let m = report.arm(arm).unwrap().metrics().unwrap();
        assert_eq!(m.field_evaluations, (24 * 24 * n) as u64);
    }
}

#[test]
fn failing_arm_does_not_stop_the_others() {
    let mut config = small(
        "sphere_on_plane",
        16,
        vec![
            ArmConfig::stratified("ok_before", 8),
            ArmConfig::gads("bad", 4, 4),
            ArmConfig::gads("ok_after", 4, 4),
        ],
    );
    config.oracle_samples = 128;
    config.metrics.msc_levels = 2;
    let prepared = prepare_scene(&config).unwrap();
    config.arms[1].delta_d = Some(-1.0);
    let report = run_arms(&prepared, &config);
    assert!(report.arm("ok_before").unwrap().succeeded());
    assert!(report.arm("ok_after").unwrap().succeeded());
    assert!(matches!(report.arm("bad").unwrap().outcome, ArmOutcome::Failed(_)));
    assert!(!report.all_succeeded());
    let csv = report.to_csv();
    let bad = data_rows(&csv)[1];
    assert!(bad.split(',').next_back().unwrap().starts_with("failed"), "{bad}");
}

#[test]
fn single_value_sweep_matches_run_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(
        "blob_cluster",
        16,
        vec![ArmConfig::stratified("s16", 16), ArmConfig::gads("g8", 4, 4)],
    );
    config.oracle_samples = 256;
    config.metrics.msc_levels = 2;
    config.output_dir = dir.path().to_path_buf();
    let single = run_experiment(&config).unwrap().to_csv();
    let swept = sweep(&config, SweepAxis::DeltaD, &[config.delta_d]).unwrap().to_csv();
    let dropped: Vec<String> = swept
        .lines()
        .map(|l| l.split_once(',').unwrap().1.to_string())
        .collect();
    let expected: Vec<&str> = single.lines().collect();
    assert_eq!(dropped, expected);
    assert!(swept.starts_with("sweep_delta_d,"));
}

#[test]
fn gads_matches_stratified_with_a_quarter_fewer_samples() {
    let config = small(
        "sphere_on_plane",
        64,
        vec![ArmConfig::stratified("s64", 64), ArmConfig::gads("g48", 24, 24)],
    );
    let report = run_arms(&prepare_scene(&config).unwrap(), &config);
    let evals = |a: &str| report.arm(a).unwrap().metrics().unwrap().field_evaluations as f64;
    assert_eq!(evals("g48"), 0.75 * evals("s64"));
    assert!(
        psnr(&report, "g48") >= psnr(&report, "s64"),
        "g48 {} s64 {}",
        psnr(&report, "g48"),
        psnr(&report, "s64")
    );
}

#[test]
fn more_reference_views_do_not_hurt() {
    let config = small("sphere_on_plane", 64, vec![ArmConfig::gads("g32", 16, 16)]);
    let report = sweep(&config, SweepAxis::NViews, &[2.0, 3.0, 5.0, 8.0]).unwrap();
    let curve: Vec<f64> = report.points.iter().map(|(_, r)| psnr(r, "g32")).collect();
    assert!(curve.windows(2).all(|w| w[1] >= w[0]), "{curve:?}");
}

#[test]
fn sample_count_sweep_has_a_knee() {
    let config = small("sphere_on_plane", 64, vec![ArmConfig::gads("g", 24, 24)]);
    let values = [8.0, 16.0, 24.0, 32.0, 48.0];
    let report = sweep(&config, SweepAxis::NSamples, &values).unwrap();
    let curve: Vec<f64> = report.points.iter().map(|(_, r)| psnr(r, "g")).collect();
    assert!(curve[2..].windows(2).all(|w| w[1] >= w[0]), "{curve:?}");
    assert!(curve[0] < curve[1] && curve[1] < curve[2], "{curve:?}");
    // Losing samples below 24 costs more than doubling to 48 gains.
    assert!(curve[2] - curve[0] > 2.0 * (curve[4] - curve[2]), "{curve:?}");
}

#[test]
fn every_suite_scene_resolves() {
    for name in SUITE_SCENES {
        let config = small(name, 16, vec![ArmConfig::stratified("s", 4)]);
        assert_eq!(config.resolve_scene().unwrap().name, name);
    }
}
