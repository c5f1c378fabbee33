//! CSV rendering of experiment reports.

use super::experiment::{ArmOutcome, ArmReport, ExperimentReport};

/// Column order of every metrics CSV. Sweep CSVs prepend `sweep_<axis>`.
pub const CSV_COLUMNS: [&str; 22] = [
    "scene",
    "arm",
    "sampler",
    "field",
    "n_coarse",
    "n_dynamic",
    "n_total",
    "delta_d",
    "dc_noise",
    "mse",
    "psnr",
    "ssim",
    "msc",
    "score",
    "abs_rel",
    "sq_rel",
    "rmse",
    "delta1",
    "delta2",
    "delta3",
    "field_evals",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Commas and line breaks would break the row.
fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            ',' => ';',
            '\n' | '\r' => ' ',
            c => c,
        })
        .collect()
}

fn row(scene: &str, arm: &ArmReport) -> Vec<String> {
    let mut cells = vec![
        scene.to_string(),
        arm.name.clone(),
        arm.sampler.to_string(),
        arm.field.to_string(),
        arm.n_coarse.to_string(),
        arm.n_dynamic.to_string(),
        (arm.n_coarse + arm.n_dynamic).to_string(),
        opt(arm.delta_d),
        arm.dc_noise.to_string(),
    ];
    match &arm.outcome {
        ArmOutcome::Done { metrics, .. } => {
            let i = &metrics.image;
            let d = metrics.depth.as_ref();
            cells.extend([i.mse, i.psnr, i.ssim, i.msc, metrics.score].map(|v| v.to_string()));
            cells.extend(
                [
                    d.map(|d| d.abs_rel),
                    d.map(|d| d.sq_rel),
                    d.map(|d| d.rmse),
                    d.map(|d| d.delta1),
                    d.map(|d| d.delta2),
                    d.map(|d| d.delta3),
                ]
                .map(opt),
            );
            cells.push(metrics.field_evaluations.to_string());
            cells.push("ok".into());
        }
        ArmOutcome::Failed(msg) => {
            cells.extend(std::iter::repeat_n(String::new(), 12));
            cells.push(format!("failed: {}", sanitize(msg)));
        }
    }
    cells
}

/// One row per arm; with `axis`, a leading column holds the sweep value.
pub fn csv(axis: Option<&str>, points: &[(f64, ExperimentReport)]) -> String {
    let mut out = String::new();
    if let Some(a) = axis {
        out.push_str(&format!("sweep_{a},"));
    }
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for (value, report) in points {
        for arm in &report.arms {
            if axis.is_some() {
                out.push_str(&format!("{value},"));
            }
            out.push_str(&row(&sanitize(&report.scene), arm).join(","));
            out.push('\n');
        }
    }
    out
}
