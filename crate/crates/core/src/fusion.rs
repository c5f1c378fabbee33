//! Point-wise multi-view fetches and analytic fusion weights.
//!
//! A 3D point is projected into each posed view and the value under it is
//! fetched bilinearly. The per-view values are then blended with weights that
//! sum to one over the views that actually see the point.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MIN_DEPTH;
use crate::image::PosedImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Descriptor {
    /// RGB at the projected point.
    Color,
    /// RGB at the 3x3 pixel neighbourhood, 27 values, row-major.
    Patch3x3,
}

impl Descriptor {
    pub fn len(self) -> usize {
        match self {
            Descriptor::Color => 3,
            Descriptor::Patch3x3 => 27,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionScheme {
    #[serde(rename = "uniform")]
    Uniform,
    /// Weights fall off with distance from the per-component median, which
    /// suppresses occluded views.
    #[serde(rename = "var")]
    VarianceSoftmax,
    /// Weights favour views whose viewing direction matches the target ray.
    #[serde(rename = "angle")]
    AngleSoftmax,
}

impl std::str::FromStr for FusionScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(FusionScheme::Uniform),
            "var" | "variance" => Ok(FusionScheme::VarianceSoftmax),
            "angle" => Ok(FusionScheme::AngleSoftmax),
            other => Err(format!(
                "unknown fusion scheme {other:?} (expected uniform, var or angle)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewFetch {
    pub view: usize,
    /// Empty when the fetch is invalid.
    pub value: Vec<f64>,
    pub valid: bool,
    /// Unit direction from the view center to the point; zero when the point
    /// sits on the view center.
    pub direction: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub weights: Vec<f64>,
}

pub fn fetch_views(x: &Vector3<f64>, views: &[PosedImage], descriptor: Descriptor) -> Vec<ViewFetch> {
    views
        .iter()
        .enumerate()
        .map(|(i, view)| {
            let offset = x - view.camera.center();
            let dist = offset.norm();
            let invalid = |direction| ViewFetch {
                view: i,
                value: Vec::new(),
                valid: false,
                direction,
            };
            if dist < MIN_DEPTH {
                return invalid(Vector3::zeros());
            }
            let direction = offset / dist;
            let proj = match view.camera.project(x) {
                Ok(p) if p.in_view => p,
                _ => return invalid(direction),
            };
            match fetch_descriptor(view, proj.pixel, descriptor) {
                Some(value) => ViewFetch {
                    view: i,
                    value,
                    valid: true,
                    direction,
                },
                None => invalid(direction),
            }
        })
        .collect()
}

fn fetch_descriptor(view: &PosedImage, px: [f64; 2], descriptor: Descriptor) -> Option<Vec<f64>> {
    match descriptor {
        Descriptor::Color => view.image.bilinear(px).map(|c| c.to_vec()),
        Descriptor::Patch3x3 => {
            let mut out = Vec::with_capacity(27);
            for dy in [-1.0, 0.0, 1.0] {
                for dx in [-1.0, 0.0, 1.0] {
                    out.extend_from_slice(&view.image.bilinear([px[0] + dx, px[1] + dy])?);
                }
            }
            Some(out)
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Blends the valid fetches. `target_dir` is the direction of the ray being
/// rendered and is required by [`FusionScheme::AngleSoftmax`].
pub fn fuse(
    fetches: &[ViewFetch],
    scheme: FusionScheme,
    tau: f64,
    target_dir: Option<&Vector3<f64>>,
) -> Result<(Vec<f64>, FusionWeights)> {
    let valid: Vec<usize> = (0..fetches.len()).filter(|&i| fetches[i].valid).collect();
    if valid.is_empty() {
        return Err(Error::NoData("no view sees the point".into()));
    }
    let dims = fetches[valid[0]].value.len();
    if valid.iter().any(|&i| fetches[i].value.len() != dims) {
        return Err(Error::domain("fetched descriptors differ in length"));
    }
    if scheme != FusionScheme::Uniform && !(tau > 0.0) {
        return Err(Error::domain(format!("fusion temperature must be positive, got {tau}")));
    }

    let logits: Vec<f64> = match scheme {
        FusionScheme::Uniform => vec![0.0; valid.len()],
        FusionScheme::VarianceSoftmax => {
            let center: Vec<f64> = (0..dims)
                .map(|k| median(&mut valid.iter().map(|&i| fetches[i].value[k]).collect::<Vec<_>>()))
                .collect();
            valid
                .iter()
                .map(|&i| {
                    let d2: f64 = fetches[i].value.iter().zip(&center).map(|(v, c)| (v - c).powi(2)).sum();
                    -d2 / tau
                })
                .collect()
        }
        FusionScheme::AngleSoftmax => {
            let target = target_dir
                .ok_or_else(|| Error::domain("angle fusion needs the target ray direction"))?
                .normalize();
            valid.iter().map(|&i| fetches[i].direction.dot(&target) / tau).collect()
        }
    };

    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();

    let mut weights = vec![0.0; fetches.len()];
    let mut fused = vec![0.0; dims];
    for (&i, e) in valid.iter().zip(&exp) {
        let w = e / total;
        weights[i] = w;
        for (f, v) in fused.iter_mut().zip(&fetches[i].value) {
            *f += w * v;
        }
    }
    Ok((fused, FusionWeights { weights }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Camera, CameraIntrinsics, Pose};
    use crate::image::Image;
    use proptest::prelude::*;

    fn fetch(view: usize, value: [f64; 3], dir: [f64; 3]) -> ViewFetch {
        ViewFetch {
            view,
            value: value.to_vec(),
            valid: true,
            direction: Vector3::from(dir).normalize(),
        }
    }

    fn invalid(view: usize) -> ViewFetch {
        ViewFetch {
            view,
            value: Vec::new(),
            valid: false,
            direction: Vector3::zeros(),
        }
    }

    const SCHEMES: [FusionScheme; 3] = [
        FusionScheme::Uniform,
        FusionScheme::VarianceSoftmax,
        FusionScheme::AngleSoftmax,
    ];

    #[test]
    fn identical_values_fuse_to_themselves() {
        let v = [0.2, 0.4, 0.9];
        let fetches = vec![fetch(0, v, [1.0, 0.0, 1.0]), invalid(1), fetch(2, v, [0.0, 0.3, 1.0])];
        for scheme in SCHEMES {
            let (fused, w) = fuse(&fetches, scheme, 0.1, Some(&Vector3::new(0.0, 0.0, 1.0))).unwrap();
            for k in 0..3 {
                assert!((fused[k] - v[k]).abs() < 1e-15);
            }
            assert_eq!(w.weights[1], 0.0);
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_valid_view_gets_all_weight() {
        let fetches = vec![fetch(0, [0.1, 0.2, 0.3], [0.0, 0.0, 1.0])];
        for scheme in SCHEMES {
            let (_, w) = fuse(&fetches, scheme, 0.5, Some(&Vector3::new(0.0, 0.0, 1.0))).unwrap();
            assert_eq!(w.weights, vec![1.0]);
        }
    }

    #[test]
    fn no_valid_view_is_no_data() {
        let err = fuse(&[invalid(0), invalid(1)], FusionScheme::Uniform, 1.0, None).unwrap_err();
        assert!(matches!(err, Error::NoData(_)));
    }

    #[test]
    fn angle_scheme_needs_target_and_positive_tau() {
        let fetches = vec![fetch(0, [0.1; 3], [0.0, 0.0, 1.0])];
        assert!(fuse(&fetches, FusionScheme::AngleSoftmax, 0.5, None).is_err());
        assert!(fuse(&fetches, FusionScheme::VarianceSoftmax, 0.0, None).is_err());
    }

    #[test]
    fn angle_scheme_prefers_aligned_view() {
        let fetches = vec![fetch(0, [0.0; 3], [0.0, 0.0, 1.0]), fetch(1, [1.0; 3], [1.0, 0.0, 0.2])];
        let (_, w) = fuse(
            &fetches,
            FusionScheme::AngleSoftmax,
            0.2,
            Some(&Vector3::new(0.0, 0.0, 1.0)),
        )
        .unwrap();
        assert!(w.weights[0] > w.weights[1]);
    }

    #[test]
    fn occluded_outlier_is_suppressed() {
        let agreeing = [
            [0.50, 0.40, 0.30],
            [0.52, 0.41, 0.29],
            [0.49, 0.38, 0.31],
            [0.51, 0.42, 0.30],
        ];
        let outlier = [0.9, 0.1, 0.8];
        let mut fetches: Vec<ViewFetch> = agreeing
            .iter()
            .enumerate()
            .map(|(i, v)| fetch(i, *v, [0.0, 0.0, 1.0]))
            .collect();
        fetches.push(fetch(4, outlier, [0.0, 0.0, 1.0]));

        // tau: sample variance of the agreeing views, pooled over channels.
        let n = agreeing.len() as f64;
        let mut tau = 0.0;
        for k in 0..3 {
            let mean = agreeing.iter().map(|v| v[k]).sum::<f64>() / n;
            tau += agreeing.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        }
        tau /= 3.0;

        // Oracle: the softmax written out by hand around the per-channel median.
        let all: Vec<[f64; 3]> = agreeing.iter().copied().chain([outlier]).collect();
        let med: Vec<f64> = (0..3)
            .map(|k| {
                let mut c: Vec<f64> = all.iter().map(|v| v[k]).collect();
                c.sort_by(|a, b| a.partial_cmp(b).unwrap());
                c[2]
            })
            .collect();
        let raw: Vec<f64> = all
            .iter()
            .map(|v| (-(0..3).map(|k| (v[k] - med[k]).powi(2)).sum::<f64>() / tau).exp())
            .collect();
        let expected_outlier = raw[4] / raw.iter().sum::<f64>();

        let (_, w) = fuse(&fetches, FusionScheme::VarianceSoftmax, tau, None).unwrap();
        assert!((w.weights[4] - expected_outlier).abs() < 1e-12);
        assert!(w.weights[4] < 0.05);
    }

    fn view_at(x: f64, color: [f64; 3]) -> PosedImage {
        let k = CameraIntrinsics::from_fov(16, 16, 60.0).unwrap();
        let eye = Vector3::new(x, 0.0, -2.0);
        let pose = Pose::look_at(eye, Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0)).unwrap();
        PosedImage {
            camera: Camera::new(k, pose),
            image: Image::new(16, 16, color),
        }
    }

    #[test]
    fn point_on_camera_center_is_invalid() {
        let views = vec![view_at(0.0, [0.5; 3]), view_at(1.0, [0.5; 3])];
        let fetches = fetch_views(&Vector3::new(0.0, 0.0, -2.0), &views, Descriptor::Color);
        assert!(!fetches[0].valid);
        assert_eq!(fetches[0].direction, Vector3::zeros());
    }

    #[test]
    fn single_view_validity_follows_frustum() {
        let views = vec![view_at(0.0, [0.25; 3])];
        let inside = fetch_views(&Vector3::zeros(), &views, Descriptor::Color);
        assert_eq!(inside.len(), 1);
        assert!(inside[0].valid);
        assert_eq!(inside[0].value, vec![0.25; 3]);
        let behind = fetch_views(&Vector3::new(0.0, 0.0, -5.0), &views, Descriptor::Color);
        assert!(!behind[0].valid);
        let outside = fetch_views(&Vector3::new(10.0, 0.0, 0.0), &views, Descriptor::Color);
        assert!(!outside[0].valid);
    }

    #[test]
    fn patch_descriptor_has_27_values() {
        let views = vec![view_at(0.0, [0.25, 0.5, 0.75])];
        let f = fetch_views(&Vector3::zeros(), &views, Descriptor::Patch3x3);
        assert_eq!(f[0].value.len(), Descriptor::Patch3x3.len());
        assert_eq!(&f[0].value[12..15], &[0.25, 0.5, 0.75]);
    }

    fn arb_fetches() -> impl Strategy<Value = Vec<ViewFetch>> {
        prop::collection::vec(
            (
                prop::array::uniform3(0.0f64..1.0),
                prop::array::uniform3(-1.0f64..1.0),
                prop::bool::weighted(0.8),
            ),
            2..8,
        )
        .prop_map(|items| {
            let mut out: Vec<ViewFetch> = items
                .into_iter()
                .enumerate()
                .map(|(i, (v, d, ok))| {
                    let mut f = fetch(i, v, [d[0], d[1], d[2] + 2.0]);
                    if !ok {
                        f.valid = false;
                        f.value.clear();
                    }
                    f
                })
                .collect();
            out[0].valid = true;
            if out[0].value.is_empty() {
                out[0].value = vec![0.5; 3];
            }
            out
        })
    }

    proptest! {
        #[test]
        fn fusion_invariants(fetches in arb_fetches(), scheme_idx in 0usize..3, tau in 0.01f64..2.0, rot in 0usize..8) {
            let scheme = SCHEMES[scheme_idx];
            let target = Vector3::new(0.1, -0.2, 1.0);
            let (fused, w) = fuse(&fetches, scheme, tau, Some(&target)).unwrap();

            // Normalization over valid views, zero elsewhere.
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (f, wi) in fetches.iter().zip(&w.weights) {
                prop_assert!(*wi >= 0.0);
                if !f.valid { prop_assert_eq!(*wi, 0.0); }
            }

            // Convexity: inside the bounding box of valid values.
            for k in 0..3 {
                let vals: Vec<f64> = fetches.iter().filter(|f| f.valid).map(|f| f.value[k]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(fused[k] >= lo - 1e-12 && fused[k] <= hi + 1e-12);
            }

            // Permutation equivariance.
            let n = fetches.len();
            let shift = rot % n;
            let rotated: Vec<ViewFetch> = (0..n).map(|i| fetches[(i + shift) % n].clone()).collect();
            let (fused2, w2) = fuse(&rotated, scheme, tau, Some(&target)).unwrap();
            for i in 0..n {
                prop_assert!((w2.weights[i] - w.weights[(i + shift) % n]).abs() < 1e-12);
            }
            for k in 0..3 {
                prop_assert!((fused2[k] - fused[k]).abs() < 1e-12);
            }
        }
    }
}
