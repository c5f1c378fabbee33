//! Density/color fields queried by the renderers.
//!
//! [`SceneDescription`] is an analytic field built from hard primitives and
//! gaussian blobs; it doubles as the source of ground-truth depth.
//! [`PhotoConsistencyField`] derives density from how well a set of posed
//! images agree about the color of a point.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::fusion::{fetch_views, fuse, Descriptor, FusionScheme};
use crate::geometry::Ray;
use crate::image::{PosedImage, Rgb};
use crate::texture::Texture;

/// Uniform steps used by [`ground_truth_depth`].
pub const GROUND_TRUTH_STEPS: usize = 4096;
/// Transmittance level that defines the surface.
pub const ISO_TRANSMITTANCE: f64 = 0.5;
/// Gaussian blobs are cut off at this many standard deviations (relative
/// density below 1.6e-8) so distant blobs cost nothing to query.
pub const BLOB_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub sigma: f64,
    pub color: Rgb,
}

impl FieldSample {
    pub const EMPTY: FieldSample = FieldSample {
        sigma: 0.0,
        color: [0.0; 3],
    };
}

/// Anything that can report density and color at a point seen from a
/// direction. Implementations must be safe to query from many threads.
pub trait FieldProvider: Send + Sync {
    fn query(&self, x: &Vector3<f64>, dir: &Vector3<f64>) -> FieldSample;
}

impl<F: FieldProvider + ?Sized> FieldProvider for &F {
    fn query(&self, x: &Vector3<f64>, dir: &Vector3<f64>) -> FieldSample {
        (**self).query(x, dir)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: [f64; 3],
    },
    /// Isotropic gaussian with standard deviation `scale`.
    GaussianBlob {
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub center: [f64; 3],
    pub sigma_max: f64,
    pub texture: Texture,
}

impl Primitive {
    pub fn density(&self, x: &Vector3<f64>) -> f64 {
        let d = x - Vector3::from(self.center);
        match &self.shape {
            Shape::Sphere { radius } => {
                if d.norm_squared() <= radius * radius {
                    self.sigma_max
                } else {
                    0.0
                }
            }
            Shape::Box { half_extents } => {
                if d.x.abs() <= half_extents[0] && d.y.abs() <= half_extents[1] && d.z.abs() <= half_extents[2] {
                    self.sigma_max
                } else {
                    0.0
                }
            }
            Shape::GaussianBlob { scale } => {
                let r2 = d.norm_squared() / (scale * scale);
                if r2 > BLOB_CUTOFF * BLOB_CUTOFF {
                    0.0
                } else {
                    self.sigma_max * (-0.5 * r2).exp()
                }
            }
        }
    }
}

/// Optional view-dependent tint: the color is pulled towards `color` by up to
/// `strength` as the viewing direction aligns with `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTint {
    pub color: Rgb,
    pub axis: [f64; 3],
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    pub background: Rgb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_tint: Option<ViewTint>,
}

impl SceneDescription {
    pub fn empty(background: Rgb) -> Self {
        Self {
            primitives: Vec::new(),
            background,
            view_tint: None,
        }
    }

    pub fn with_sigma_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.primitives {
            p.sigma_max *= factor;
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, p) in self.primitives.iter().enumerate() {
            if !(p.sigma_max >= 0.0) {
                return Err(format!("primitives[{i}].sigma_max must be >= 0"));
            }
            let size_ok = match &p.shape {
                Shape::Sphere { radius } => *radius > 0.0,
                Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
                Shape::GaussianBlob { scale } => *scale > 0.0,
            };
            if !size_ok {
                return Err(format!("primitives[{i}].shape has a non-positive size"));
            }
        }
        Ok(())
    }
}

impl FieldProvider for SceneDescription {
    fn query(&self, x: &Vector3<f64>, dir: &Vector3<f64>) -> FieldSample {
        query_field(self, x, dir)
    }
}

pub fn query_field(scene: &SceneDescription, x: &Vector3<f64>, dir: &Vector3<f64>) -> FieldSample {
    let mut sigma = 0.0;
    let mut weighted = [0.0; 3];
    for p in &scene.primitives {
        let s = p.density(x);
        if s > 0.0 {
            let c = p.texture.eval(x);
            sigma += s;
            for k in 0..3 {
                weighted[k] += s * c[k];
            }
        }
    }
    if sigma <= 0.0 {
        return FieldSample::EMPTY;
    }
    let mut color = weighted.map(|v| (v / sigma).clamp(0.0, 1.0));
    if let Some(tint) = &scene.view_tint {
        let axis = Vector3::from(tint.axis).normalize();
        let m = tint.strength.clamp(0.0, 1.0) * 0.5 * (1.0 + dir.dot(&axis));
        for k in 0..3 {
            color[k] = (1.0 - m) * color[k] + m * tint.color[k];
        }
    }
    FieldSample { sigma, color }
}

const GL2_NODE: f64 = 0.211_324_865_405_187_1; // (1 - 1/sqrt(3)) / 2

/// Two-point Gauss-Legendre estimate of the optical depth over `[a, b]`.
fn optical_depth(field: &dyn FieldProvider, ray: &Ray, a: f64, b: f64) -> f64 {
    let h = b - a;
    let s0 = field.query(&ray.at(a + GL2_NODE * h), &ray.direction).sigma;
    let s1 = field.query(&ray.at(b - GL2_NODE * h), &ray.direction).sigma;
    0.5 * h * (s0 + s1)
}

/// Distance along `ray` where the accumulated transmittance first falls to
/// 0.5, or `None` if it never does inside the ray bounds.
pub fn ground_truth_depth(field: &dyn FieldProvider, ray: &Ray) -> Option<f64> {
    ground_truth_depth_with_steps(field, ray, GROUND_TRUTH_STEPS)
}

pub fn ground_truth_depth_with_steps(field: &dyn FieldProvider, ray: &Ray, steps: usize) -> Option<f64> {
    let target = -ISO_TRANSMITTANCE.ln();
    let h = (ray.t_far - ray.t_near) / steps.max(1) as f64;
    let mut tau = 0.0;
    for i in 0..steps.max(1) {
        let a = ray.t_near + i as f64 * h;
        let step = optical_depth(field, ray, a, a + h);
        if tau + step >= target {
            // Bisect inside the step on the same quadrature rule.
            let (mut lo, mut hi) = (a, a + h);
            while hi - lo > 1e-7 {
                let mid = 0.5 * (lo + hi);
                if tau + optical_depth(field, ray, a, mid) >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        tau += step;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotoConsistencyParams {
    /// Variance scale: density falls by `e` when the across-view variance
    /// reaches `tau`.
    pub tau: f64,
    pub sigma_scale: f64,
    pub fusion: FusionScheme,
    pub fusion_tau: f64,
}

impl Default for PhotoConsistencyParams {
    fn default() -> Self {
        Self {
            tau: 2e-3,
            sigma_scale: 20.0,
            fusion: FusionScheme::VarianceSoftmax,
            fusion_tau: 0.01,
        }
    }
}

/// Density from multi-view photometric agreement; color from fused fetches.
#[derive(Debug, Clone)]
pub struct PhotoConsistencyField {
    pub views: Vec<PosedImage>,
    pub params: PhotoConsistencyParams,
}

impl PhotoConsistencyField {
    pub fn new(views: Vec<PosedImage>, params: PhotoConsistencyParams) -> Self {
        Self { views, params }
    }
}

impl FieldProvider for PhotoConsistencyField {
    fn query(&self, x: &Vector3<f64>, dir: &Vector3<f64>) -> FieldSample {
        query_photoconsistency_field(&self.views, x, dir, &self.params)
    }
}

pub fn query_photoconsistency_field(
    views: &[PosedImage],
    x: &Vector3<f64>,
    dir: &Vector3<f64>,
    params: &PhotoConsistencyParams,
) -> FieldSample {
    let fetches = fetch_views(x, views, Descriptor::Color);
    let valid: Vec<&[f64]> = fetches.iter().filter(|f| f.valid).map(|f| f.value.as_slice()).collect();
    if valid.len() < 2 {
        return FieldSample::EMPTY;
    }
    let variance = channel_mean_variance(&valid);
    let sigma = params.sigma_scale * (-variance / params.tau).exp();
    let color = match fuse(&fetches, params.fusion, params.fusion_tau, Some(dir)) {
        Ok((v, _)) => [v[0].clamp(0.0, 1.0), v[1].clamp(0.0, 1.0), v[2].clamp(0.0, 1.0)],
        Err(_) => [0.0; 3],
    };
    FieldSample { sigma, color }
}

/// Population variance across views, averaged over channels.
pub(crate) fn channel_mean_variance(values: &[&[f64]]) -> f64 {
    let n = values.len() as f64;
    let dims = values[0].len();
    let mut total = 0.0;
    for k in 0..dims {
        let mean = values.iter().map(|v| v[k]).sum::<f64>() / n;
        total += values.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / n;
    }
    total / dims as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Camera, CameraIntrinsics, Pose};
    use crate::image::Image;
    use crate::texture::Texture;

    fn sphere(center: [f64; 3], radius: f64, sigma: f64) -> Primitive {
        Primitive {
            shape: Shape::Sphere { radius },
            center,
            sigma_max: sigma,
            texture: Texture::solid([0.8, 0.2, 0.1]),
        }
    }

    fn blob(center: [f64; 3], scale: f64, sigma: f64, color: Rgb) -> Primitive {
        Primitive {
            shape: Shape::GaussianBlob { scale },
            center,
            sigma_max: sigma,
            texture: Texture::solid(color),
        }
    }

    fn z_ray(near: f64, far: f64) -> Ray {
        Ray::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), near, far).unwrap()
    }

    const UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

    #[test]
    fn empty_scene_has_no_density() {
        let scene = SceneDescription::empty([0.1; 3]);
        assert_eq!(query_field(&scene, &Vector3::new(1.0, 2.0, 3.0), &UP).sigma, 0.0);
        assert_eq!(ground_truth_depth(&scene, &z_ray(0.1, 10.0)), None);
    }

    #[test]
    fn sphere_center_and_blob_falloff() {
        let mut scene = SceneDescription::empty([0.0; 3]);
        scene.primitives.push(sphere([0.0, 0.0, 5.0], 1.0, 5.0));
        assert_eq!(query_field(&scene, &Vector3::new(0.0, 0.0, 5.0), &UP).sigma, 5.0);

        let scene = SceneDescription {
            primitives: vec![blob([1.0, 2.0, 3.0], 0.4, 7.0, [0.5; 3])],
            ..SceneDescription::empty([0.0; 3])
        };
        let s = query_field(&scene, &Vector3::new(1.4, 2.0, 3.0), &UP).sigma;
        assert!((s - 7.0 * (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn color_is_density_weighted() {
        let scene = SceneDescription {
            primitives: vec![
                blob([0.0; 3], 1.0, 3.0, [1.0, 0.0, 0.0]),
                blob([0.0; 3], 1.0, 1.0, [0.0, 0.0, 1.0]),
            ],
            ..SceneDescription::empty([0.0; 3])
        };
        let s = query_field(&scene, &Vector3::zeros(), &UP);
        assert_eq!(s.sigma, 4.0);
        assert!((s.color[0] - 0.75).abs() < 1e-12 && (s.color[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn doubling_sigma_doubles_density_exactly() {
        let scene = SceneDescription {
            primitives: vec![
                blob([0.1, 0.0, 2.0], 0.5, 3.3, [0.2; 3]),
                sphere([0.0, 0.2, 2.5], 0.6, 1.7),
            ],
            ..SceneDescription::empty([0.0; 3])
        };
        let doubled = scene.with_sigma_scaled(2.0);
        for i in 0..50 {
            let x = Vector3::new(0.01 * i as f64, -0.02 * i as f64, 1.5 + 0.03 * i as f64);
            assert_eq!(
                query_field(&doubled, &x, &UP).sigma,
                2.0 * query_field(&scene, &x, &UP).sigma
            );
        }
    }

    #[test]
    fn view_tint_depends_on_direction() {
        let mut scene = SceneDescription::empty([0.0; 3]);
        scene.primitives.push(sphere([0.0; 3], 1.0, 1.0));
        scene.view_tint = Some(ViewTint {
            color: [0.0, 1.0, 0.0],
            axis: [0.0, 0.0, 1.0],
            strength: 0.5,
        });
        let a = query_field(&scene, &Vector3::zeros(), &UP).color;
        let b = query_field(&scene, &Vector3::zeros(), &(-UP)).color;
        assert!(a[1] > b[1]);
        assert_eq!(b, [0.8, 0.2, 0.1]);
    }

    #[test]
    fn hard_sphere_depth_approaches_front_boundary() {
        let (d, r) = (5.0, 1.0);
        for sigma in [50.0, 200.0, 1000.0] {
            let mut scene = SceneDescription::empty([0.0; 3]);
            scene.primitives.push(sphere([0.0, 0.0, d], r, sigma));
            let depth = ground_truth_depth(&scene, &z_ray(0.5, 10.0)).unwrap();
            assert!((depth - (d - r)).abs() <= 2.0 / sigma, "sigma {sigma}: depth {depth}");
        }
    }

    // Independent midpoint integrator at 16x the resolution, scanning for the
    // first crossing and interpolating linearly in optical depth.
    fn dense_crossing(scene: &SceneDescription, ray: &Ray, steps: usize) -> Option<f64> {
        let h = (ray.t_far - ray.t_near) / steps as f64;
        let target = std::f64::consts::LN_2;
        let mut tau = 0.0;
        for i in 0..steps {
            let t = ray.t_near + (i as f64 + 0.5) * h;
            let inc = query_field(scene, &ray.at(t), &ray.direction).sigma * h;
            if tau + inc >= target {
                return Some(ray.t_near + i as f64 * h + h * (target - tau) / inc);
            }
            tau += inc;
        }
        None
    }

    #[test]
    fn blob_depth_matches_dense_integrator() {
        let scene = SceneDescription {
            primitives: vec![
                blob([0.05, 0.0, 3.0], 0.35, 6.0, [0.5; 3]),
                blob([-0.1, 0.05, 3.6], 0.25, 9.0, [0.5; 3]),
            ],
            ..SceneDescription::empty([0.0; 3])
        };
        let ray = z_ray(1.0, 6.0);
        let fast = ground_truth_depth(&scene, &ray).unwrap();
        let slow = dense_crossing(&scene, &ray, 65536).unwrap();
        assert!((fast - slow).abs() < 1e-4, "{fast} vs {slow}");
    }

    #[test]
    fn occluder_in_front_never_increases_depth() {
        let mut scene = SceneDescription::empty([0.0; 3]);
        scene.primitives.push(blob([0.0, 0.0, 4.0], 0.3, 8.0, [0.5; 3]));
        let ray = z_ray(0.5, 8.0);
        let before = ground_truth_depth(&scene, &ray).unwrap();
        for z in [1.0, 2.0, 3.0] {
            let mut occluded = scene.clone();
            occluded.primitives.push(blob([0.0, 0.0, z], 0.2, 2.0, [0.5; 3]));
            let after = ground_truth_depth(&occluded, &ray).unwrap();
            assert!(after <= before + 1e-9);
        }
    }

    fn posed(cam: Camera, color: Rgb) -> PosedImage {
        PosedImage {
            image: Image::new(cam.width(), cam.height(), color),
            camera: cam,
        }
    }

    fn rig() -> Vec<Camera> {
        let k = CameraIntrinsics::from_fov(32, 32, 50.0).unwrap();
        [-0.6, 0.0, 0.6]
            .iter()
            .map(|&x| {
                let eye = Vector3::new(x, 0.0, -3.0);
                Camera::new(
                    k,
                    Pose::look_at(eye, Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0)).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn photoconsistency_of_identical_views_is_full_scale() {
        let views: Vec<_> = rig().into_iter().map(|c| posed(c, [0.3, 0.6, 0.2])).collect();
        let params = PhotoConsistencyParams::default();
        let s = query_photoconsistency_field(&views, &Vector3::zeros(), &UP, &params);
        assert_eq!(s.sigma, params.sigma_scale);
        assert!((s.color[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn photoconsistency_needs_two_views() {
        let views: Vec<_> = rig().into_iter().take(1).map(|c| posed(c, [0.5; 3])).collect();
        let s = query_photoconsistency_field(&views, &Vector3::zeros(), &UP, &PhotoConsistencyParams::default());
        assert_eq!(s.sigma, 0.0);
        // Point outside every frustum.
        let views: Vec<_> = rig().into_iter().map(|c| posed(c, [0.5; 3])).collect();
        let s = query_photoconsistency_field(
            &views,
            &Vector3::new(50.0, 0.0, 0.0),
            &UP,
            &PhotoConsistencyParams::default(),
        );
        assert_eq!(s.sigma, 0.0);
    }

    #[test]
    fn photoconsistency_ignores_global_offset() {
        let mut views: Vec<_> = rig().into_iter().map(|c| posed(c, [0.0; 3])).collect();
        for (i, v) in views.iter_mut().enumerate() {
            v.image = v.image.map(|_| [0.1 * i as f64, 0.2, 0.05 * i as f64]);
        }
        let params = PhotoConsistencyParams::default();
        let a = query_photoconsistency_field(&views, &Vector3::zeros(), &UP, &params).sigma;
        for v in views.iter_mut() {
            v.image = v.image.map(|p| p.map(|c| c + 0.25));
        }
        let b = query_photoconsistency_field(&views, &Vector3::zeros(), &UP, &params).sigma;
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }
}
