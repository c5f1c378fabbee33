//! Pinhole cameras, rigid poses, rays and plane-induced homographies.
//!
//! Conventions used throughout the crate:
//!
//! * Poses map world points into the camera frame: `x_cam = R * x_world + t`.
//!   The camera looks down its +z axis, +x is right and +y is down in the image.
//! * Continuous pixel coordinates put the center of integer pixel `(i, j)` at
//!   `(i + 0.5, j + 0.5)`. Use [`pixel_center`] when iterating over a raster.
//! * Scene units are meters.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera-frame depths at or below this are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::domain(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::domain("image size must be non-zero"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::domain(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square-pixel intrinsics with the principal point at the image center
    /// and the given horizontal field of view in degrees.
    pub fn from_fov(width: usize, height: usize, fov_x_deg: f64) -> Result<Self> {
        let f = 0.5 * width as f64 / (0.5 * fov_x_deg.to_radians()).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn contains(&self, px: [f64; 2]) -> bool {
        px[0] >= 0.0 && px[1] >= 0.0 && px[0] < self.width as f64 && px[1] < self.height as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    const ORTHO_TOL: f64 = 1e-9;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > Self::ORTHO_TOL {
            return Err(Error::domain(format!(
                "rotation is not orthonormal (max deviation {err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > Self::ORTHO_TOL {
            return Err(Error::domain(format!("rotation determinant is {det}")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`, with `up` giving the world
    /// direction that should appear towards the top of the image.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < MIN_DEPTH {
            return Err(Error::domain("look_at eye and target coincide"));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-12 {
            return Err(Error::domain("look_at up vector is parallel to view direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        // Re-orthonormalize away any rounding from the cross products.
        let rotation = nalgebra::Rotation3::from_matrix(&rotation).into_inner();
        Self::new(rotation, -(rotation * eye))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Optical axis expressed in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.center()
    }

    pub fn ray(&self, px: [f64; 2], near: f64, far: f64) -> Result<Ray> {
        ray_for_pixel(&self.intrinsics, &self.pose, px, near, far)
    }

    pub fn project(&self, x: &Vector3<f64>) -> Result<Projection> {
        project(&self.intrinsics, &self.pose, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>, t_near: f64, t_far: f64) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::domain("ray direction must be non-zero and finite"));
        }
        if !(t_near >= 0.0 && t_near < t_far) {
            return Err(Error::domain(format!(
                "ray bounds must satisfy 0 <= near < far, got [{t_near}, {t_far}]"
            )));
        }
        Ok(Self {
            origin,
            direction: direction / norm,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Result of projecting a world point into a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    /// Camera-frame z.
    pub depth: f64,
    /// False when the pixel lands outside the image; such views do not
    /// contribute to multi-view operations.
    pub in_view: bool,
}

/// Continuous coordinate of the center of integer pixel `(i, j)`.
pub fn pixel_center(i: usize, j: usize) -> [f64; 2] {
    [i as f64 + 0.5, j as f64 + 0.5]
}

pub fn ray_for_pixel(cam: &CameraIntrinsics, pose: &Pose, px: [f64; 2], near: f64, far: f64) -> Result<Ray> {
    if !cam.contains(px) {
        return Err(Error::domain(format!(
            "pixel ({}, {}) outside {}x{} image",
            px[0], px[1], cam.width, cam.height
        )));
    }
    let dir_cam = Vector3::new((px[0] - cam.cx) / cam.fx, (px[1] - cam.cy) / cam.fy, 1.0);
    let dir_world = pose.rotation().transpose() * dir_cam;
    Ray::new(pose.center(), dir_world, near, far)
}

pub fn project(cam: &CameraIntrinsics, pose: &Pose, x: &Vector3<f64>) -> Result<Projection> {
    let xc = pose.transform(x);
    if xc.z <= MIN_DEPTH {
        return Err(Error::BehindCamera { z: xc.z });
    }
    let pixel = [cam.fx * xc.x / xc.z + cam.cx, cam.fy * xc.y / xc.z + cam.cy];
    Ok(Projection {
        pixel,
        depth: xc.z,
        in_view: cam.contains(pixel),
    })
}

/// Homography taking target-view pixels to reference-view pixels for the
/// fronto-parallel plane `z = depth` in the target camera frame.
pub fn plane_homography(reference: &Camera, target: &Camera, depth: f64) -> Result<Matrix3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::domain(format!("plane depth must be positive, got {depth}")));
    }
    // Relative motion target frame -> reference frame.
    let rel = reference.pose.compose(&target.pose.inverse());
    let normal = Vector3::new(0.0, 0.0, 1.0);
    let m = rel.rotation() + rel.translation() * normal.transpose() / depth;
    Ok(reference.intrinsics.matrix() * m * target.intrinsics.inverse_matrix())
}

/// Applies a homography to a continuous pixel coordinate. Returns `None` when
/// the point maps to infinity or behind the reference camera.
pub fn apply_homography(h: &Matrix3<f64>, px: [f64; 2]) -> Option<[f64; 2]> {
    let p = h * Vector3::new(px[0], px[1], 1.0);
    if p.z <= MIN_DEPTH {
        return None;
    }
    Some([p.x / p.z, p.y / p.z])
}

/// Converts a camera-frame z depth at pixel `px` into distance along the
/// unit-direction ray through that pixel.
pub fn z_to_ray_distance(cam: &CameraIntrinsics, px: [f64; 2], z: f64) -> f64 {
    let dx = (px[0] - cam.cx) / cam.fx;
    let dy = (px[1] - cam.cy) / cam.fy;
    z * (1.0 + dx * dx + dy * dy).sqrt()
}
