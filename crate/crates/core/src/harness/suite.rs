//! Procedural test scenes and their camera rigs.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{Primitive, SceneDescription, Shape};
use crate::geometry::{Camera, CameraIntrinsics, Pose};
use crate::rng::derive_seed;
use crate::texture::Texture;

/// Names accepted by [`suite_scene`], in suite order.
pub const SUITE_SCENES: [&str; 3] = ["sphere_on_plane", "occluding_boxes", "blob_cluster"];
/// Fronto-parallel textured plane used to check the plane sweep.
pub const TEXTURED_PLANE: &str = "textured_plane";
/// Reference slots available on the hemisphere rig.
pub const MAX_REFERENCE_VIEWS: usize = 8;
pub const DEFAULT_REFERENCE_VIEWS: usize = 5;
pub const DEFAULT_RESOLUTION: usize = 128;

const RIG_RADIUS: f64 = 4.5;
const RIG_FOV_DEG: f64 = 45.0;
const RIG_LOOK_AT: [f64; 3] = [0.0, 0.4, 0.0];
const TARGET_AZ_EL: (f64, f64) = (0.0, 30.0);
// Reference offsets (azimuth, elevation) in degrees relative to the target.
// Any prefix of this list gives a usable rig, so view-count sweeps nest.
const REFERENCE_OFFSETS: [(f64, f64); MAX_REFERENCE_VIEWS] = [
    (-5.4, 1.2),
    (5.4, -1.2),
    (-1.5, 4.2),
    (2.1, -3.3),
    (9.0, 2.7),
    (-9.0, -0.9),
    (3.6, 6.0),
    (-4.2, 6.6),
];
const RIG_NEAR: f64 = 2.5;
const RIG_FAR: f64 = 8.5;

/// A target camera plus reference cameras and the ray bounds used for all
/// of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub target: Camera,
    pub references: Vec<Camera>,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteScene {
    pub name: String,
    pub description: SceneDescription,
    pub rig: Rig,
}

/// Ground slab whose top face is `y = 0`.
fn ground(texture: Texture) -> Primitive {
    Primitive {
        shape: Shape::Box {
            half_extents: [3.0, 0.25, 3.0],
        },
        center: [0.0, -0.25, 0.0],
        sigma_max: 25.0,
        texture,
    }
}

/// Texture seeds are kept to 31 bits so scene dumps fit TOML integers.
fn texture_seed(seed: u64, k: u64) -> u64 {
    derive_seed(seed, k) >> 33
}

const BACKGROUND: [f64; 3] = [0.08, 0.1, 0.14];

fn sphere_on_plane(seed: u64) -> SceneDescription {
    SceneDescription {
        primitives: vec![
            ground(Texture::noise(
                0.15,
                texture_seed(seed, 1),
                [0.9, 0.85, 0.7],
                [0.15, 0.2, 0.35],
            )),
            Primitive {
                shape: Shape::Sphere { radius: 0.8 },
                center: [0.0, 0.8, 0.0],
                sigma_max: 25.0,
                texture: Texture::noise(0.3, texture_seed(seed, 2), [0.9, 0.35, 0.1], [0.15, 0.6, 0.9]),
            },
        ],
        background: BACKGROUND,
        view_tint: None,
    }
}

fn occluding_boxes(seed: u64) -> SceneDescription {
    SceneDescription {
        primitives: vec![
            ground(Texture::noise(
                0.15,
                texture_seed(seed, 1),
                [0.8, 0.75, 0.55],
                [0.15, 0.3, 0.2],
            )),
            Primitive {
                shape: Shape::Box {
                    half_extents: [0.45, 0.75, 0.4],
                },
                center: [-0.15, 0.75, 1.2],
                sigma_max: 25.0,
                texture: Texture::checker(0.12, texture_seed(seed, 2), [0.95, 0.85, 0.3], [0.3, 0.1, 0.5]),
            },
            Primitive {
                shape: Shape::Box {
                    half_extents: [0.6, 0.9, 0.5],
                },
                center: [0.45, 0.9, -1.0],
                sigma_max: 25.0,
                texture: Texture::noise(0.3, texture_seed(seed, 3), [0.1, 0.5, 0.8], [0.9, 0.9, 0.85]),
            },
        ],
        background: BACKGROUND,
        view_tint: None,
    }
}

fn blob_cluster(seed: u64) -> SceneDescription {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 7));
    let mut primitives = Vec::new();
    for i in 0..6 {
        let angle = i as f64 * std::f64::consts::TAU / 6.0 + rng.gen_range(-0.3..0.3);
        let radius = rng.gen_range(0.25..0.75);
        primitives.push(Primitive {
            shape: Shape::GaussianBlob {
                scale: rng.gen_range(0.2..0.35),
            },
            center: [radius * angle.cos(), rng.gen_range(0.45..1.1), radius * angle.sin()],
            sigma_max: rng.gen_range(30.0..60.0),
            texture: Texture::noise(
                0.25,
                texture_seed(seed, 10 + i),
                [
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(0.2..0.7),
                    rng.gen_range(0.0..0.4),
                ],
                [
                    rng.gen_range(0.0..0.3),
                    rng.gen_range(0.3..0.8),
                    rng.gen_range(0.5..1.0),
                ],
            ),
        });
    }
    SceneDescription {
        primitives,
        background: BACKGROUND,
        view_tint: None,
    }
}

fn hemisphere_camera(intrinsics: CameraIntrinsics, azimuth_deg: f64, elevation_deg: f64) -> Result<Camera> {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let target = Vector3::from(RIG_LOOK_AT);
    let eye = target + RIG_RADIUS * Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
    Ok(Camera::new(intrinsics, Pose::look_at(eye, target, Vector3::y())?))
}

/// Target plus `n_views` references on a hemisphere around the scene. The
/// seed jitters each reference by up to 0.6 degrees.
pub fn hemisphere_rig(seed: u64, width: usize, height: usize, n_views: usize) -> Result<Rig> {
    if n_views > MAX_REFERENCE_VIEWS {
        return Err(Error::Config(format!(
            "the hemisphere rig has {MAX_REFERENCE_VIEWS} reference slots, {n_views} requested"
        )));
    }
    let k = CameraIntrinsics::from_fov(width, height, RIG_FOV_DEG)?;
    let target = hemisphere_camera(k, TARGET_AZ_EL.0, TARGET_AZ_EL.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x816));
    let references = REFERENCE_OFFSETS
        .iter()
        .map(|&(da, de)| {
            let (ja, je) = (rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            hemisphere_camera(k, TARGET_AZ_EL.0 + da + ja, TARGET_AZ_EL.1 + de + je)
        })
        .take(n_views)
        .collect::<Result<Vec<_>>>()?;
    Ok(Rig {
        target,
        references,
        near: RIG_NEAR,
        far: RIG_FAR,
    })
}

/// Wall of noise texture facing the target camera at distance `depth`,
/// filling the whole view, with references translated sideways and
/// vertically so the plane stays fronto-parallel in every view.
pub fn textured_plane_scene(seed: u64, width: usize, height: usize, n_views: usize, depth: f64) -> Result<SuiteScene> {
    if n_views > MAX_REFERENCE_VIEWS {
        return Err(Error::Config(format!(
            "the plane rig has {MAX_REFERENCE_VIEWS} reference slots, {n_views} requested"
        )));
    }
    let k = CameraIntrinsics::from_fov(width, height, RIG_FOV_DEG)?;
    let description = SceneDescription {
        primitives: vec![Primitive {
            shape: Shape::Box {
                half_extents: [4.0 * depth, 4.0 * depth, 0.25],
            },
            center: [0.0, 0.0, depth + 0.25],
            sigma_max: 200.0,
            texture: Texture::noise(0.08 * depth, texture_seed(seed, 1), [0.95, 0.85, 0.2], [0.1, 0.2, 0.7]),
        }],
        background: BACKGROUND,
        view_tint: None,
    };
    let baseline = 0.2 * depth;
    let offsets = [
        (-1.0, 0.0),
        (1.0, 0.0),
        (0.0, -1.0),
        (0.0, 1.0),
        (-1.0, -1.0),
        (1.0, 1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
    ];
    let references = offsets
        .iter()
        .take(n_views)
        .map(|&(dx, dy)| {
            let centre = Vector3::new(dx * baseline, dy * baseline, 0.0);
            Ok(Camera::new(k, Pose::new(nalgebra::Matrix3::identity(), -centre)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteScene {
        name: TEXTURED_PLANE.into(),
        description,
        rig: Rig {
            target: Camera::new(k, Pose::identity()),
            references,
            near: 0.5 * depth,
            far: 2.0 * depth,
        },
    })
}

/// Looks up a named scene. Suite scenes use the hemisphere rig.
pub fn suite_scene(name: &str, seed: u64, width: usize, height: usize, n_views: usize) -> Result<SuiteScene> {
    let description = match name {
        "sphere_on_plane" => sphere_on_plane(seed),
        "occluding_boxes" => occluding_boxes(seed),
        "blob_cluster" => blob_cluster(seed),
        TEXTURED_PLANE => return textured_plane_scene(seed, width, height, n_views, 3.0),
        other => {
            return Err(Error::Config(format!(
                "unknown scene `{other}` (known: {}, {TEXTURED_PLANE})",
                SUITE_SCENES.join(", ")
            )))
        }
    };
    Ok(SuiteScene {
        name: name.into(),
        description,
        rig: hemisphere_rig(seed, width, height, n_views)?,
    })
}

/// The three comparison scenes at the default resolution with five
/// reference views each.
pub fn make_scene_suite(seed: u64) -> Vec<SuiteScene> {
    SUITE_SCENES
        .iter()
        .map(|name| {
            suite_scene(
                name,
                seed,
                DEFAULT_RESOLUTION,
                DEFAULT_RESOLUTION,
                DEFAULT_REFERENCE_VIEWS,
            )
            .expect("built-in scenes are valid")
        })
        .collect()
}
