//! Seeded procedural solid textures.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::image::Rgb;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureKind {
    Solid,
    Checker,
    /// Two-octave value noise blending between the two colors.
    Noise,
}

/// A procedural texture identified by kind and seed. The seed shifts the
/// checker phase and selects the noise lattice, so two textures with the same
/// name and seed are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub kind: TextureKind,
    #[serde(default)]
    pub seed: u64,
    /// Feature size in scene units.
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub color_a: Rgb,
    #[serde(default)]
    pub color_b: Rgb,
}

fn default_scale() -> f64 {
    0.25
}

impl Texture {
    pub fn solid(color: Rgb) -> Self {
        Self {
            kind: TextureKind::Solid,
            seed: 0,
            scale: default_scale(),
            color_a: color,
            color_b: color,
        }
    }

    pub fn checker(scale: f64, seed: u64, color_a: Rgb, color_b: Rgb) -> Self {
        Self {
            kind: TextureKind::Checker,
            seed,
            scale,
            color_a,
            color_b,
        }
    }

    pub fn noise(scale: f64, seed: u64, color_a: Rgb, color_b: Rgb) -> Self {
        Self {
            kind: TextureKind::Noise,
            seed,
            scale,
            color_a,
            color_b,
        }
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Rgb {
        let m = match self.kind {
            TextureKind::Solid => return self.color_a,
            TextureKind::Checker => {
                let phase = (derive_seed(self.seed, 0) % 1024) as f64 / 1024.0;
                let p = x / self.scale;
                let s = (p.x + phase).floor() + (p.y + phase).floor() + (p.z + phase).floor();
                if (s as i64).rem_euclid(2) == 0 {
                    0.0
                } else {
                    1.0
                }
            }
            TextureKind::Noise => {
                let p = x / self.scale;
                let v = 0.65 * value_noise(self.seed, &p) + 0.35 * value_noise(self.seed ^ 0xA5A5, &(p * 2.03));
                // Stretch contrast; two-octave value noise clusters around 0.5.
                ((v - 0.5) * 1.5 + 0.5).clamp(0.0, 1.0)
            }
        };
        lerp(self.color_a, self.color_b, m)
    }
}

fn lerp(a: Rgb, b: Rgb, m: f64) -> Rgb {
    [
        a[0] + (b[0] - a[0]) * m,
        a[1] + (b[1] - a[1]) * m,
        a[2] + (b[2] - a[2]) * m,
    ]
}

fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let h = derive_seed(
        seed,
        (x as u64).wrapping_mul(0x8DA6_B343)
            ^ (y as u64).wrapping_mul(0xD816_3841)
            ^ (z as u64).wrapping_mul(0xCB1A_B31F),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinearly interpolated lattice noise in [0, 1].
fn value_noise(seed: u64, p: &Vector3<f64>) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let (u, v, w) = (smooth(p.x - fx), smooth(p.y - fy), smooth(p.z - fz));
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - w), (1, w)] {
        for (dy, wy) in [(0, 1.0 - v), (1, v)] {
            for (dx, wx) in [(0, 1.0 - u), (1, u)] {
                acc += wx * wy * wz * lattice(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}
