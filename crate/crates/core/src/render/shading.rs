//! Surface normals from the 3D Sobel operator and Phong shading.

use serde::{Deserialize, Serialize};

use super::vec::{self, Vec3};
use crate::volume::Volume;

const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];

/// Sobel gradient at a voxel: central differences along each axis,
/// smoothed 1-2-1 along the two transverse axes.
pub fn sobel_gradient(volume: &Volume, x: i64, y: i64, z: i64) -> Vec3 {
    let mut g = [0.0; 3];
    for (k, wz) in SMOOTH.iter().enumerate() {
        let dz = k as i64 - 1;
        for (j, wy) in SMOOTH.iter().enumerate() {
            let dy = j as i64 - 1;
            for (i, wx) in SMOOTH.iter().enumerate() {
                let dx = i as i64 - 1;
                let v = volume.sample(x + dx, y + dy, z + dz) as f64;
                g[0] += dx as f64 * wy * wz * v;
                g[1] += dy as f64 * wx * wz * v;
                g[2] += dz as f64 * wx * wy * v;
            }
        }
    }
    g
}

/// Unit surface normal at a voxel, pointing toward decreasing intensity
/// (out of dense material). A vanishing gradient yields `fallback`, normally
/// the direction back toward the viewer.
pub fn sobel_normal(volume: &Volume, x: i64, y: i64, z: i64, fallback: Vec3) -> Vec3 {
    let g = sobel_gradient(volume, x, y, z);
    match vec::normalize(vec::scale(g, -1.0)) {
        Some(n) => n,
        None => vec::normalize(fallback).unwrap_or([0.0, 0.0, 1.0]),
    }
}

fn default_shininess() -> f64 {
    16.0
}

/// Phong coefficients and light direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lighting {
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    #[serde(default = "default_shininess")]
    pub shininess: f64,
    /// Direction toward the light; `None` places the light at the eye.
    pub light_dir: Option<[f64; 3]>,
}

impl Default for Lighting {
    fn default() -> Self {
        Self {
            ambient: 0.1,
            diffuse: 0.7,
            specular: 0.2,
            shininess: default_shininess(),
            light_dir: None,
        }
    }
}

/// Phong intensity in `[0, 1]`: `ka + kd max(0, n·l) + ks max(0, r·v)^s`
/// with `r` the reflection of `l` about `n`, clamped.
pub fn phong_intensity(normal: Vec3, view: Vec3, light: Vec3, lighting: &Lighting) -> f64 {
    let n_dot_l = vec::dot(normal, light);
    let reflected = vec::sub(vec::scale(normal, 2.0 * n_dot_l), light);
    let r_dot_v = vec::dot(reflected, view).max(0.0);
    let specular = if lighting.specular > 0.0 {
        lighting.specular * r_dot_v.powf(lighting.shininess)
    } else {
        0.0
    };
    (lighting.ambient + lighting.diffuse * n_dot_l.max(0.0) + specular).clamp(0.0, 1.0)
}

/// Phong intensity scaled to a grey level.
pub fn shade_phong(normal: Vec3, view: Vec3, light: Vec3, lighting: &Lighting) -> u8 {
    (phong_intensity(normal, view, light, lighting) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lighting(ka: f64, kd: f64, ks: f64) -> Lighting {
        Lighting {
            ambient: ka,
            diffuse: kd,
            specular: ks,
            shininess: 8.0,
            light_dir: None,
        }
    }

    #[test]
    fn back_facing_is_ambient_only() {
        let l = [0.0, 0.0, 1.0];
        let v = [1.0, 0.0, 0.0];
        assert_eq!(shade_phong([0.0, 0.0, -1.0], v, l, &lighting(0.1, 0.7, 0.2)), 26);
    }

    #[test]
    fn full_diffuse() {
        let n = [0.0, 1.0, 0.0];
        assert_eq!(shade_phong(n, n, n, &lighting(0.0, 1.0, 0.0)), 255);
    }

    #[test]
    fn half_lit_without_highlight() {
        // n·l = 0.5 and the reflected ray perpendicular to the viewer
        let n = [0.0, 0.0, 1.0];
        let l = [3f64.sqrt() / 2.0, 0.0, 0.5];
        let r = vec::sub(vec::scale(n, 2.0 * vec::dot(n, l)), l);
        let v = vec::normalize(vec::cross(r, [1.0, 1.0, 0.0])).unwrap();
        assert!(vec::dot(r, v).abs() < 1e-12);
        assert_eq!(shade_phong(n, v, l, &lighting(0.1, 0.7, 0.2)), 115);
    }

    #[test]
    fn ramp_normals() {
        let ramp_x = Volume::from_fn([6; 3], |x, _, _| (x * 10) as u8).unwrap();
        assert_eq!(sobel_normal(&ramp_x, 2, 2, 2, [0.0, 0.0, 1.0]), [-1.0, 0.0, 0.0]);
        assert_eq!(sobel_gradient(&ramp_x, 2, 2, 2), [320.0, 0.0, 0.0]);
        let ramp_z = Volume::from_fn([6; 3], |_, _, z| (z * 10) as u8).unwrap();
        assert_eq!(sobel_normal(&ramp_z, 3, 3, 3, [1.0, 0.0, 0.0]), [0.0, 0.0, -1.0]);
    }

    #[test]
    fn flat_field_uses_fallback() {
        let flat = Volume::filled([5; 3], 9).unwrap();
        let n = sobel_normal(&flat, 2, 2, 2, [0.0, 3.0, 4.0]);
        for (a, b) in n.iter().zip([0.0, 0.6, 0.8]) {
            assert!((a - b).abs() < 1e-12, "{n:?}");
        }
    }
}
