use serde::{Deserialize, Serialize};

use super::vec::{self, Vec3};
use crate::error::{Error, Result};

/// Pinhole camera in volume coordinates (voxel centers at integer points).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in degrees, in `(0, 180)`.
    pub fov_deg: f64,
}

/// Orbit pose around the volume center; angles in degrees, distance in voxels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orbit {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
}

impl Orbit {
    pub fn default_for(dims: [usize; 3]) -> Self {
        let extent = dims.iter().copied().max().unwrap_or(1) as f64;
        Self {
            azimuth: 35.0,
            elevation: 25.0,
            distance: 2.2 * extent,
        }
    }
}

pub const DEFAULT_FOV_DEG: f64 = 40.0;

pub fn volume_center(dims: [usize; 3]) -> [f64; 3] {
    dims.map(|d| (d as f64 - 1.0) / 2.0)
}

impl Camera {
    /// Camera on a sphere around the volume center, z up. Elevation is
    /// clamped to ±89° so the up vector never aligns with the view direction.
    pub fn orbit(dims: [usize; 3], orbit: Orbit) -> Self {
        let center = volume_center(dims);
        let az = orbit.azimuth.to_radians();
        let el = orbit.elevation.clamp(-89.0, 89.0).to_radians();
        let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        Self {
            position: vec::add(center, vec::scale(dir, orbit.distance)),
            look_at: center,
            up: [0.0, 0.0, 1.0],
            fov_deg: DEFAULT_FOV_DEG,
        }
    }

    pub fn default_for(dims: [usize; 3]) -> Self {
        Self::orbit(dims, Orbit::default_for(dims))
    }

    pub fn basis(&self) -> Result<CameraBasis> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Camera(format!(
                "fov_deg must be in (0, 180), got {}",
                self.fov_deg
            )));
        }
        if self
            .position
            .iter()
            .chain(&self.look_at)
            .chain(&self.up)
            .any(|c| !c.is_finite())
        {
            return Err(Error::Camera("pose must be finite".into()));
        }
        let forward = vec::normalize(vec::sub(self.look_at, self.position))
            .ok_or_else(|| Error::Camera("position and look_at coincide".into()))?;
        let up_hint =
            vec::normalize(self.up).ok_or_else(|| Error::Camera("up vector is zero".into()))?;
        let side = vec::cross(forward, up_hint);
        if vec::norm(side) < 1e-6 {
            return Err(Error::Camera("up vector is parallel to the view direction".into()));
        }
        let right = vec::normalize(side).expect("checked above");
        let up = vec::cross(right, forward);
        Ok(CameraBasis {
            origin: self.position,
            forward,
            right,
            up,
            tan_half_fov: (self.fov_deg.to_radians() / 2.0).tan(),
        })
    }
}

/// Orthonormal camera frame used to generate primary rays.
#[derive(Clone, Copy, Debug)]
pub struct CameraBasis {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub tan_half_fov: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
}

impl CameraBasis {
    /// Ray through the center of pixel `(px, py)`; row 0 is the top.
    pub fn ray(&self, px: u32, py: u32, width: u32, height: u32) -> Ray {
        let aspect = width as f64 / height as f64;
        let sx = ((px as f64 + 0.5) / width as f64 * 2.0 - 1.0) * aspect * self.tan_half_fov;
        let sy = (1.0 - (py as f64 + 0.5) / height as f64 * 2.0) * self.tan_half_fov;
        let d = vec::add(
            self.forward,
            vec::add(vec::scale(self.right, sx), vec::scale(self.up, sy)),
        );
        Ray {
            origin: self.origin,
            dir: vec::normalize(d).expect("forward component keeps the direction nonzero"),
        }
    }
}
