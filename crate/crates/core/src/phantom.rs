//! Seeded synthetic CT phantoms.
//!
//! Generation order is fixed: shapes are rasterized onto a zero background
//! (later shapes overwrite earlier ones), Gaussian noise is added to every
//! voxel, then `floor(density * N)` distinct voxels are overwritten with the
//! spot intensity. Spots are applied last so their grey value is exact.
//!
//! Randomness comes from PCG64 (`rand_pcg::Pcg64`, seeded with
//! `seed_from_u64`). Gaussian deviates use Box-Muller with `u1 = 1 - U`,
//! `u2 = U` for `U` uniform in `[0, 1)`, consuming both outputs of each pair,
//! and transcendental functions come from `libm` so results do not depend on
//! the platform math library. Noisy values are rounded half away from zero
//! and clamped to `[0, 255]`.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "RawShape")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
        intensity: u8,
    },
    /// Voxels with `radius - thickness <= distance <= radius`.
    Shell {
        center: [f64; 3],
        radius: f64,
        thickness: f64,
        intensity: u8,
    },
    /// Axis-aligned box with the given half extents.
    Box {
        center: [f64; 3],
        half_extent: [f64; 3],
        intensity: u8,
    },
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeType {
    Sphere,
    Shell,
    Box,
}

/// Flat form of [`Shape`] for deserialization. Parsing a flat struct keeps
/// error paths precise (`shapes[0].radius`), which a tagged enum loses.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShape {
    #[serde(rename = "type")]
    kind: ShapeType,
    center: [f64; 3],
    radius: Option<f64>,
    thickness: Option<f64>,
    half_extent: Option<[f64; 3]>,
    intensity: u8,
}

impl TryFrom<RawShape> for Shape {
    type Error = String;

    fn try_from(r: RawShape) -> std::result::Result<Self, String> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| format!("missing field `{name}`"));
        let forbid = |present: bool, name: &str| {
            if present {
                Err(format!("unknown field `{name}` for this shape type"))
            } else {
                Ok(())
            }
        };
        Ok(match r.kind {
            ShapeType::Sphere => {
                forbid(r.thickness.is_some(), "thickness")?;
                forbid(r.half_extent.is_some(), "half_extent")?;
                Shape::Sphere {
                    center: r.center,
                    radius: need(r.radius, "radius")?,
                    intensity: r.intensity,
                }
            }
            ShapeType::Shell => {
                forbid(r.half_extent.is_some(), "half_extent")?;
                Shape::Shell {
                    center: r.center,
                    radius: need(r.radius, "radius")?,
                    thickness: need(r.thickness, "thickness")?,
                    intensity: r.intensity,
                }
            }
            ShapeType::Box => {
                forbid(r.radius.is_some(), "radius")?;
                forbid(r.thickness.is_some(), "thickness")?;
                Shape::Box {
                    center: r.center,
                    half_extent: r.half_extent.ok_or("missing field `half_extent`")?,
                    intensity: r.intensity,
                }
            }
        })
    }
}

impl Shape {
    pub fn intensity(&self) -> u8 {
        match *self {
            Shape::Sphere { intensity, .. }
            | Shape::Shell { intensity, .. }
            | Shape::Box { intensity, .. } => intensity,
        }
    }

    /// Whether the point `p` (a voxel center) lies inside the shape.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Shape::Sphere { center, radius, .. } => dist2(p, center) <= radius * radius,
            Shape::Shell {
                center,
                radius,
                thickness,
                ..
            } => {
                let d2 = dist2(p, center);
                let inner = (radius - thickness).max(0.0);
                d2 <= radius * radius && d2 >= inner * inner
            }
            Shape::Box {
                center,
                half_extent,
                ..
            } => (0..3).all(|i| (p[i] - center[i]).abs() <= half_extent[i]),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidSpec {
                field: format!("{field}.{name}"),
                reason: reason.to_string(),
            })
        };
        let center = match self {
            Shape::Sphere { center, .. } | Shape::Shell { center, .. } | Shape::Box { center, .. } => {
                center
            }
        };
        if center.iter().any(|c| !c.is_finite()) {
            return bad("center", "must be finite");
        }
        match *self {
            Shape::Sphere { radius, .. } if !(radius >= 0.0 && radius.is_finite()) => {
                bad("radius", "must be finite and >= 0")
            }
            Shape::Shell {
                radius, thickness, ..
            } => {
                if !(radius >= 0.0 && radius.is_finite()) {
                    bad("radius", "must be finite and >= 0")
                } else if !(thickness >= 0.0 && thickness.is_finite()) {
                    bad("thickness", "must be finite and >= 0")
                } else {
                    Ok(())
                }
            }
            Shape::Box { half_extent, .. }
                if half_extent.iter().any(|h| !(*h >= 0.0 && h.is_finite())) =>
            {
                bad("half_extent", "must be finite and >= 0")
            }
            _ => Ok(()),
        }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotNoise {
    /// Fraction of all voxels replaced by spots, in `[0, 1]`.
    pub density: f64,
    pub intensity: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default)]
    pub shapes: Vec<Shape>,
    /// Standard deviation of the additive Gaussian noise, in grey levels.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub spot_noise: SpotNoise,
    pub rng_seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidSpec {
                field: "dims".into(),
                reason: format!("every dimension must be >= 1, got {:?}", self.dims),
            });
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidSpec {
                field: "noise_sigma".into(),
                reason: format!("must be finite and >= 0, got {}", self.noise_sigma),
            });
        }
        let density = self.spot_noise.density;
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::InvalidSpec {
                field: "spot_noise.density".into(),
                reason: format!("must be in [0, 1], got {density}"),
            });
        }
        for (i, shape) in self.shapes.iter().enumerate() {
            shape.validate(&format!("shapes[{i}]"))?;
        }
        Ok(())
    }

    /// Center of the grid in voxel coordinates.
    pub fn grid_center(&self) -> [f64; 3] {
        self.dims.map(|d| (d as f64 - 1.0) / 2.0)
    }

    pub fn spot_count(&self) -> usize {
        let n: usize = self.dims.iter().product();
        (self.spot_noise.density * n as f64).floor() as usize
    }
}

/// Box-Muller standard normal deviates, both outputs of each pair used.
struct Gaussian {
    spare: Option<f64>,
}

impl Gaussian {
    fn next(&mut self, rng: &mut Pcg64) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume> {
    spec.validate()?;
    let mut rng = Pcg64::seed_from_u64(spec.rng_seed);
    let mut gauss = Gaussian { spare: None };
    let sigma = spec.noise_sigma;

    let mut data = Vec::with_capacity(spec.dims.iter().product());
    for z in 0..spec.dims[2] {
        for y in 0..spec.dims[1] {
            for x in 0..spec.dims[0] {
                let p = [x as f64, y as f64, z as f64];
                let base = spec
                    .shapes
                    .iter()
                    .rev()
                    .find(|s| s.contains(p))
                    .map_or(0, Shape::intensity);
                let value = if sigma > 0.0 {
                    libm::round(base as f64 + sigma * gauss.next(&mut rng)).clamp(0.0, 255.0) as u8
                } else {
                    base
                };
                data.push(value);
            }
        }
    }

    let spots = spec.spot_count();
    if spots > 0 {
        for i in rand::seq::index::sample(&mut rng, data.len(), spots) {
            data[i] = spec.spot_noise.intensity;
        }
    }
    Volume::new(spec.dims, data)
}

/// Phantoms used by the test suites, benchmarks and the demo.
pub mod presets {
    use super::*;

    /// Solid sphere of intensity 200 with light Gaussian noise and 50
    /// isolated spot voxels at 255.
    pub fn spot_phantom(n: usize) -> PhantomSpec {
        let dims = [n; 3];
        let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
        let voxels = (n * n * n) as f64;
        PhantomSpec {
            dims,
            shapes: vec![Shape::Sphere {
                center: c,
                radius: 0.3 * n as f64,
                intensity: 200,
            }],
            noise_sigma: 6.0,
            // half a voxel of slack so the floor lands on exactly 50
            spot_noise: SpotNoise {
                density: 50.5 / voxels,
                intensity: 255,
            },
            rng_seed: 0x5EED_0050,
        }
    }

    /// Several structures of different grey levels under heavy Gaussian
    /// and spot noise.
    pub fn noisy_phantom(n: usize) -> PhantomSpec {
        let dims = [n; 3];
        let s = n as f64;
        let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
        PhantomSpec {
            dims,
            shapes: vec![
                Shape::Box {
                    center: [0.3 * s, 0.7 * s, 0.5 * s],
                    half_extent: [0.12 * s, 0.12 * s, 0.3 * s],
                    intensity: 150,
                },
                Shape::Shell {
                    center: c,
                    radius: 0.28 * s,
                    thickness: 0.06 * s,
                    intensity: 210,
                },
                Shape::Sphere {
                    center: [0.7 * s, 0.3 * s, 0.55 * s],
                    radius: 0.12 * s,
                    intensity: 180,
                },
            ],
            noise_sigma: 22.0,
            spot_noise: SpotNoise {
                density: 0.0005,
                intensity: 255,
            },
            rng_seed: 0x0C7F_11E5,
        }
    }
}
