//! Parallel first-hit ray caster.
//!
//! Each pixel casts one ray through a pinhole camera and marches it through
//! the volume's bounding box in fixed steps, sampling the nearest voxel. A
//! sample whose raw value reaches the data threshold `T` is a candidate
//! surface point; the configured filter is evaluated at that voxel and the
//! candidate is accepted only if the filtered value also reaches `T`.
//! Rejected candidates are treated as noise and the march continues behind
//! them. Accepted hits are shaded with a Sobel normal and Phong lighting.
//!
//! Grey level 0 is empty space and never nominates a candidate, even when
//! the threshold is 0 (the Otsu threshold of a single-level volume).

mod camera;
mod shading;
mod vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use web_time::Instant;

pub use camera::{volume_center, Camera, CameraBasis, Orbit, Ray, DEFAULT_FOV_DEG};
pub use shading::{phong_intensity, shade_phong, sobel_gradient, sobel_normal, Lighting};
pub use vec::Vec3;

use crate::error::{Error, Result};
use crate::filters::{FilterConfig, PreparedFilter, VoxelFilter};
use crate::histogram::HistogramModel;
use crate::volume::{hex_string, BrickMap, Volume};

/// Slack in the filtered-value comparison so that fast and brute-force
/// filter evaluations, which round differently, accept the same voxels.
/// Filter outputs are ratios of small integers, so genuine gaps to `T` are
/// far larger than this.
pub const HIT_EPSILON: f64 = 1e-9;

fn default_step() -> f64 {
    0.5
}

fn default_max_steps() -> u32 {
    1 << 16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    pub width: u32,
    pub height: u32,
    /// Ray-march step in voxels.
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    pub lighting: Lighting,
    /// Grey level of pixels whose ray finds no surface.
    pub background: u8,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            step_size: default_step(),
            max_steps: default_max_steps(),
            lighting: Lighting::default(),
            background: 0,
        }
    }
}

impl RenderParams {
    pub fn with_size(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::RenderParams(msg));
        if self.width == 0 || self.height == 0 {
            return err(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return err(format!("step_size must be positive, got {}", self.step_size));
        }
        if self.max_steps == 0 {
            return err("max_steps must be at least 1".into());
        }
        let l = &self.lighting;
        for (name, value) in [
            ("ambient", l.ambient),
            ("diffuse", l.diffuse),
            ("specular", l.specular),
            ("shininess", l.shininess),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return err(format!("{name} must be finite and >= 0, got {value}"));
            }
        }
        if let Some(dir) = l.light_dir {
            if vec::normalize(dir).is_none() {
                return err(format!("light_dir must be a nonzero finite vector, got {dir:?}"));
            }
        }
        Ok(())
    }
}

/// Accepted surface point along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Ray parameter of the accepting sample.
    pub t: f64,
    pub voxel: [i64; 3],
    pub filtered: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MarchOutcome {
    pub hit: Option<Hit>,
    /// Candidates whose filtered value fell below the threshold.
    pub rejected: u32,
}

/// Entry and exit parameters of the ray in the voxel bounding box
/// `[-0.5, n - 0.5]^3`, clipped to `t >= 0`.
pub fn clip_to_volume(ray: &Ray, dims: [usize; 3]) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let lo = -0.5;
        let hi = dims[axis] as f64 - 0.5;
        let o = ray.origin[axis];
        let d = ray.dir[axis];
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo - o) / d, (hi - o) / d);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Margin, in voxels, by which a sample must lie inside a brick before the
/// marcher will skip it. Keeps the skip exact under floating-point rounding.
const BRICK_MARGIN: f64 = 1e-6;

/// Ray parameter at which `ray` leaves the brick holding `voxel`, shrunk by
/// [`BRICK_MARGIN`] on every face.
fn brick_exit(ray: &Ray, voxel: [usize; 3]) -> f64 {
    let size = BrickMap::BRICK as f64;
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        let lo = (voxel[a] >> BrickMap::SHIFT) as f64 * size - 0.5;
        let d = ray.dir[a];
        let t = if d > 0.0 {
            (lo + size - BRICK_MARGIN - ray.origin[a]) / d
        } else if d < 0.0 {
            (lo + BRICK_MARGIN - ray.origin[a]) / d
        } else {
            continue;
        };
        t_exit = t_exit.min(t);
    }
    t_exit
}

/// Marches `ray` from box entry to exit and returns the first candidate
/// whose filtered value reaches `threshold`.
///
/// Samples are taken at `t0 + k * step_size`. Runs of samples inside a brick
/// whose maximum is below the candidate level are stepped over; every sample
/// skipped that way would have been discarded anyway, so the outcome is the
/// same as a plain march.
pub fn march_ray<F: VoxelFilter + ?Sized>(
    volume: &Volume,
    ray: &Ray,
    step_size: f64,
    max_steps: u32,
    threshold: f64,
    filter: &F,
) -> MarchOutcome {
    let mut outcome = MarchOutcome::default();
    let Some((t0, t1)) = clip_to_volume(ray, volume.dims()) else {
        return outcome;
    };
    let bricks = volume.bricks();
    let candidate_level = threshold.max(1.0);
    let mut last_rejected: Option<[i64; 3]> = None;
    let mut k = 0u32;
    while k < max_steps {
        let t = t0 + k as f64 * step_size;
        if t > t1 {
            break;
        }
        let voxel = [0, 1, 2].map(|a| (ray.origin[a] + t * ray.dir[a] + 0.5).floor() as i64);
        let [x, y, z] = voxel;
        if !volume.contains(x, y, z) {
            k += 1;
            continue;
        }
        let (ux, uy, uz) = (x as usize, y as usize, z as usize);
        if (bricks.max_at(ux, uy, uz) as f64) < candidate_level {
            let t_exit = brick_exit(ray, [ux, uy, uz]);
            let next = ((t_exit - t0) / step_size).ceil();
            k = if next > k as f64 + 1.0 {
                next.min(max_steps as f64) as u32
            } else {
                k + 1
            };
            continue;
        }
        k += 1;
        let raw = volume.data()[volume.index(ux, uy, uz)] as f64;
        if raw < candidate_level || last_rejected == Some(voxel) {
            continue;
        }
        // a pure filter gives the same verdict at the same voxel, so
        // consecutive samples in a rejected voxel are skipped
        let filtered = filter.evaluate(volume, x, y, z);
        if filtered >= threshold - HIT_EPSILON {
            outcome.hit = Some(Hit { t, voxel, filtered });
            return outcome;
        }
        outcome.rejected += 1;
        last_rejected = Some(voxel);
    }
    outcome
}

/// Shaded result for one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelSample {
    pub value: u8,
    pub hit: Option<Hit>,
    pub normal: Option<Vec3>,
    pub rejected: u32,
}

/// Traces and shades a single pixel.
pub fn trace_pixel<F: VoxelFilter + ?Sized>(
    volume: &Volume,
    basis: &CameraBasis,
    params: &RenderParams,
    threshold: f64,
    filter: &F,
    px: u32,
    py: u32,
) -> PixelSample {
    let ray = basis.ray(px, py, params.width, params.height);
    let outcome = march_ray(volume, &ray, params.step_size, params.max_steps, threshold, filter);
    match outcome.hit {
        None => PixelSample {
            value: params.background,
            hit: None,
            normal: None,
            rejected: outcome.rejected,
        },
        Some(hit) => {
            let view = vec::scale(ray.dir, -1.0);
            let [x, y, z] = hit.voxel;
            let normal = sobel_normal(volume, x, y, z, view);
            let light = params
                .lighting
                .light_dir
                .and_then(vec::normalize)
                .unwrap_or(view);
            PixelSample {
                value: shade_phong(normal, view, light, &params.lighting),
                hit: Some(hit),
                normal: Some(normal),
                rejected: outcome.rejected,
            }
        }
    }
}

/// Everything that determines a frame's pixels for a given volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSnapshot {
    pub filter: FilterConfig,
    /// Threshold actually applied (explicit or Otsu).
    pub threshold: f64,
    pub params: RenderParams,
    pub camera: Camera,
}

impl FrameSnapshot {
    /// First 8 bytes of SHA-256 over the snapshot's JSON encoding.
    pub fn digest(&self) -> [u8; 8] {
        let json = serde_json::to_vec(self).expect("snapshot serializes");
        let hash = Sha256::digest(&json);
        hash[..8].try_into().expect("8 bytes")
    }

    pub fn digest_hex(&self) -> String {
        hex_string(&self.digest())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub total_ms: f64,
    /// Validation and filter preparation.
    pub setup_ms: f64,
    /// Ray marching and shading.
    pub trace_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStats {
    pub hit_pixels: u64,
    pub rejected_candidates: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Row-major grey values, row 0 at the top.
    pub pixels: Vec<u8>,
    pub stats: FrameStats,
    pub timing: FrameTiming,
    pub snapshot: FrameSnapshot,
}

impl Frame {
    /// Metadata sidecar. Timing sits under its own top-level key so that
    /// reproducibility checks can drop it.
    pub fn metadata(&self, volume_hash: &str) -> serde_json::Value {
        serde_json::json!({
            "width": self.width,
            "height": self.height,
            "volume_hash": volume_hash,
            "config_digest": self.snapshot.digest_hex(),
            "snapshot": self.snapshot,
            "stats": self.stats,
            "timing": self.timing,
        })
    }
}

/// Renders a frame with the fast filter path.
pub fn render_frame(
    volume: &Volume,
    camera: &Camera,
    params: &RenderParams,
    config: &FilterConfig,
    histogram: Option<&HistogramModel>,
) -> Result<Frame> {
    let start = Instant::now();
    let threshold = config.resolve_threshold(histogram)?;
    let filter = PreparedFilter::new(config, histogram)?;
    render_frame_with(volume, camera, params, config, threshold, &filter, start)
}

/// Renders a frame using any [`VoxelFilter`] implementation; `config` and
/// `threshold` are recorded in the snapshot.
pub fn render_frame_with_filter<F: VoxelFilter + ?Sized>(
    volume: &Volume,
    camera: &Camera,
    params: &RenderParams,
    config: &FilterConfig,
    threshold: f64,
    filter: &F,
) -> Result<Frame> {
    render_frame_with(volume, camera, params, config, threshold, filter, Instant::now())
}

fn render_frame_with<F: VoxelFilter + ?Sized>(
    volume: &Volume,
    camera: &Camera,
    params: &RenderParams,
    config: &FilterConfig,
    threshold: f64,
    filter: &F,
    start: Instant,
) -> Result<Frame> {
    params.validate()?;
    let basis = camera.basis()?;
    let (width, height) = (params.width, params.height);
    let mut pixels = vec![params.background; width as usize * height as usize];
    let setup_done = Instant::now();

    let trace_row = |py: usize, row: &mut [u8]| -> FrameStats {
        let mut stats = FrameStats::default();
        for (px, out) in row.iter_mut().enumerate() {
            let s = trace_pixel(volume, &basis, params, threshold, filter, px as u32, py as u32);
            *out = s.value;
            stats.hit_pixels += s.hit.is_some() as u64;
            stats.rejected_candidates += s.rejected as u64;
        }
        stats
    };
    let merge = |a: FrameStats, b: FrameStats| FrameStats {
        hit_pixels: a.hit_pixels + b.hit_pixels,
        rejected_candidates: a.rejected_candidates + b.rejected_candidates,
    };

    #[cfg(feature = "parallel")]
    let stats = {
        use rayon::prelude::*;
        pixels
            .par_chunks_mut(width as usize)
            .enumerate()
            .map(|(py, row)| trace_row(py, row))
            .reduce(FrameStats::default, merge)
    };
    #[cfg(not(feature = "parallel"))]
    let stats = pixels
        .chunks_mut(width as usize)
        .enumerate()
        .map(|(py, row)| trace_row(py, row))
        .fold(FrameStats::default(), merge);

    let end = Instant::now();
    let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
    Ok(Frame {
        width,
        height,
        pixels,
        stats,
        timing: FrameTiming {
            total_ms: ms(start, end),
            setup_ms: ms(start, setup_done),
            trace_ms: ms(setup_done, end),
        },
        snapshot: FrameSnapshot {
            filter: config.clone(),
            threshold,
            params: params.clone(),
            camera: camera.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{FilterKind, PreparedFilter};

    fn axis_ray(origin: Vec3, dir: Vec3) -> Ray {
        Ray {
            origin,
            dir: vec::normalize(dir).unwrap(),
        }
    }

    fn prepared(kind: FilterKind) -> PreparedFilter {
        PreparedFilter::new(&FilterConfig::new(kind), None).unwrap()
    }

    /// Plain march without brick skipping.
    fn naive_march<F: VoxelFilter>(vol: &Volume, ray: &Ray, step: f64, threshold: f64, f: &F) -> MarchOutcome {
        let mut outcome = MarchOutcome::default();
        let Some((t0, t1)) = clip_to_volume(ray, vol.dims()) else {
            return outcome;
        };
        let mut last = None;
        for k in 0.. {
            let t = t0 + k as f64 * step;
            if t > t1 {
                break;
            }
            let v = [0, 1, 2].map(|a| (ray.origin[a] + t * ray.dir[a] + 0.5).floor() as i64);
            if (vol.sample(v[0], v[1], v[2]) as f64) < threshold.max(1.0) || last == Some(v) {
                continue;
            }
            let filtered = f.evaluate(vol, v[0], v[1], v[2]);
            if filtered >= threshold - HIT_EPSILON {
                outcome.hit = Some(Hit { t, voxel: v, filtered });
                break;
            }
            outcome.rejected += 1;
            last = Some(v);
        }
        outcome
    }

    #[test]
    fn brick_skipping_matches_plain_march() {
        // sparse bright voxels in a dim field, plus a bright block
        let vol = Volume::from_fn([37, 29, 41], |x, y, z| {
            let h = (x * 73856093) ^ (y * 19349663) ^ (z * 83492791);
            if h % 97 == 0 || (20..26).contains(&x) && (10..18).contains(&y) && z > 30 {
                220
            } else {
                (h % 60) as u8
            }
        })
        .unwrap();
        let cam = Camera::orbit(vol.dims(), Orbit { azimuth: 17.0, elevation: 33.0, distance: 90.0 });
        let basis = cam.basis().unwrap();
        for kind in [FilterKind::None, FilterKind::LocalCluster] {
            let f = prepared(kind);
            for threshold in [0.0, 59.0, 101.0] {
                for py in (0..48).step_by(3) {
                    for px in 0..48 {
                        let ray = basis.ray(px, py, 48, 48);
                        let fast = march_ray(&vol, &ray, 0.5, u32::MAX, threshold, &f);
                        assert_eq!(fast, naive_march(&vol, &ray, 0.5, threshold, &f), "{kind} {threshold} {px} {py}");
                    }
                }
            }
        }
    }

    #[test]
    fn empty_volume_misses() {
        let vol = Volume::filled([16; 3], 0).unwrap();
        let ray = axis_ray([-10.0, 7.0, 7.0], [1.0, 0.0, 0.0]);
        let out = march_ray(&vol, &ray, 0.5, 1000, 101.0, &prepared(FilterKind::Mean));
        assert_eq!(out.hit, None);
    }

    #[test]
    fn slab_hit_at_first_sample() {
        let vol = Volume::from_fn([16; 3], |x, _, _| if x >= 8 { 200 } else { 0 }).unwrap();
        let ray = axis_ray([-10.0, 7.0, 7.0], [1.0, 0.0, 0.0]);
        for kind in [FilterKind::None, FilterKind::Mean, FilterKind::Okada] {
            let out = march_ray(&vol, &ray, 0.5, 1000, 101.0, &prepared(kind));
            let hit = out.hit.expect("slab hit");
            // box entry at t = 9.5; the sample at x = 7.5 rounds into x = 8
            assert_eq!(hit.voxel, [8, 7, 7], "{kind}");
            assert_eq!(hit.t, 17.5);
            assert_eq!(out.rejected, 0);
        }
    }

    #[test]
    fn spot_is_suppressed_by_local_cluster() {
        let vol = Volume::from_fn([16; 3], |x, y, z| if (x, y, z) == (8, 7, 7) { 255 } else { 0 })
            .unwrap();
        let ray = axis_ray([-10.0, 7.0, 7.0], [1.0, 0.0, 0.0]);
        let lc = march_ray(&vol, &ray, 0.5, 1000, 101.0, &prepared(FilterKind::LocalCluster));
        assert_eq!(lc.hit, None);
        assert_eq!(lc.rejected, 1);
        let none = march_ray(&vol, &ray, 0.5, 1000, 101.0, &prepared(FilterKind::None));
        assert_eq!(none.hit.unwrap().voxel, [8, 7, 7]);
    }

    #[test]
    fn rejected_candidate_does_not_hide_surface_behind() {
        let vol = Volume::from_fn([24, 8, 8], |x, y, z| {
            if (x, y, z) == (4, 4, 4) {
                255
            } else if x >= 12 {
                200
            } else {
                0
            }
        })
        .unwrap();
        let ray = axis_ray([-5.0, 4.0, 4.0], [1.0, 0.0, 0.0]);
        let out = march_ray(&vol, &ray, 0.5, 1000, 101.0, &prepared(FilterKind::LocalCluster));
        assert_eq!(out.rejected, 1);
        assert!(out.hit.unwrap().voxel[0] >= 12);
    }

    #[test]
    fn clip_misses_and_inside_start() {
        let ray = axis_ray([-5.0, 20.0, 0.0], [1.0, 0.0, 0.0]);
        assert_eq!(clip_to_volume(&ray, [8; 3]), None);
        let inside = axis_ray([3.0, 3.0, 3.0], [0.0, 0.0, 1.0]);
        assert_eq!(clip_to_volume(&inside, [8; 3]), Some((0.0, 4.5)));
    }

    #[test]
    fn empty_volume_renders_background() {
        let vol = Volume::filled([16; 3], 0).unwrap();
        let mut params = RenderParams::with_size(32, 24);
        params.background = 17;
        let frame = render_frame(
            &vol,
            &Camera::default_for(vol.dims()),
            &params,
            &FilterConfig::new(FilterKind::Mean).with_threshold(101.0),
            None,
        )
        .unwrap();
        assert_eq!(frame.pixels.len(), 32 * 24);
        assert!(frame.pixels.iter().all(|&p| p == 17));
        assert_eq!(frame.stats.hit_pixels, 0);
    }

    #[test]
    fn auto_threshold_needs_histogram() {
        let vol = Volume::filled([4; 3], 0).unwrap();
        let res = render_frame(
            &vol,
            &Camera::default_for(vol.dims()),
            &RenderParams::with_size(4, 4),
            &FilterConfig::new(FilterKind::Mean),
            None,
        );
        assert!(matches!(res, Err(Error::FilterConfig(_))));
    }

    #[test]
    fn params_validation() {
        let mut p = RenderParams::with_size(0, 4);
        assert!(p.validate().is_err());
        p = RenderParams::default();
        p.step_size = 0.0;
        assert!(p.validate().is_err());
        p = RenderParams::default();
        p.lighting.light_dir = Some([0.0; 3]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn digest_tracks_snapshot() {
        let snap = FrameSnapshot {
            filter: FilterConfig::new(FilterKind::Mean),
            threshold: 101.0,
            params: RenderParams::default(),
            camera: Camera::default_for([8; 3]),
        };
        let mut other = snap.clone();
        assert_eq!(snap.digest(), other.digest());
        other.filter.kind = FilterKind::LocalCluster;
        assert_ne!(snap.digest(), other.digest());
    }
}
