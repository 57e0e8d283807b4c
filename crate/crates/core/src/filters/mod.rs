//! Spatially variant noise filters evaluated at a single candidate voxel.
//!
//! Every filter reads the immutable volume with zero extension at the
//! border and returns a real-valued intensity; the renderer compares that
//! value against the data threshold. Kernels use the symmetric offsets
//! `-(M-1)/2 ..= (M-1)/2` around the center.
//!
//! The free functions are the per-filter operations. [`PreparedFilter`]
//! validates a [`FilterConfig`] once, captures the histogram-derived inputs
//! and dispatches per voxel; [`reference`] holds the brute-force oracle.

pub mod reference;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{HistogramModel, LEVELS};
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    #[default]
    None,
    Mean,
    Sigma,
    Okada,
    Entropy,
    LocalCluster,
}

impl FilterKind {
    pub const ALL: [FilterKind; 6] = [
        FilterKind::None,
        FilterKind::Mean,
        FilterKind::Sigma,
        FilterKind::Okada,
        FilterKind::Entropy,
        FilterKind::LocalCluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Mean => "mean",
            FilterKind::Sigma => "sigma",
            FilterKind::Okada => "okada",
            FilterKind::Entropy => "entropy",
            FilterKind::LocalCluster => "local-cluster",
        }
    }

    /// Whether the filter reads histogram-derived inputs.
    pub fn needs_histogram(self) -> bool {
        matches!(self, FilterKind::Sigma | FilterKind::Entropy)
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownFilter(pub String);

impl fmt::Display for UnknownFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown filter '{}' (valid: {})",
            self.0,
            FilterKind::valid_names()
        )
    }
}

impl std::error::Error for UnknownFilter {}

impl FromStr for FilterKind {
    type Err = UnknownFilter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownFilter(s.to_string()))
    }
}

/// Filter selection and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// Odd kernel edge length `M >= 3`.
    pub kernel_size: usize,
    /// Data threshold `T`; `None` selects the Otsu threshold.
    pub threshold: Option<f64>,
    /// Sigma filter band half-width in units of the global standard deviation.
    pub sigma_mult: f64,
    /// Okada difference threshold `T_d` in grey levels.
    pub okada_threshold: f64,
    /// Entropy criterion threshold `T_e` in bits. Negative values always pass.
    pub entropy_threshold: f64,
    /// Per-axis offset of the eight diagonal clusters (1 = sqrt(3) voxels).
    pub cluster_offset: i64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kind: FilterKind::None,
            kernel_size: 3,
            threshold: None,
            sigma_mult: 2.0,
            okada_threshold: 25.0,
            entropy_threshold: 2.0,
            cluster_offset: 1,
        }
    }
}

impl FilterConfig {
    pub fn new(kind: FilterKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::FilterConfig(msg));
        let m = self.kernel_size;
        if m < 3 || m.is_multiple_of(2) || m > 63 {
            return err(format!("kernel_size must be odd and in [3, 63], got {m}"));
        }
        if let Some(t) = self.threshold {
            if !(t.is_finite() && t >= 0.0) {
                return err(format!("threshold must be finite and >= 0, got {t}"));
            }
        }
        if !(self.sigma_mult.is_finite() && self.sigma_mult >= 0.0) {
            return err(format!("sigma_mult must be finite and >= 0, got {}", self.sigma_mult));
        }
        if !(self.okada_threshold.is_finite() && self.okada_threshold >= 0.0) {
            return err(format!(
                "okada_threshold must be finite and >= 0, got {}",
                self.okada_threshold
            ));
        }
        if !self.entropy_threshold.is_finite() {
            return err(format!(
                "entropy_threshold must be finite, got {}",
                self.entropy_threshold
            ));
        }
        if !(1..=64).contains(&self.cluster_offset) {
            return err(format!(
                "cluster_offset must be in [1, 64], got {}",
                self.cluster_offset
            ));
        }
        Ok(())
    }

    /// Explicit threshold, or the Otsu threshold of `histogram`.
    pub fn resolve_threshold(&self, histogram: Option<&HistogramModel>) -> Result<f64> {
        match (self.threshold, histogram) {
            (Some(t), _) => Ok(t),
            (None, Some(h)) => Ok(h.otsu_threshold() as f64),
            (None, None) => Err(Error::FilterConfig(
                "automatic (Otsu) threshold requires a histogram".into(),
            )),
        }
    }

    #[inline]
    fn radius(&self) -> i64 {
        (self.kernel_size as i64 - 1) / 2
    }
}

/// A filter that can be evaluated at a voxel; implemented by the fast
/// [`PreparedFilter`] and the brute-force [`reference::ReferenceFilter`].
pub trait VoxelFilter: Sync {
    fn evaluate(&self, volume: &Volume, x: i64, y: i64, z: i64) -> f64;
}

// Kernel traversal. Interior windows index the flat buffer directly; windows
// touching the border go through `Volume::sample` and its zero extension.

#[inline(always)]
fn for_each_in_cube(volume: &Volume, x: i64, y: i64, z: i64, r: i64, mut f: impl FnMut(u8)) {
    if volume.window_inside(x, y, z, r) {
        let [nx, ny, _] = volume.dims();
        let data = volume.data();
        let (sy, sz) = (nx, nx * ny);
        let (x, y, z, r) = (x as usize, y as usize, z as usize, r as usize);
        for zz in z - r..=z + r {
            for yy in y - r..=y + r {
                let row = zz * sz + yy * sy;
                for &v in &data[row + x - r..=row + x + r] {
                    f(v);
                }
            }
        }
    } else {
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    f(volume.sample(x + dx, y + dy, z + dz));
                }
            }
        }
    }
}

/// Sum of the three axis-aligned arms of length `2r + 1` through the voxel
/// (the center is visited once per axis).
#[inline(always)]
fn axis_arm_sum(volume: &Volume, x: i64, y: i64, z: i64, r: i64) -> u32 {
    if volume.window_inside(x, y, z, r) {
        let [nx, ny, _] = volume.dims();
        let data = volume.data();
        let (sy, sz) = (nx, nx * ny);
        let center = volume.index(x as usize, y as usize, z as usize);
        let r = r as usize;
        let mut sum = data[center - r..=center + r]
            .iter()
            .map(|&v| v as u32)
            .sum::<u32>();
        for i in 0..=2 * r {
            sum += data[center + i * sy - r * sy] as u32;
            sum += data[center + i * sz - r * sz] as u32;
        }
        sum
    } else {
        (-r..=r)
            .map(|d| {
                volume.sample(x + d, y, z) as u32
                    + volume.sample(x, y + d, z) as u32
                    + volume.sample(x, y, z + d) as u32
            })
            .sum()
    }
}

const FACE_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

const DIAGONALS: [[i64; 3]; 8] = [
    [-1, -1, -1],
    [1, -1, -1],
    [-1, 1, -1],
    [1, 1, -1],
    [-1, -1, 1],
    [1, -1, 1],
    [-1, 1, 1],
    [1, 1, 1],
];

/// Average cluster: mean of the `3M` samples on the three axis arms through
/// the voxel, the center counted once per axis.
pub fn axis_cluster_average(volume: &Volume, x: i64, y: i64, z: i64, m: usize) -> f64 {
    let r = (m as i64 - 1) / 2;
    axis_arm_sum(volume, x, y, z, r) as f64 / (3 * m) as f64
}

/// Mean of nine average clusters: the one at the voxel and eight more at
/// `(x ± d, y ± d, z ± d)`.
pub fn local_cluster_filter(volume: &Volume, x: i64, y: i64, z: i64, m: usize, offset: i64) -> f64 {
    let r = (m as i64 - 1) / 2;
    let mut total = axis_arm_sum(volume, x, y, z, r);
    for [dx, dy, dz] in DIAGONALS {
        total += axis_arm_sum(volume, x + dx * offset, y + dy * offset, z + dz * offset, r);
    }
    // nine clusters of 3M samples each, averaged equally
    total as f64 / (27 * m) as f64
}

/// Box mean over the `M^3` kernel.
pub fn mean_filter(volume: &Volume, x: i64, y: i64, z: i64, m: usize) -> f64 {
    let r = (m as i64 - 1) / 2;
    let mut sum = 0u32;
    for_each_in_cube(volume, x, y, z, r, |v| sum += v as u32);
    sum as f64 / (m * m * m) as f64
}

/// Mean of the kernel voxels within `sigma_mult * global_sigma` of the
/// center value. The center always qualifies.
pub fn sigma_filter(
    volume: &Volume,
    x: i64,
    y: i64,
    z: i64,
    m: usize,
    sigma_mult: f64,
    global_sigma: f64,
) -> f64 {
    sigma_band_mean(volume, x, y, z, (m as i64 - 1) / 2, sigma_mult * global_sigma)
}

#[inline(always)]
fn sigma_band_mean(volume: &Volume, x: i64, y: i64, z: i64, r: i64, band: f64) -> f64 {
    let center = volume.sample(x, y, z) as f64;
    let (mut sum, mut n) = (0u32, 0u32);
    for_each_in_cube(volume, x, y, z, r, |v| {
        if (v as f64 - center).abs() <= band {
            sum += v as u32;
            n += 1;
        }
    });
    sum as f64 / n as f64
}

/// Mean of the face-adjacent neighbors differing from the center by less
/// than `t_d`; 0 when none qualifies. The center is not part of the mean.
pub fn okada_filter(volume: &Volume, x: i64, y: i64, z: i64, t_d: f64) -> f64 {
    let center = volume.sample(x, y, z) as f64;
    let (mut sum, mut n) = (0u32, 0u32);
    for [dx, dy, dz] in FACE_OFFSETS {
        let v = volume.sample(x + dx, y + dy, z + dz);
        if (center - v as f64).abs() < t_d {
            sum += v as u32;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Keeps the center value when the summed `-p log2 p` of the kernel voxels'
/// global grey-level probabilities exceeds `t_e`, else returns 0.
pub fn entropy_filter(
    volume: &Volume,
    x: i64,
    y: i64,
    z: i64,
    m: usize,
    t_e: f64,
    probabilities: &[f64; LEVELS],
) -> f64 {
    let r = (m as i64 - 1) / 2;
    let mut h = 0.0;
    for_each_in_cube(volume, x, y, z, r, |v| {
        let p = probabilities[v as usize];
        if p > 0.0 {
            h -= p * p.log2();
        }
    });
    if h > t_e {
        volume.sample(x, y, z) as f64
    } else {
        0.0
    }
}

#[inline(always)]
fn entropy_from_terms(
    volume: &Volume,
    x: i64,
    y: i64,
    z: i64,
    r: i64,
    t_e: f64,
    terms: &[f64; LEVELS],
) -> f64 {
    let mut h = 0.0;
    for_each_in_cube(volume, x, y, z, r, |v| h += terms[v as usize]);
    if h > t_e {
        volume.sample(x, y, z) as f64
    } else {
        0.0
    }
}

/// A validated filter with its histogram-derived inputs captured.
#[derive(Clone, Debug)]
pub struct PreparedFilter {
    config: FilterConfig,
    radius: i64,
    sigma_band: f64,
    entropy_terms: Option<Box<[f64; LEVELS]>>,
}

impl PreparedFilter {
    pub fn new(config: &FilterConfig, histogram: Option<&HistogramModel>) -> Result<Self> {
        config.validate()?;
        if config.kind.needs_histogram() && histogram.is_none() {
            return Err(Error::FilterConfig(format!(
                "filter '{}' requires the volume histogram",
                config.kind
            )));
        }
        let sigma_band = match (config.kind, histogram) {
            (FilterKind::Sigma, Some(h)) => config.sigma_mult * h.global_sigma(),
            _ => 0.0,
        };
        let entropy_terms = match (config.kind, histogram) {
            (FilterKind::Entropy, Some(h)) => Some(Box::new(*h.entropy_terms())),
            _ => None,
        };
        Ok(Self {
            config: config.clone(),
            radius: config.radius(),
            sigma_band,
            entropy_terms,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn kind(&self) -> FilterKind {
        self.config.kind
    }
}

impl VoxelFilter for PreparedFilter {
    #[inline]
    fn evaluate(&self, volume: &Volume, x: i64, y: i64, z: i64) -> f64 {
        let m = self.config.kernel_size;
        match self.config.kind {
            FilterKind::None => volume.sample(x, y, z) as f64,
            FilterKind::Mean => mean_filter(volume, x, y, z, m),
            FilterKind::Sigma => sigma_band_mean(volume, x, y, z, self.radius, self.sigma_band),
            FilterKind::Okada => okada_filter(volume, x, y, z, self.config.okada_threshold),
            FilterKind::Entropy => {
                let terms = self.entropy_terms.as_deref().expect("checked in new");
                entropy_from_terms(volume, x, y, z, self.radius, self.config.entropy_threshold, terms)
            }
            FilterKind::LocalCluster => {
                local_cluster_filter(volume, x, y, z, m, self.config.cluster_offset)
            }
        }
    }
}

/// Evaluates the configured filter at one voxel.
pub fn apply_filter(
    volume: &Volume,
    x: i64,
    y: i64,
    z: i64,
    config: &FilterConfig,
    histogram: Option<&HistogramModel>,
) -> Result<f64> {
    Ok(PreparedFilter::new(config, histogram)?.evaluate(volume, x, y, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::build_histogram;
    use approx::assert_relative_eq;

    fn spike(n: usize, value: u8) -> Volume {
        let c = n / 2;
        Volume::from_fn([n; 3], |x, y, z| if (x, y, z) == (c, c, c) { value } else { 0 }).unwrap()
    }

    #[test]
    fn axis_cluster_examples() {
        let v = 90u8;
        let constant = Volume::filled([5; 3], v).unwrap();
        assert_eq!(axis_cluster_average(&constant, 2, 2, 2, 3), v as f64);

        let hole = Volume::from_fn([5; 3], |x, y, z| if (x, y, z) == (2, 2, 2) { 0 } else { v })
            .unwrap();
        assert_relative_eq!(axis_cluster_average(&hole, 2, 2, 2, 3), 2.0 * v as f64 / 3.0);

        assert_relative_eq!(axis_cluster_average(&spike(5, v), 2, 2, 2, 3), v as f64 / 3.0);
    }

    #[test]
    fn local_cluster_spike() {
        let vol = spike(9, 255);
        assert_relative_eq!(local_cluster_filter(&vol, 4, 4, 4, 3, 1), 255.0 / 27.0);
        let constant = Volume::filled([9; 3], 131).unwrap();
        assert_eq!(local_cluster_filter(&constant, 4, 4, 4, 3, 1), 131.0);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_filter(&spike(5, 27), 2, 2, 2, 3), 1.0);
        let constant = Volume::filled([4; 3], 81).unwrap();
        assert_eq!(mean_filter(&constant, 1, 1, 1, 3), 81.0);
        // corner: 8 of 27 samples inside
        assert_relative_eq!(mean_filter(&constant, 0, 0, 0, 3), 8.0 * 81.0 / 27.0);
    }

    #[test]
    fn sigma_examples() {
        let vol = Volume::from_fn([3; 3], |x, y, z| if (x, y, z) == (1, 1, 1) { 200 } else { 10 })
            .unwrap();
        assert_eq!(sigma_filter(&vol, 1, 1, 1, 3, 2.0, 5.0), 200.0);
        assert_eq!(sigma_filter(&vol, 1, 1, 1, 3, 2.0, 0.0), 200.0);
        // a band wide enough for everything is the box mean
        assert_relative_eq!(
            sigma_filter(&vol, 1, 1, 1, 3, 2.0, 100.0),
            (26.0 * 10.0 + 200.0) / 27.0
        );
    }

    #[test]
    fn okada_examples() {
        let neighbors = [98u8, 99, 250, 250, 250, 250];
        let mut data = vec![0u8; 27];
        let idx = |x: usize, y: usize, z: usize| x + 3 * (y + 3 * z);
        data[idx(1, 1, 1)] = 100;
        for ([dx, dy, dz], v) in FACE_OFFSETS.iter().zip(neighbors) {
            data[idx((1 + dx) as usize, (1 + dy) as usize, (1 + dz) as usize)] = v;
        }
        let vol = Volume::new([3; 3], data).unwrap();
        assert_eq!(okada_filter(&vol, 1, 1, 1, 5.0), 98.5);

        let far = Volume::from_fn([3; 3], |x, y, z| if (x, y, z) == (1, 1, 1) { 100 } else { 250 })
            .unwrap();
        assert_eq!(okada_filter(&far, 1, 1, 1, 5.0), 0.0);
        let constant = Volume::filled([3; 3], 40).unwrap();
        assert_eq!(okada_filter(&constant, 1, 1, 1, 1.0), 40.0);
    }

    #[test]
    fn entropy_examples() {
        let constant = Volume::filled([3; 3], 60).unwrap();
        let h = build_histogram(&constant).unwrap();
        assert_eq!(entropy_filter(&constant, 1, 1, 1, 3, 0.5, h.probabilities()), 0.0);
        assert_eq!(entropy_filter(&constant, 1, 1, 1, 3, -1.0, h.probabilities()), 60.0);

        // two equally likely levels: each voxel contributes 0.5 bit
        let checker =
            Volume::from_fn([4; 3], |x, y, z| if (x + y + z) % 2 == 0 { 10 } else { 20 }).unwrap();
        let h = build_histogram(&checker).unwrap();
        assert_eq!(h.probabilities()[10], 0.5);
        let p0 = checker.sample(1, 1, 1) as f64;
        assert_eq!(entropy_filter(&checker, 1, 1, 1, 3, 2.0, h.probabilities()), p0);
        assert_eq!(entropy_filter(&checker, 1, 1, 1, 3, 13.5, h.probabilities()), 0.0);
        assert_eq!(entropy_filter(&checker, 1, 1, 1, 3, 13.49, h.probabilities()), p0);
    }

    #[test]
    fn dispatch_and_missing_histogram() {
        let vol = Volume::filled([3; 3], 77).unwrap();
        let none = FilterConfig::new(FilterKind::None);
        assert_eq!(apply_filter(&vol, 1, 1, 1, &none, None).unwrap(), 77.0);
        let mean = FilterConfig::new(FilterKind::Mean);
        assert_eq!(apply_filter(&vol, 1, 1, 1, &mean, None).unwrap(), 77.0);
        for kind in [FilterKind::Sigma, FilterKind::Entropy] {
            assert!(matches!(
                apply_filter(&vol, 1, 1, 1, &FilterConfig::new(kind), None),
                Err(Error::FilterConfig(_))
            ));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = FilterConfig::new(FilterKind::Mean);
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        c.kernel_size = 1;
        assert!(c.validate().is_err());
        c = FilterConfig::new(FilterKind::Okada);
        c.okada_threshold = -1.0;
        assert!(c.validate().is_err());
        c = FilterConfig::new(FilterKind::Entropy);
        c.entropy_threshold = -1.0;
        assert!(c.validate().is_ok());
        c.threshold = Some(f64::NAN);
        assert!(c.validate().is_err());
    }

    #[test]
    fn kind_names_roundtrip() {
        for kind in FilterKind::ALL {
            assert_eq!(kind.name().parse::<FilterKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
        }
        let err = "nosuch".parse::<FilterKind>().unwrap_err().to_string();
        assert!(err.contains("none, mean, sigma, okada, entropy, local-cluster"), "{err}");
    }

    #[test]
    fn config_json_defaults() {
        let c: FilterConfig = serde_json::from_str(r#"{"kind":"local-cluster"}"#).unwrap();
        assert_eq!(c, FilterConfig::new(FilterKind::LocalCluster));
        assert!(serde_json::from_str::<FilterConfig>(r#"{"kind":"mean","bogus":1}"#).is_err());
    }
}
