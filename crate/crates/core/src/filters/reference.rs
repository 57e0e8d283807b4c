//! Brute-force filter oracle.
//!
//! Written as direct nested loops over `Volume::sample`, with per-cluster
//! averages and on-the-fly `p log2 p` terms. Nothing here is shared with
//! the fast path in the parent module; tests and the renderer equivalence
//! checks compare the two.

use super::{FilterConfig, FilterKind, VoxelFilter};
use crate::error::{Error, Result};
use crate::histogram::HistogramModel;
use crate::volume::Volume;

fn offsets(m: usize) -> Vec<i64> {
    let half = (m as i64 - 1) / 2;
    (0..m as i64).map(|i| i - half).collect()
}

fn average_cluster(volume: &Volume, x: i64, y: i64, z: i64, m: usize) -> f64 {
    let mut sum = 0.0;
    for &d in &offsets(m) {
        sum += volume.sample(x + d, y, z) as f64;
    }
    for &d in &offsets(m) {
        sum += volume.sample(x, y + d, z) as f64;
    }
    for &d in &offsets(m) {
        sum += volume.sample(x, y, z + d) as f64;
    }
    sum / (3.0 * m as f64)
}

fn kernel_values(volume: &Volume, x: i64, y: i64, z: i64, m: usize) -> Vec<f64> {
    let mut values = Vec::with_capacity(m * m * m);
    for &i in &offsets(m) {
        for &j in &offsets(m) {
            for &k in &offsets(m) {
                values.push(volume.sample(x + i, y + j, z + k) as f64);
            }
        }
    }
    values
}

/// Brute-force evaluation with the same contract as [`super::apply_filter`].
pub fn reference_filter(
    volume: &Volume,
    x: i64,
    y: i64,
    z: i64,
    config: &FilterConfig,
    histogram: Option<&HistogramModel>,
) -> Result<f64> {
    config.validate()?;
    let m = config.kernel_size;
    let p0 = volume.sample(x, y, z) as f64;
    let need = || {
        histogram.ok_or_else(|| {
            Error::FilterConfig(format!("filter '{}' requires the volume histogram", config.kind))
        })
    };

    let s = match config.kind {
        FilterKind::None => p0,
        FilterKind::Mean => {
            let values = kernel_values(volume, x, y, z, m);
            values.iter().sum::<f64>() / (m * m * m) as f64
        }
        FilterKind::Sigma => {
            let band = config.sigma_mult * need()?.global_sigma();
            let selected: Vec<f64> = kernel_values(volume, x, y, z, m)
                .into_iter()
                .filter(|v| (v - p0).abs() <= band)
                .collect();
            selected.iter().sum::<f64>() / selected.len() as f64
        }
        FilterKind::Okada => {
            let neighbors = [
                volume.sample(x - 1, y, z),
                volume.sample(x + 1, y, z),
                volume.sample(x, y - 1, z),
                volume.sample(x, y + 1, z),
                volume.sample(x, y, z - 1),
                volume.sample(x, y, z + 1),
            ];
            let selected: Vec<f64> = neighbors
                .iter()
                .map(|&v| v as f64)
                .filter(|v| (p0 - v).abs() < config.okada_threshold)
                .collect();
            if selected.is_empty() {
                0.0
            } else {
                selected.iter().sum::<f64>() / selected.len() as f64
            }
        }
        FilterKind::Entropy => {
            let probabilities = need()?.probabilities();
            let mut h = 0.0;
            for &i in &offsets(m) {
                for &j in &offsets(m) {
                    for &k in &offsets(m) {
                        let p = probabilities[volume.sample(x + i, y + j, z + k) as usize];
                        if p > 0.0 {
                            h += -p * p.log2();
                        }
                    }
                }
            }
            if h > config.entropy_threshold {
                p0
            } else {
                0.0
            }
        }
        FilterKind::LocalCluster => {
            let d = config.cluster_offset;
            let mut clusters = vec![average_cluster(volume, x, y, z, m)];
            for sx in [-d, d] {
                for sy in [-d, d] {
                    for sz in [-d, d] {
                        clusters.push(average_cluster(volume, x + sx, y + sy, z + sz, m));
                    }
                }
            }
            clusters.iter().sum::<f64>() / clusters.len() as f64
        }
    };
    Ok(s)
}

/// [`VoxelFilter`] adapter over [`reference_filter`], for rendering with the
/// oracle in place of the fast path.
pub struct ReferenceFilter<'a> {
    config: FilterConfig,
    histogram: Option<&'a HistogramModel>,
}

impl<'a> ReferenceFilter<'a> {
    pub fn new(config: &FilterConfig, histogram: Option<&'a HistogramModel>) -> Result<Self> {
        config.validate()?;
        if config.kind.needs_histogram() && histogram.is_none() {
            return Err(Error::FilterConfig(format!(
                "filter '{}' requires the volume histogram",
                config.kind
            )));
        }
        Ok(Self {
            config: config.clone(),
            histogram,
        })
    }
}

impl VoxelFilter for ReferenceFilter<'_> {
    fn evaluate(&self, volume: &Volume, x: i64, y: i64, z: i64) -> f64 {
        reference_filter(volume, x, y, z, &self.config, self.histogram)
            .expect("configuration validated in ReferenceFilter::new")
    }
}
