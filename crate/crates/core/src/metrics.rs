//! Image-entropy quality metric and frame-time benchmarking.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterKind};
use crate::histogram::{HistogramModel, LEVELS};
use crate::render::{render_frame, Camera, Frame, RenderParams};
use crate::volume::Volume;

/// Shannon entropy in bits of the 256-bin grey-level histogram of `pixels`.
/// Lower values mean fewer distinct grey levels in use, i.e. less residual
/// noise in a rendered frame.
pub fn image_entropy(pixels: &[u8]) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let mut counts = [0u64; LEVELS];
    for &p in pixels {
        counts[p as usize] += 1;
    }
    let n = pixels.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.log2()
        })
        .sum();
    // a single occupied bin evaluates to -0.0
    h.max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyEntry {
    pub filter: FilterKind,
    pub config: FilterConfig,
    pub threshold: f64,
    pub entropy_bits: f64,
    pub hit_pixels: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyReport {
    pub volume_hash: String,
    pub width: u32,
    pub height: u32,
    pub entries: Vec<EntropyEntry>,
}

impl EntropyReport {
    pub fn entropy_of(&self, kind: FilterKind) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.filter == kind)
            .map(|e| e.entropy_bits)
    }
}

/// Renders one frame per filter with identical camera and parameters and
/// records each frame's image entropy. Frames are returned in list order.
pub fn run_entropy_comparison(
    volume: &Volume,
    histogram: &HistogramModel,
    camera: &Camera,
    params: &RenderParams,
    filters: &[FilterConfig],
) -> Result<(EntropyReport, Vec<Frame>)> {
    if filters.is_empty() {
        return Err(Error::InvalidArgument(
            "entropy comparison needs at least one filter".into(),
        ));
    }
    let mut entries = Vec::with_capacity(filters.len());
    let mut frames = Vec::with_capacity(filters.len());
    for config in filters {
        let frame = render_frame(volume, camera, params, config, Some(histogram))?;
        entries.push(EntropyEntry {
            filter: config.kind,
            config: config.clone(),
            threshold: frame.snapshot.threshold,
            entropy_bits: image_entropy(&frame.pixels),
            hit_pixels: frame.stats.hit_pixels,
        });
        frames.push(frame);
    }
    let report = EntropyReport {
        volume_hash: volume.identity_hash(),
        width: params.width,
        height: params.height,
        entries,
    };
    Ok((report, frames))
}

/// Summary statistics of a set of frame times, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    /// Population standard deviation.
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Some(Self {
            mean_ms: mean,
            median_ms: median,
            std_ms: var.sqrt(),
            min_ms: sorted[0],
            max_ms: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingEntry {
    pub filter: FilterKind,
    pub config: FilterConfig,
    #[serde(flatten)]
    pub stats: TimingStats,
    /// Raw per-frame wall-clock times, warmup excluded.
    pub samples_ms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingReport {
    pub volume_hash: String,
    pub width: u32,
    pub height: u32,
    pub warmup: u32,
    pub samples: u32,
    pub machine: String,
    pub entries: Vec<TimingEntry>,
}

impl TimingReport {
    pub fn entry(&self, kind: FilterKind) -> Option<&TimingEntry> {
        self.entries.iter().find(|e| e.filter == kind)
    }
}

/// Short description of the host: OS, architecture and worker threads.
pub fn machine_descriptor() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    #[cfg(feature = "parallel")]
    let workers = rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    let workers = 1;
    format!(
        "{}-{} ({threads} hardware threads, {workers} render workers)",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Times whole-frame renders per filter: `warmup` discarded renders, then
/// `samples` timed ones. Filters are benchmarked in list order.
pub fn run_timing_benchmark(
    volume: &Volume,
    histogram: &HistogramModel,
    camera: &Camera,
    params: &RenderParams,
    filters: &[FilterConfig],
    samples: u32,
    warmup: u32,
) -> Result<TimingReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one sample".into()));
    }
    let mut entries = Vec::with_capacity(filters.len());
    for config in filters {
        for _ in 0..warmup {
            render_frame(volume, camera, params, config, Some(histogram))?;
        }
        let samples_ms = (0..samples)
            .map(|_| {
                render_frame(volume, camera, params, config, Some(histogram))
                    .map(|f| f.timing.total_ms)
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push(TimingEntry {
            filter: config.kind,
            config: config.clone(),
            stats: TimingStats::from_samples(&samples_ms).expect("samples >= 1"),
            samples_ms,
        });
    }
    Ok(TimingReport {
        volume_hash: volume.identity_hash(),
        width: params.width,
        height: params.height,
        warmup,
        samples,
        machine: machine_descriptor(),
        entries,
    })
}

/// Aligned plain-text table joining entropy and timing rows by filter.
pub fn comparison_table(entropy: Option<&EntropyReport>, timing: Option<&TimingReport>) -> String {
    let mut kinds: Vec<FilterKind> = Vec::new();
    let entropy_entries = entropy.map_or(&[][..], |r| &r.entries[..]);
    let timing_entries = timing.map_or(&[][..], |r| &r.entries[..]);
    for kind in entropy_entries
        .iter()
        .map(|e| e.filter)
        .chain(timing_entries.iter().map(|e| e.filter))
    {
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>10} {:>12} {:>11} {:>11} {:>9}",
        "filter", "entropy", "hit_pixels", "mean_ms", "median_ms", "std_ms"
    );
    for kind in kinds {
        let e = entropy_entries.iter().find(|e| e.filter == kind);
        let t = timing_entries.iter().find(|e| e.filter == kind);
        let num = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
        let _ = writeln!(
            out,
            "{:<14} {:>10} {:>12} {:>11} {:>11} {:>9}",
            kind.name(),
            num(e.map(|e| e.entropy_bits), 4),
            e.map_or("-".to_string(), |e| e.hit_pixels.to_string()),
            num(t.map(|t| t.stats.mean_ms), 2),
            num(t.map(|t| t.stats.median_ms), 2),
            num(t.map(|t| t.stats.std_ms), 2),
        );
    }
    out
}

/// CSV with one row per filter: `filter,entropy_bits,hit_pixels,mean_ms,median_ms,std_ms`.
pub fn comparison_csv(entropy: Option<&EntropyReport>, timing: Option<&TimingReport>) -> String {
    let table = comparison_table(entropy, timing);
    let mut out = String::from("filter,entropy_bits,hit_pixels,mean_ms,median_ms,std_ms\n");
    for line in table.lines().skip(1) {
        let fields: Vec<&str> = line
            .split_whitespace()
            .map(|f| if f == "-" { "" } else { f })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
