//! Grey-level statistics of a volume: histogram, Otsu threshold, global
//! standard deviation and per-level probabilities.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::Volume;

pub const LEVELS: usize = 256;

/// Largest voxel count for which [`otsu`] runs in exact integer arithmetic.
pub const EXACT_OTSU_MAX_TOTAL: u64 = 1 << 30;

/// 256-bin histogram of a volume and the statistics derived from it.
#[derive(Clone, Debug)]
pub struct HistogramModel {
    counts: [u64; LEVELS],
    total: u64,
    probabilities: [f64; LEVELS],
    entropy_terms: [f64; LEVELS],
    mean: f64,
    global_sigma: f64,
    otsu_threshold: u8,
}

impl HistogramModel {
    pub fn from_counts(counts: [u64; LEVELS]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyHistogram);
        }
        let n = total as f64;
        let probabilities = counts.map(|c| c as f64 / n);
        let entropy_terms = probabilities.map(|p| if p > 0.0 { -p * p.log2() } else { 0.0 });
        let (mean, global_sigma) = moments(&counts, total);
        Ok(Self {
            counts,
            total,
            probabilities,
            entropy_terms,
            mean,
            global_sigma,
            otsu_threshold: otsu(&counts)?,
        })
    }

    pub fn counts(&self) -> &[u64; LEVELS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Normalized frequency `p_g = counts[g] / total` of each grey level.
    pub fn probabilities(&self) -> &[f64; LEVELS] {
        &self.probabilities
    }

    /// `-p_g * log2(p_g)` per grey level, 0 for empty levels.
    pub fn entropy_terms(&self) -> &[f64; LEVELS] {
        &self.entropy_terms
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation of all voxel intensities.
    pub fn global_sigma(&self) -> f64 {
        self.global_sigma
    }

    pub fn otsu_threshold(&self) -> u8 {
        self.otsu_threshold
    }

    /// Per-class statistics of the split at `threshold` (class 0 is `<= threshold`).
    pub fn split(&self, threshold: u8) -> OtsuSplit {
        OtsuSplit::new(&self.counts, threshold)
    }
}

fn moments(counts: &[u64; LEVELS], total: u64) -> (f64, f64) {
    let n = total as f64;
    let mean = counts
        .iter()
        .enumerate()
        .map(|(g, &c)| g as f64 * c as f64)
        .sum::<f64>()
        / n;
    let var = counts
        .iter()
        .enumerate()
        .map(|(g, &c)| c as f64 * (g as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

pub fn count_levels(volume: &Volume) -> [u64; LEVELS] {
    fn accumulate(chunk: &[u8]) -> [u64; LEVELS] {
        let mut counts = [0u64; LEVELS];
        for &v in chunk {
            counts[v as usize] += 1;
        }
        counts
    }

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        volume
            .data()
            .par_chunks(1 << 20)
            .map(accumulate)
            .reduce(
                || [0u64; LEVELS],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }
    #[cfg(not(feature = "parallel"))]
    {
        accumulate(volume.data())
    }
}

pub fn build_histogram(volume: &Volume) -> Result<HistogramModel> {
    if volume.is_empty() {
        return Err(Error::EmptyVolume);
    }
    HistogramModel::from_counts(count_levels(volume))
}

/// Population standard deviation of the voxel intensities.
pub fn global_stddev(volume: &Volume) -> Result<f64> {
    if volume.is_empty() {
        return Err(Error::EmptyVolume);
    }
    let counts = count_levels(volume);
    Ok(moments(&counts, volume.len() as u64).1)
}

/// `whole + num / den` with `num < den`.
#[derive(Clone, Copy, Debug)]
struct MixedFraction {
    whole: u128,
    num: u128,
    den: u128,
}

impl MixedFraction {
    /// `s0^2 / w0 + s1^2 / w1`, an empty class (`w == 0`) contributing 0.
    fn class_sum(s0: u128, w0: u128, s1: u128, w1: u128) -> Self {
        let split = |s: u128, w: u128| {
            if w == 0 {
                (0, 0, 1)
            } else {
                let sq = s * s;
                (sq / w, sq % w, w)
            }
        };
        let (q0, r0, d0) = split(s0, w0);
        let (q1, r1, d1) = split(s1, w1);
        let den = d0 * d1;
        let num = r0 * d1 + r1 * d0;
        Self {
            whole: q0 + q1 + num / den,
            num: num % den,
            den,
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.whole
            .cmp(&other.whole)
            .then_with(|| (self.num * other.den).cmp(&(other.num * self.den)))
    }
}

/// Otsu threshold: the grey level `T` minimizing the weighted intra-class
/// variance `w0*var0 + w1*var1`, class 0 being levels `<= T`.
///
/// Since the total sum of squares is fixed, this maximizes
/// `S0^2/W0 + S1^2/W1` over the cumulative class counts `W` and level sums
/// `S`. Up to [`EXACT_OTSU_MAX_TOTAL`] voxels the comparison is exact, so
/// ties are real ties and resolve to the smallest `T`; above it the scan
/// falls back to `f64`.
pub fn otsu(counts: &[u64; LEVELS]) -> Result<u8> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let level_sum: u64 = counts.iter().enumerate().map(|(g, &c)| g as u64 * c).sum();

    if total <= EXACT_OTSU_MAX_TOTAL {
        let (mut w0, mut s0) = (0u128, 0u128);
        let (total, level_sum) = (total as u128, level_sum as u128);
        let mut best: Option<(u8, MixedFraction)> = None;
        for (t, &c) in counts.iter().enumerate() {
            w0 += c as u128;
            s0 += t as u128 * c as u128;
            let score = MixedFraction::class_sum(s0, w0, level_sum - s0, total - w0);
            if best.is_none_or(|(_, b)| score.cmp(&b) == Ordering::Greater) {
                best = Some((t as u8, score));
            }
        }
        Ok(best.expect("256 candidates").0)
    } else {
        let (mut w0, mut s0) = (0f64, 0f64);
        let (total, level_sum) = (total as f64, level_sum as f64);
        let term = |s: f64, w: f64| if w > 0.0 { s * s / w } else { 0.0 };
        let mut best = (0u8, f64::NEG_INFINITY);
        for (t, &c) in counts.iter().enumerate() {
            w0 += c as f64;
            s0 += t as f64 * c as f64;
            let score = term(s0, w0) + term(level_sum - s0, total - w0);
            if score > best.1 {
                best = (t as u8, score);
            }
        }
        Ok(best.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassStats {
    /// Inclusive grey-level range of the class.
    pub levels: [u8; 2],
    pub count: u64,
    /// Class probability (`count / total`).
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// The two classes induced by a threshold and their weighted variance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OtsuSplit {
    pub threshold: u8,
    pub intra_class_variance: f64,
    pub between_class_variance: f64,
    pub background: ClassStats,
    pub foreground: ClassStats,
}

impl OtsuSplit {
    pub fn new(counts: &[u64; LEVELS], threshold: u8) -> Self {
        let total: u64 = counts.iter().sum();
        let t = threshold as usize;
        let class = |range: std::ops::RangeInclusive<usize>| {
            let (lo, hi) = (*range.start(), *range.end());
            let count: u64 = counts[range.clone()].iter().sum();
            let (mean, variance) = if count == 0 || lo > hi {
                (0.0, 0.0)
            } else {
                let w = count as f64;
                let mean = range.clone().map(|g| g as f64 * counts[g] as f64).sum::<f64>() / w;
                let var = range
                    .map(|g| counts[g] as f64 * (g as f64 - mean).powi(2))
                    .sum::<f64>()
                    / w;
                (mean, var)
            };
            ClassStats {
                levels: [lo.min(255) as u8, hi.min(255) as u8],
                count,
                weight: if total == 0 { 0.0 } else { count as f64 / total as f64 },
                mean,
                variance,
            }
        };
        let background = class(0..=t);
        let foreground = if t == 255 {
            ClassStats {
                levels: [255, 255],
                count: 0,
                weight: 0.0,
                mean: 0.0,
                variance: 0.0,
            }
        } else {
            class(t + 1..=255)
        };
        Self {
            threshold,
            intra_class_variance: background.weight * background.variance
                + foreground.weight * foreground.variance,
            between_class_variance: background.weight
                * foreground.weight
                * (background.mean - foreground.mean).powi(2),
            background,
            foreground,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_level_volume() {
        let vol = Volume::filled([2, 2, 2], 5).unwrap();
        let h = build_histogram(&vol).unwrap();
        assert_eq!(h.counts()[5], 8);
        assert_eq!(h.total(), 8);
        assert_eq!(h.probabilities()[5], 1.0);
        assert_eq!(h.global_sigma(), 0.0);
    }

    #[test]
    fn two_point_distribution() {
        let vol = Volume::from_fn([4, 2, 2], |x, _, _| if x < 2 { 0 } else { 255 }).unwrap();
        let h = build_histogram(&vol).unwrap();
        assert_eq!(h.probabilities()[0], 0.5);
        assert_eq!(h.probabilities()[255], 0.5);
        assert_eq!(h.global_sigma(), 127.5);
        assert_eq!(global_stddev(&vol).unwrap(), 127.5);
    }

    #[test]
    fn stddev_by_hand() {
        let vol = Volume::new([4, 1, 1], vec![0, 0, 0, 4]).unwrap();
        assert_relative_eq!(global_stddev(&vol).unwrap(), 3f64.sqrt(), epsilon = 1e-12);
        assert_eq!(global_stddev(&Volume::filled([3, 3, 3], 9).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let vol = Volume::from_fn([17, 13, 11], |x, y, z| ((x * 31 + y * 7 + z * 3) % 256) as u8)
            .unwrap();
        let h = build_histogram(&vol).unwrap();
        assert_eq!(h.total(), vol.len() as u64);
        assert!((h.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn otsu_plateau_takes_smallest() {
        let mut counts = [0u64; LEVELS];
        counts[10] = 500;
        counts[200] = 500;
        assert_eq!(otsu(&counts).unwrap(), 10);
    }

    #[test]
    fn otsu_single_bin_is_zero() {
        let mut counts = [0u64; LEVELS];
        counts[77] = 12;
        assert_eq!(otsu(&counts).unwrap(), 0);
    }

    #[test]
    fn otsu_empty_is_error() {
        assert!(matches!(otsu(&[0; LEVELS]), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn float_fallback_agrees_on_large_totals() {
        let mut counts = [0u64; LEVELS];
        for (g, c) in counts.iter_mut().enumerate() {
            let d1 = g as f64 - 40.0;
            let d2 = g as f64 - 180.0;
            *c = (1e7 * ((-d1 * d1 / 300.0).exp() + 0.5 * (-d2 * d2 / 500.0).exp())) as u64;
        }
        let small = otsu(&counts).unwrap();
        let big = otsu(&counts.map(|c| c * 64)).unwrap();
        assert!(counts.iter().sum::<u64>() * 64 > EXACT_OTSU_MAX_TOTAL);
        assert_eq!(small, big);
    }

    #[test]
    fn split_statistics() {
        let mut counts = [0u64; LEVELS];
        counts[10] = 3;
        counts[12] = 1;
        counts[200] = 4;
        let split = OtsuSplit::new(&counts, 100);
        assert_eq!(split.background.count, 4);
        assert_relative_eq!(split.background.mean, 10.5);
        assert_relative_eq!(split.background.variance, 0.75);
        assert_relative_eq!(split.foreground.weight, 0.5);
        assert_relative_eq!(split.intra_class_variance, 0.375);
        let top = OtsuSplit::new(&counts, 255);
        assert_eq!(top.foreground.count, 0);
    }
}
