mod support;

use proptest::prelude::*;
use voxfilter_core::filters::{FilterConfig, FilterKind};
use voxfilter_core::histogram::build_histogram;
use voxfilter_core::metrics::{image_entropy, run_entropy_comparison, run_timing_benchmark, TimingStats};
use voxfilter_core::phantom::{generate_phantom, presets};
use voxfilter_core::render::{Camera, RenderParams};
use voxfilter_core::Volume;

proptest! {
    #[test]
    fn entropy_matches_naive_count(pixels in prop::collection::vec(any::<u8>(), 1..2000)) {
        prop_assert!((image_entropy(&pixels) - support::naive_entropy(&pixels)).abs() < 1e-12);
    }

    #[test]
    fn entropy_ignores_pixel_order(pixels in prop::collection::vec(0u8..16, 1..500).prop_shuffle()) {
        let mut sorted = pixels.clone();
        sorted.sort_unstable();
        prop_assert_eq!(image_entropy(&pixels), image_entropy(&sorted));
    }
}

#[test]
fn empty_volume_gives_zero_entropy_for_every_filter() {
    let vol = Volume::filled([16; 3], 0).unwrap();
    let hist = build_histogram(&vol).unwrap();
    let filters: Vec<_> = FilterKind::ALL.iter().map(|&k| FilterConfig::new(k)).collect();
    let (report, frames) = run_entropy_comparison(
        &vol,
        &hist,
        &Camera::default_for(vol.dims()),
        &RenderParams::with_size(24, 24),
        &filters,
    )
    .unwrap();
    assert_eq!(frames.len(), 6);
    assert!(report.entries.iter().all(|e| e.entropy_bits == 0.0 && e.hit_pixels == 0));
}

#[test]
fn single_filter_report() {
    let vol = generate_phantom(&presets::noisy_phantom(24)).unwrap();
    let hist = build_histogram(&vol).unwrap();
    let (report, _) = run_entropy_comparison(
        &vol,
        &hist,
        &Camera::default_for(vol.dims()),
        &RenderParams::with_size(32, 32),
        &[FilterConfig::new(FilterKind::LocalCluster)],
    )
    .unwrap();
    assert_eq!(report.entries.len(), 1);
    assert_eq!(report.volume_hash, vol.identity_hash());
    assert_eq!(report.entries[0].threshold, hist.otsu_threshold() as f64);
}

#[test]
fn timing_statistics_recompute_from_samples() {
    let vol = generate_phantom(&presets::noisy_phantom(24)).unwrap();
    let hist = build_histogram(&vol).unwrap();
    let filters = [FilterConfig::new(FilterKind::Mean), FilterConfig::new(FilterKind::Okada)];
    let report = run_timing_benchmark(
        &vol,
        &hist,
        &Camera::default_for(vol.dims()),
        &RenderParams::with_size(32, 32),
        &filters,
        5,
        1,
    )
    .unwrap();
    assert_eq!(report.entries.len(), 2);
    for e in &report.entries {
        assert_eq!(e.samples_ms.len(), 5);
        assert!(e.samples_ms.iter().all(|&t| t >= 0.0));
        assert_eq!(TimingStats::from_samples(&e.samples_ms).unwrap(), e.stats);
    }
    let json = serde_json::to_value(&report).unwrap();
    assert!(json["entries"][0]["median_ms"].is_number());
}
