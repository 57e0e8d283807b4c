//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page drives three operations: generate a phantom, render it with a
//! chosen filter and orbit, and compare image entropy across all filters.
//! [`DemoState`] holds the logic so it can be tested natively; [`Demo`] is
//! the thin `wasm_bindgen` wrapper around it.

use serde::Serialize;
use voxfilter_core::histogram::build_histogram;
use voxfilter_core::metrics::{image_entropy, run_entropy_comparison};
use voxfilter_core::phantom::{generate_phantom, presets};
use voxfilter_core::render::{render_frame, Orbit};
use voxfilter_core::{Camera, FilterConfig, FilterKind, HistogramModel, RenderParams, Volume};
use wasm_bindgen::prelude::*;

/// Largest phantom edge the page may request; 160^3 is about 4 MB.
pub const MAX_SIZE: usize = 160;
pub const MAX_IMAGE: u32 = 1024;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenderSummary {
    pub filter: FilterKind,
    pub threshold: f64,
    pub entropy_bits: f64,
    pub hit_pixels: u64,
    pub rejected_candidates: u64,
    pub render_ms: f64,
    pub config_digest: String,
}

/// Volume plus histogram, and the most recent frame as RGBA.
pub struct DemoState {
    volume: Volume,
    histogram: HistogramModel,
    rgba: Vec<u8>,
    last: Option<RenderSummary>,
}

fn view(volume: &Volume, azimuth: f64, elevation: f64, width: u32, height: u32) -> Result<(Camera, RenderParams), String> {
    if !(1..=MAX_IMAGE).contains(&width) || !(1..=MAX_IMAGE).contains(&height) {
        return Err(format!("image size must be within 1..={MAX_IMAGE}, got {width}x{height}"));
    }
    let mut orbit = Orbit::default_for(volume.dims());
    orbit.azimuth = azimuth;
    orbit.elevation = elevation;
    Ok((Camera::orbit(volume.dims(), orbit), RenderParams::with_size(width, height)))
}

impl DemoState {
    pub fn new(preset: &str, size: usize) -> Result<Self, String> {
        if !(8..=MAX_SIZE).contains(&size) {
            return Err(format!("size must be within 8..={MAX_SIZE}, got {size}"));
        }
        let spec = match preset {
            "spot" => presets::spot_phantom(size),
            "noisy" => presets::noisy_phantom(size),
            other => return Err(format!("unknown preset '{other}', expected spot or noisy")),
        };
        let volume = generate_phantom(&spec).map_err(|e| e.to_string())?;
        let histogram = build_histogram(&volume).map_err(|e| e.to_string())?;
        Ok(Self { volume, histogram, rgba: Vec::new(), last: None })
    }

    pub fn volume(&self) -> &Volume {
        &self.volume
    }

    pub fn otsu_threshold(&self) -> u8 {
        self.histogram.otsu_threshold()
    }

    /// Renders into the internal RGBA buffer. A negative or non-finite
    /// `threshold` means Otsu.
    pub fn render(
        &mut self,
        filter: &str,
        threshold: f64,
        azimuth: f64,
        elevation: f64,
        width: u32,
        height: u32,
    ) -> Result<&RenderSummary, String> {
        let kind: FilterKind = filter.parse().map_err(|e: voxfilter_core::filters::UnknownFilter| e.to_string())?;
        let (camera, params) = view(&self.volume, azimuth, elevation, width, height)?;
        let mut config = FilterConfig::new(kind);
        if threshold.is_finite() && threshold >= 0.0 {
            config = config.with_threshold(threshold);
        }
        let frame = render_frame(&self.volume, &camera, &params, &config, Some(&self.histogram))
            .map_err(|e| e.to_string())?;
        self.rgba.clear();
        self.rgba.extend(frame.pixels.iter().flat_map(|&g| [g, g, g, 255]));
        self.last = Some(RenderSummary {
            filter: kind,
            threshold: frame.snapshot.threshold,
            entropy_bits: image_entropy(&frame.pixels),
            hit_pixels: frame.stats.hit_pixels,
            rejected_candidates: frame.stats.rejected_candidates,
            render_ms: frame.timing.total_ms,
            config_digest: frame.snapshot.digest_hex(),
        });
        Ok(self.last.as_ref().expect("just set"))
    }

    pub fn rgba(&self) -> &[u8] {
        &self.rgba
    }

    /// Entropy of one frame per filter kind at the Otsu threshold, as JSON.
    pub fn compare(&self, azimuth: f64, elevation: f64, width: u32, height: u32) -> Result<String, String> {
        let (camera, params) = view(&self.volume, azimuth, elevation, width, height)?;
        let filters: Vec<_> = FilterKind::ALL.iter().map(|&k| FilterConfig::new(k)).collect();
        let (report, _) = run_entropy_comparison(&self.volume, &self.histogram, &camera, &params, &filters)
            .map_err(|e| e.to_string())?;
        serde_json::to_string(&report).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    /// Generates a `size`^3 phantom from the `spot` or `noisy` preset.
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, size: usize) -> Result<Demo, JsError> {
        DemoState::new(preset, size).map(|state| Demo { state }).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(getter)]
    pub fn otsu(&self) -> u8 {
        self.state.otsu_threshold()
    }

    #[wasm_bindgen(getter)]
    pub fn volume_hash(&self) -> String {
        self.state.volume().identity_hash()
    }

    /// Renders a frame and returns its summary as JSON; pixels via `pixels()`.
    pub fn render(
        &mut self,
        filter: &str,
        threshold: f64,
        azimuth: f64,
        elevation: f64,
        width: u32,
        height: u32,
    ) -> Result<String, JsError> {
        let summary = self
            .state
            .render(filter, threshold, azimuth, elevation, width, height)
            .map_err(|e| JsError::new(&e))?;
        serde_json::to_string(summary).map_err(|e| JsError::new(&e.to_string()))
    }

    /// RGBA bytes of the last frame, ready for `ImageData`.
    pub fn pixels(&self) -> Vec<u8> {
        self.state.rgba().to_vec()
    }

    pub fn compare(&self, azimuth: f64, elevation: f64, width: u32, height: u32) -> Result<String, JsError> {
        self.state.compare(azimuth, elevation, width, height).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_fills_rgba() {
        let mut demo = DemoState::new("noisy", 24).unwrap();
        let otsu = demo.otsu_threshold() as f64;
        let summary = demo.render("local-cluster", -1.0, 35.0, 25.0, 40, 30).unwrap().clone();
        assert_eq!(summary.threshold, otsu);
        assert!(summary.hit_pixels > 0);
        let rgba = demo.rgba();
        assert_eq!(rgba.len(), 40 * 30 * 4);
        assert!(rgba.chunks(4).all(|p| p[0] == p[1] && p[1] == p[2] && p[3] == 255));

        let explicit = demo.render("mean", 120.0, 35.0, 25.0, 40, 30).unwrap();
        assert_eq!(explicit.threshold, 120.0);
        assert_eq!(explicit.filter, FilterKind::Mean);
    }

    #[test]
    fn rgba_matches_core_render() {
        let mut demo = DemoState::new("spot", 32).unwrap();
        demo.render("okada", f64::NAN, 10.0, 20.0, 16, 16).unwrap();
        let vol = generate_phantom(&presets::spot_phantom(32)).unwrap();
        let hist = build_histogram(&vol).unwrap();
        let (cam, params) = view(&vol, 10.0, 20.0, 16, 16).unwrap();
        let frame = render_frame(&vol, &cam, &params, &FilterConfig::new(FilterKind::Okada), Some(&hist)).unwrap();
        let grey: Vec<u8> = demo.rgba().chunks(4).map(|p| p[0]).collect();
        assert_eq!(grey, frame.pixels);
    }

    #[test]
    fn compare_lists_every_filter() {
        let demo = DemoState::new("noisy", 24).unwrap();
        let json: serde_json::Value = serde_json::from_str(&demo.compare(35.0, 25.0, 32, 32).unwrap()).unwrap();
        let names: Vec<&str> = json["entries"].as_array().unwrap().iter().map(|e| e["filter"].as_str().unwrap()).collect();
        assert_eq!(names, FilterKind::ALL.map(FilterKind::name));
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(DemoState::new("cube", 32).is_err());
        assert!(DemoState::new("spot", 4).is_err());
        assert!(DemoState::new("spot", MAX_SIZE + 1).is_err());
        let mut demo = DemoState::new("spot", 16).unwrap();
        assert!(demo.render("median", 0.0, 0.0, 0.0, 8, 8).unwrap_err().contains("median"));
        assert!(demo.render("mean", 0.0, 0.0, 0.0, 0, 8).is_err());
        assert!(demo.compare(0.0, 0.0, 8, MAX_IMAGE + 1).is_err());
    }
}
