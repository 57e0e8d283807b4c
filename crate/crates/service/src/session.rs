//! Per-connection steering state and command handling.

use serde::{Deserialize, Serialize};
use voxfilter_core::filters::{FilterConfig, FilterKind};
use voxfilter_core::render::{Camera, FrameSnapshot, RenderParams};
use voxfilter_core::{HistogramModel, Volume};

use crate::protocol::{CameraCommand, Command, ThresholdValue};

/// Largest frame edge a client may request.
pub const MAX_FRAME_EDGE: u16 = 4096;
pub const DEFAULT_FRAME_EDGE: u32 = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRef {
    pub hash: String,
    pub dims: [usize; 3],
}

/// Everything a session renders from. `filter.threshold == None` means the
/// Otsu threshold is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub camera: Camera,
    pub filter: FilterConfig,
    pub params: RenderParams,
    pub volume: VolumeRef,
    /// Sequence number of the last frame sent, 0 before the first.
    pub sequence: u64,
}

impl SessionState {
    pub fn initial(volume: &Volume) -> Self {
        Self {
            camera: Camera::default_for(volume.dims()),
            filter: FilterConfig::new(FilterKind::LocalCluster),
            params: RenderParams::with_size(DEFAULT_FRAME_EDGE, DEFAULT_FRAME_EDGE),
            volume: VolumeRef {
                hash: volume.identity_hash(),
                dims: volume.dims(),
            },
            sequence: 0,
        }
    }

    pub fn threshold(&self, histogram: &HistogramModel) -> f64 {
        self.filter
            .resolve_threshold(Some(histogram))
            .expect("histogram supplied")
    }

    /// Snapshot a frame rendered now would carry.
    pub fn snapshot(&self, histogram: &HistogramModel) -> FrameSnapshot {
        FrameSnapshot {
            filter: self.filter.clone(),
            threshold: self.threshold(histogram),
            params: self.params.clone(),
            camera: self.camera.clone(),
        }
    }
}

/// Applies a command. On error the state is left untouched.
pub fn apply_command(state: &mut SessionState, command: &Command) -> Result<(), String> {
    let mut next = state.clone();
    match command {
        Command::SetCamera(CameraCommand { orbit, pose }) => {
            next.camera = match (orbit, pose) {
                (Some(o), None) => {
                    if !(o.distance.is_finite() && o.distance > 0.0)
                        || !o.azimuth.is_finite()
                        || !o.elevation.is_finite()
                    {
                        return Err(format!("invalid orbit {o:?}"));
                    }
                    Camera::orbit(state.volume.dims, *o)
                }
                (None, Some(p)) => p.clone(),
                _ => return Err("set_camera needs exactly one of \"orbit\" or \"pose\"".into()),
            };
            next.camera.basis().map_err(|e| e.to_string())?;
        }
        Command::SetFilter(params) => {
            next.filter = params.to_config(state.filter.threshold);
            next.filter.validate().map_err(|e| e.to_string())?;
        }
        Command::SetThreshold { value } => {
            next.filter.threshold = match *value {
                ThresholdValue::Auto => None,
                ThresholdValue::Fixed(t) => Some(t),
            };
            next.filter.validate().map_err(|e| e.to_string())?;
        }
        Command::RequestFrame { width, height } => {
            for (name, v) in [("width", *width), ("height", *height)] {
                if v == 0 || v > MAX_FRAME_EDGE {
                    return Err(format!("{name} must be in [1, {MAX_FRAME_EDGE}], got {v}"));
                }
            }
            next.params.width = *width as u32;
            next.params.height = *height as u32;
        }
    }
    *state = next;
    Ok(())
}
