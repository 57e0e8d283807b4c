//! Wire format of the `/stream` WebSocket.
//!
//! Client to server: one JSON object per text message, tagged by `type`:
//!
//! ```json
//! {"type": "set_camera", "orbit": {"azimuth": 30, "elevation": 20, "distance": 280}}
//! {"type": "set_camera", "pose": {"position": [..], "look_at": [..], "up": [..], "fov_deg": 40}}
//! {"type": "set_filter", "kind": "local-cluster", "kernel_size": 3}
//! {"type": "set_threshold", "value": 101}
//! {"type": "set_threshold", "value": "auto"}
//! {"type": "request_frame", "width": 256, "height": 256}
//! ```
//!
//! Server to client: a JSON [`Reply`] for every command, a JSON
//! [`Reply::FrameInfo`] ahead of every frame, and the frame itself as a
//! binary message of [`HEADER_LEN`] header bytes plus `width * height`
//! grey values, row 0 at the top.

use serde::{Deserialize, Serialize};
use voxfilter_core::filters::{FilterConfig, FilterKind};
use voxfilter_core::render::{Camera, FrameSnapshot, FrameStats, Orbit};

use crate::session::SessionState;

pub const MAGIC: [u8; 4] = *b"VXSF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SetCamera(CameraCommand),
    SetFilter(FilterParams),
    SetThreshold { value: ThresholdValue },
    RequestFrame { width: u16, height: u16 },
}

impl Command {
    pub fn verb(&self) -> &'static str {
        match self {
            Command::SetCamera(_) => "set_camera",
            Command::SetFilter(_) => "set_filter",
            Command::SetThreshold { .. } => "set_threshold",
            Command::RequestFrame { .. } => "request_frame",
        }
    }
}

/// Exactly one of `orbit` or `pose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraCommand {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<Orbit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Camera>,
}

/// Filter selection without the threshold, which has its own command.
/// Omitted parameters take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    pub kind: FilterKind,
    #[serde(default)]
    pub kernel_size: Option<usize>,
    #[serde(default)]
    pub sigma_mult: Option<f64>,
    #[serde(default)]
    pub okada_threshold: Option<f64>,
    #[serde(default)]
    pub entropy_threshold: Option<f64>,
    #[serde(default)]
    pub cluster_offset: Option<i64>,
}

impl FilterParams {
    /// Filter config with these parameters and the given threshold.
    pub fn to_config(&self, threshold: Option<f64>) -> FilterConfig {
        let d = FilterConfig::new(self.kind);
        FilterConfig {
            kind: self.kind,
            kernel_size: self.kernel_size.unwrap_or(d.kernel_size),
            threshold,
            sigma_mult: self.sigma_mult.unwrap_or(d.sigma_mult),
            okada_threshold: self.okada_threshold.unwrap_or(d.okada_threshold),
            entropy_threshold: self.entropy_threshold.unwrap_or(d.entropy_threshold),
            cluster_offset: self.cluster_offset.unwrap_or(d.cluster_offset),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdValue {
    Auto,
    Fixed(f64),
}

impl Serialize for ThresholdValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdValue::Auto => s.serialize_str("auto"),
            ThresholdValue::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ThresholdValue::Fixed(v)),
            Raw::Str(s) if s == "auto" => Ok(ThresholdValue::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "threshold must be a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Ack {
        command: String,
        /// Threshold the next frame will use.
        threshold: f64,
        state: SessionState,
    },
    Error {
        message: String,
        /// Sequence number of the last frame sent; errors never change it.
        sequence: u64,
    },
    FrameInfo {
        sequence: u64,
        config_digest: String,
        snapshot: FrameSnapshot,
        stats: FrameStats,
        render_ms: f64,
    },
}

/// Fixed-size little-endian header in front of every binary frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameHeader {
    pub version: u8,
    pub sequence: u64,
    pub width: u16,
    pub height: u16,
    pub render_ms: f32,
    pub config_digest: [u8; 8],
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DecodeError {
    #[error("frame shorter than the {HEADER_LEN}-byte header ({0} bytes)")]
    Truncated(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("payload of {actual} bytes does not match {width}x{height}")]
    PayloadSize { width: u16, height: u16, actual: usize },
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = self.version;
        b[8..16].copy_from_slice(&self.sequence.to_le_bytes());
        b[16..18].copy_from_slice(&self.width.to_le_bytes());
        b[18..20].copy_from_slice(&self.height.to_le_bytes());
        b[20..24].copy_from_slice(&self.render_ms.to_le_bytes());
        b[24..32].copy_from_slice(&self.config_digest);
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() < HEADER_LEN {
            return Err(DecodeError::Truncated(bytes.len()));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(DecodeError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(DecodeError::Version(bytes[4]));
        }
        Ok(Self {
            version: bytes[4],
            sequence: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            width: u16::from_le_bytes(bytes[16..18].try_into().unwrap()),
            height: u16::from_le_bytes(bytes[18..20].try_into().unwrap()),
            render_ms: f32::from_le_bytes(bytes[20..24].try_into().unwrap()),
            config_digest: bytes[24..32].try_into().unwrap(),
        })
    }
}

/// Header plus pixels as sent on the wire.
pub fn encode_frame(header: &FrameHeader, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + pixels.len());
    out.extend_from_slice(&header.encode());
    out.extend_from_slice(pixels);
    out
}

/// Splits a binary message into header and pixels, checking the size.
pub fn decode_frame(bytes: &[u8]) -> Result<(FrameHeader, &[u8]), DecodeError> {
    let header = FrameHeader::decode(bytes)?;
    let pixels = &bytes[HEADER_LEN..];
    if pixels.len() != header.width as usize * header.height as usize {
        return Err(DecodeError::PayloadSize {
            width: header.width,
            height: header.height,
            actual: pixels.len(),
        });
    }
    Ok((header, pixels))
}
