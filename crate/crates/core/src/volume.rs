//! Voxel volume model and raw-file ingestion.
//!
//! Intensities are 8-bit grey levels stored x-fastest: the voxel at
//! `(x, y, z)` lives at `x + nx * (y + ny * z)`. Reads outside the grid
//! return 0 so kernels near the border see an empty background.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Immutable 3D grid of grey values plus voxel spacing.
#[derive(Clone)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<u8>,
    bricks: OnceLock<BrickMap>,
}

impl PartialEq for Volume {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.spacing == other.spacing && self.data == other.data
    }
}

impl std::fmt::Debug for Volume {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Volume")
            .field("dims", &self.dims)
            .field("spacing", &self.spacing)
            .finish_non_exhaustive()
    }
}

impl Volume {
    pub fn new(dims: [usize; 3], data: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!(
                "every dimension must be at least 1, got {dims:?}"
            )));
        }
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidVolume(format!("dimensions {dims:?} overflow")))?;
        if data.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match {}x{}x{} = {expected}",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        // Grid coordinates are handled as i64 during sampling.
        if dims.iter().any(|&d| d > i32::MAX as usize) {
            return Err(Error::InvalidVolume(format!("dimensions {dims:?} too large")));
        }
        Ok(Self {
            dims,
            spacing: [1.0; 3],
            data,
            bricks: OnceLock::new(),
        })
    }

    pub fn filled(dims: [usize; 3], value: u8) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![value; len])
    }

    /// Builds a volume by evaluating `f(x, y, z)` in storage order.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        self.spacing = spacing;
        Ok(self)
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Linear index of an in-bounds voxel.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as u64) < self.dims[0] as u64
            && (y as u64) < self.dims[1] as u64
            && (z as u64) < self.dims[2] as u64
    }

    /// Grey value at integer coordinates; 0 outside the grid.
    #[inline]
    pub fn sample(&self, x: i64, y: i64, z: i64) -> u8 {
        if self.contains(x, y, z) {
            self.data[self.index(x as usize, y as usize, z as usize)]
        } else {
            0
        }
    }

    /// True when the cube of half-width `radius` around `(x, y, z)` lies
    /// entirely inside the grid.
    #[inline]
    pub fn window_inside(&self, x: i64, y: i64, z: i64, radius: i64) -> bool {
        self.contains(x - radius, y - radius, z - radius)
            && self.contains(x + radius, y + radius, z + radius)
    }

    /// Per-brick maxima, computed on first use.
    pub fn bricks(&self) -> &BrickMap {
        self.bricks.get_or_init(|| BrickMap::build(self))
    }

    /// SHA-256 over dimensions and voxel data, hex encoded.
    pub fn identity_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for d in self.dims {
            hasher.update((d as u64).to_le_bytes());
        }
        hasher.update(&self.data);
        hex_string(&hasher.finalize())
    }

    pub fn meta(&self, source: impl Into<String>) -> VolumeMeta {
        VolumeMeta {
            dims: self.dims,
            spacing: self.spacing,
            bit_depth: 8,
            source: source.into(),
        }
    }
}

/// Maximum grey value of every `BRICK`-sized cube of voxels, used by the
/// ray marcher to step over regions that cannot contain a candidate.
#[derive(Clone, Debug)]
pub struct BrickMap {
    dims: [usize; 3],
    max: Vec<u8>,
}

impl BrickMap {
    pub const SHIFT: u32 = 2;
    pub const BRICK: usize = 1 << Self::SHIFT;

    fn build(volume: &Volume) -> Self {
        let [nx, ny, nz] = volume.dims;
        let dims = volume.dims.map(|d| d.div_ceil(Self::BRICK));
        let mut max = vec![0u8; dims.iter().product()];
        let shift = Self::SHIFT;
        for z in 0..nz {
            for y in 0..ny {
                let row = &volume.data[volume.index(0, y, z)..][..nx];
                let base = dims[0] * ((y >> shift) + dims[1] * (z >> shift));
                for (bx, chunk) in row.chunks(Self::BRICK).enumerate() {
                    let m = chunk.iter().copied().max().unwrap_or(0);
                    let slot = &mut max[base + bx];
                    *slot = (*slot).max(m);
                }
            }
        }
        Self { dims, max }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Maximum over the brick holding the in-bounds voxel `(x, y, z)`.
    #[inline]
    pub fn max_at(&self, x: usize, y: usize, z: usize) -> u8 {
        let s = Self::SHIFT;
        self.max[(x >> s) + self.dims[0] * ((y >> s) + self.dims[1] * (z >> s))]
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn default_spacing() -> [f64; 3] {
    [1.0; 3]
}

fn default_bit_depth() -> u8 {
    8
}

/// Sidecar metadata for a headerless raw volume (`<name>.meta.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    #[serde(default = "default_spacing")]
    pub spacing: [f64; 3],
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u8,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
}

impl VolumeMeta {
    pub fn new(dims: [usize; 3], bit_depth: u8) -> Self {
        Self {
            dims,
            spacing: default_spacing(),
            bit_depth,
            source: String::new(),
        }
    }

    fn bytes_per_voxel(&self) -> Result<u64> {
        match self.bit_depth {
            8 => Ok(1),
            16 => Ok(2),
            other => Err(Error::InvalidVolume(format!(
                "bit depth must be 8 or 16, got {other}"
            ))),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("metadata serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Sidecar path for a raw volume: `dir/vol.raw` maps to `dir/vol.meta.json`.
pub fn sidecar_path(raw_path: &Path) -> PathBuf {
    let stem = raw_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    raw_path.with_file_name(format!("{stem}.meta.json"))
}

/// Maps a 16-bit sample to 8 bits as `v * 255 / 65535`, rounded half-up.
#[inline]
pub fn rescale_16_to_8(v: u16) -> u8 {
    ((v as u32 * 255 * 2 + 65535) / (2 * 65535)) as u8
}

/// Loads a headerless little-endian voxel blob described by `meta`.
pub fn load_raw(path: &Path, meta: &VolumeMeta) -> Result<Volume> {
    let bytes_per_voxel = meta.bytes_per_voxel()?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = meta
        .dims
        .iter()
        .try_fold(bytes_per_voxel, |acc, &d| acc.checked_mul(d as u64))
        .ok_or_else(|| Error::InvalidVolume(format!("dimensions {:?} overflow", meta.dims)))?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = match meta.bit_depth {
        8 => bytes,
        _ => bytes
            .chunks_exact(2)
            .map(|c| rescale_16_to_8(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
    };
    Volume::new(meta.dims, data)?.with_spacing(meta.spacing)
}

/// Loads a raw volume together with its `<name>.meta.json` sidecar.
pub fn load_raw_with_sidecar(path: &Path) -> Result<Volume> {
    let meta = VolumeMeta::read(&sidecar_path(path))?;
    load_raw(path, &meta)
}

/// Writes the 8-bit voxel blob and its sidecar; returns the sidecar path.
pub fn save_raw(volume: &Volume, path: &Path, source: &str) -> Result<PathBuf> {
    fs::write(path, volume.data()).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    volume.meta(source).write(&sidecar)?;
    Ok(sidecar)
}
