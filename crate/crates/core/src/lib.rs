//! Ray-time spatial noise filtering for first-hit volume rendering of CT data.
//!
//! The crate is organised bottom-up:
//!
//! - [`volume`] holds the voxel grid, raw/PGM ingestion and the zero-extended
//!   sampling used by every kernel.
//! - [`phantom`] generates seeded synthetic test volumes.
//! - [`histogram`] derives the grey-level statistics (Otsu threshold, global
//!   standard deviation, per-level probabilities).
//! - [`filters`] evaluates the six filter kinds at a single voxel, with a
//!   brute-force [`filters::reference`] implementation kept for testing.
//! - [`render`] is the parallel CPU ray caster.
//! - [`metrics`] provides image entropy and the frame-time benchmark harness.

pub mod error;
pub mod filters;
pub mod histogram;
pub mod metrics;
pub mod phantom;
pub mod pgm;
pub mod render;
pub mod volume;

pub use error::{Error, Result};
pub use filters::{FilterConfig, FilterKind, PreparedFilter, VoxelFilter};
pub use histogram::HistogramModel;
pub use render::{Camera, Frame, RenderParams};
pub use volume::{Volume, VolumeMeta};
