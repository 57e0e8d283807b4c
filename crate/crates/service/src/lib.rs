//! Live steering service: clients adjust camera, filter and threshold over a
//! WebSocket and receive freshly rendered frames.
//!
//! Routes:
//!
//! - `GET /health`: `{status, volume_hash, dims}`
//! - `GET /state`: the most recently changed [`SessionState`]
//! - `GET /stream`: WebSocket, see [`protocol`]
//! - anything else: files from the optional static directory

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{Command, FrameHeader, Reply};
pub use server::{bind, router, serve, AppState, ServiceError};
pub use session::SessionState;
