//! Packetized image link, Monte-Carlo sweeps and the tick-driven session.

pub mod config;
pub mod image;
pub mod link;
pub mod session;
pub mod stats;
pub mod sweep;

pub use config::{ConfigDelta, ConfigError, SessionConfig};
pub use image::{psnr, GrayImage, ImageError};
pub use session::{session_step, Session, TickSnapshot};
pub use stats::wilson_interval;
pub use sweep::{run_sweep, Parallelism, SweepError, SweepRow, SweepSpec, SweepTable};
