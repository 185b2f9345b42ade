//! Adaptive per-window anomaly detection.
//!
//! A pool of classical detectors, an oracle that labels each window with its
//! best detector and parameters, a two-head convolutional classifier that
//! learns that choice, and the tooling around them.

pub mod baseline;
pub mod bench;
pub mod cli;
pub mod data;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod report;
pub mod series;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};
