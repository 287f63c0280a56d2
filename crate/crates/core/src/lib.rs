//! Wi-Fi RSSI fingerprint positioning.
//!
//! The offline side ingests a site survey into a dual-indexed
//! [`RadioMap`](radiomap::RadioMap) and pre-computes eight summary
//! fingerprints per grid point ([`stats::precompute`]). The online side
//! locates a scan by the nearest fingerprint in RSSI space
//! ([`locator::locate`]). [`analysis`] evaluates batches of labeled scans and
//! [`synth`] generates surveys from a log-distance path-loss model.

pub mod analysis;
pub mod baseline;
pub mod cli;
pub mod error;
pub mod fsutil;
pub mod locator;
pub mod queries;
pub mod radiomap;
pub mod stats;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use locator::{locate, locate_all, ApFilter, PositionEstimate, QueryVector};
pub use radiomap::{build_radio_map, check_consistency, ApId, GridPoint, GridSpec, RadioMap};
pub use stats::{precompute, StatTable, Technique};
