//! Statistical tools for single-subject GPS records.
//!
//! A day of GPS data is a sequence of timestamped planar fixes, with time
//! normalized to `[0, 1)`. The crate estimates where the subject spends time
//! (the average GPS density), where they are at a given time of day (the
//! conditional GPS density), and builds on those estimates to find anchor
//! locations, probability-indexed activity spaces and clusters of similar days.
//!
//! Module map:
//!
//! * [`smm`]: the simple movement model simulator and Monte Carlo density oracles.
//! * [`kde`]: kernels, time weights and the naive / time-weighted / conditional estimators.
//! * [`activity`]: level sets, anchor detection, activity spaces and identification bounds.
//! * [`cluster`]: log-density day distances, single linkage and per-cluster dynamics.
//! * [`eval`]: reference bandwidths, MISE and the simulation-study runner.
//! * [`io`]: CSV ingestion, run configuration and exporters.

pub mod activity;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod geom;
pub mod grid;
pub mod io;
pub mod kde;
pub mod rng;
pub mod smm;

pub use data::{Day, GpsDataset};
pub use error::{Error, Result};
pub use geom::Point;
pub use grid::{DensityField, GridSpec};
pub use kde::{Bandwidths, TimeArc, TimeGrid};
