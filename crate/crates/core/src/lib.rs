//! Smoke and dust rejection for LiDAR point clouds.
//!
//! Airborne particulates return sparse, low-intensity points that corrupt
//! mapping and navigation. This crate filters them out of each frame with
//! a staged pipeline while keeping solid structure intact:
//!
//! 1. a range gate drops returns beyond a safety-derived radius and splits
//!    the rest into close and long segments ([`range_gate`]),
//! 2. an intensity gate rejects returns below an adaptive quantile
//!    threshold ([`intensity`]),
//! 3. a scan-line smoother rejects points that sit far off the local
//!    polynomial trend of their ring ([`sg`]),
//! 4. a density screen rejects points whose neighborhoods are too sparse
//!    or too loose for solid surfaces, with a range-proportional
//!    distance threshold ([`doscor`]),
//! 5. a projected radius outlier screen removes whatever thin residue
//!    survives, exploiting the fact that walls collapse to dense curves
//!    under a 2D projection ([`filters`]).
//!
//! [`pipeline`] orchestrates the stages per frame and retunes the split
//! radius and the intensity threshold once per second on timestamped
//! streams. [`eval`] synthesizes labeled scenes and scores rejection sets;
//! [`io`] reads and writes PCD, CSV, label sidecars, and JSON configs.
//!
//! Every stage is usable on its own, takes explicit parameters, and
//! returns index partitions rather than mutating clouds, so pieces can be
//! recombined freely.

pub mod cloud;
pub mod doscor;
pub mod error;
pub mod eval;
pub mod filters;
pub mod intensity;
pub mod io;
pub mod pipeline;
pub mod range_gate;
pub mod sg;
pub mod spatial;

pub use cloud::{Point, PointCloud};
pub use error::{Error, Result};
pub use pipeline::{
    process_frame, run_stream, FilterReport, FrameResult, PipelineConfig, PipelineState,
};
