//! Velocity estimation and de-skewing for slow planar LiDARs using only the
//! range stream.
//!
//! The sensor velocity `(v, w)` is found by registering a sweep onto itself:
//! the beams are de-skewed under a candidate velocity, chopped into planar
//! patches, associated across time and the plane-to-plane inconsistency is
//! minimized with a Huber-robust Gauss-Newton solver.

pub mod association;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod motion_model;
pub mod render;
pub mod scan_pipeline;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
