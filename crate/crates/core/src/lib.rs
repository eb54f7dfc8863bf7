//! Mapping GNSS interference sources from UAV horizon scans.
//!
//! A UAV hovers at several vantage points and rotates a directional GNSS
//! antenna through a full turn, recording the relative in-band power at
//! each heading. Each scan is projected onto the local plane through the
//! antenna's standard radiation pattern, the per-scan maps are averaged and
//! thresholded, and the surviving regions are summarized as ellipses.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: local frame, compass bearings, grids.
//! - [`antenna`]: pattern normalization, symmetrization, mixture fit.
//! - [`spectrum`]: periodogram, band power, peaks, harmonic attribution.
//! - [`scanops`]: assembling horizon scans from PSD frames.
//! - [`fusion`]: expectation density per scan, fusion, thresholding.
//! - [`localize`]: regions, ellipse fits, geometry quality.
//! - [`simulator`]: synthetic jammers, scans, IQ and pose jitter.
//! - [`io`]: on-disk formats shared with the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod antenna;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod localize;
pub mod scanops;
pub mod simulator;
pub mod spectrum;

pub use antenna::{RadiationPattern, SrpModel};
pub use fusion::{FusedMap, Heatmap, ProjectionMode};
pub use geometry::{Bearing, GridSpec, LocalPoint};
pub use scanops::HorizonScan;
