//! Lossy-compression vs. pedestrian-detection accuracy toolkit.
//!
//! The crate is organized as a pipeline:
//!
//! - [`frameio`]: Y4M / PGM rasters and JSONL box annotations.
//! - [`codec`]: an 8×8 block-DCT intra codec driven by a 0–51 quality knob.
//! - [`metrics`]: MSE, PSNR and the size/duration bandwidth equation.
//! - [`boxes`]: IoU and greedy non-max suppression.
//! - [`detector`]: file-replay and PSNR-conditioned synthetic detectors.
//! - [`eval`]: frame matching, frame accuracy, quality sweeps and threshold search.
//! - [`link`]: discrete-event simulation of a camera to edge uplink.
//! - [`cli`]: the `pedlink` command-line surface.
//! - [`synth`]: seeded synthetic footage with ground truth, for tests and demos.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Results are
//! identical either way.

pub mod boxes;
pub mod cli;
pub mod codec;
pub mod detector;
pub mod error;
pub mod eval;
pub mod exec;
pub mod frameio;
pub mod link;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
