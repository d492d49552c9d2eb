//! Cascaded backward-mapping document rectification.
//!
//! The crate is organized bottom-up:
//! - [`geom`]: coordinates, grids, transforms, dense maps, images and file formats.
//! - [`warp`]: image warping and map composition.
//! - [`affine_fit`]: global transform fitting and canonical-view normalization.
//! - [`lines`]: line detection, axis-aligned line entropy, line warping and
//!   entropy-based iteration stopping.
//! - [`pipeline`]: the three-stage cascade and its grid predictors.
//! - [`metrics`]: image similarity, geometric distortion and OCR metrics.
//! - [`synth`]: synthetic distorted documents with exact ground truth.
//! - [`config`]: run configuration in `key=value` form.

// `!(x > 0.0)` guards deliberately reject NaN; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod geom;
pub mod par;

pub use error::{Error, Result};
pub mod affine_fit;
pub mod lines;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod warp;
