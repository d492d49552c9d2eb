//! Synthetic distorted documents with exact ground truth.
//!
//! A flat page is rendered from a 5x7 bitmap font, then pushed through a
//! forward map `crop ∘ fine ∘ smooth ∘ page`. The distorted view is rendered by
//! inverting that map per pixel, and the ground-truth backward map stores the
//! forward map evaluated on the flat frame.

pub mod font;
mod distortion;
mod page;
mod suite;

pub use distortion::{
    distort, limit_smooth, smooth_lipschitz, true_flow, Background, Boundary, Distortion, DistortionSpec, Ripple,
    SmoothMode, SyntheticSample, INJECTIVITY_PROBE, MAX_MODES_PER_AXIS, MAX_RIPPLE_AMPLITUDE, MAX_SMOOTH_AMPLITUDE,
    MAX_SMOOTH_LIPSCHITZ, MIN_RIPPLE_WAVELENGTH, NEWTON_MAX_ITERATIONS, NEWTON_TOLERANCE, PLAIN_BACKGROUND,
};
pub use page::{render_page, render_page_with, PageStyle, RULE_GRAY};
pub use suite::{
    load_sample, make_sample, make_suite, manifest_text, random_spec, read_manifest, sample_id, sample_seed,
    write_sample, write_suite, Difficulty, MANIFEST_NAME, SAMPLE_FILES,
};
