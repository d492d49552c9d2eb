//! Evaluation metrics: multi-scale SSIM, flow-based geometric distortion
//! (LD, AD, AAD and their masked forms), edit distance and character error
//! rate, layout-aligned OCR scoring, and the training loss bundle.

mod flow;
mod geometric;
mod layout;
mod loss;
mod ocr;
mod ssim;
mod text;

pub use flow::{estimate_flow, read_flow, write_flow, BlockMatchParams, DenseFlow, DFLO_MAGIC};
pub use geometric::{
    aligned_distortion, axis_aligned_distortion, axis_aligned_distortion_from_gt, local_distortion, transport_point,
};
pub use layout::{BlockLayout, TextBlock};
pub use loss::{loss_bundle, LossComponents, LossWeights};
pub use ocr::{
    conventional_ocr, layout_aligned_ocr, CommandOcr, FnOcr, GlyphOcr, LayoutOcrScore, OcrEngine, RegionAligner,
    REGION_PADDING,
};
pub use ssim::{mssim, mssim_weighted, ssim, MSSIM_WEIGHTS, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use text::{char_error_rate, edit_distance, normalize_text};
