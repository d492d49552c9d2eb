//! Backward warping of images and composition of backward maps.
//!
//! Image sampling is bilinear with a constant fill outside the source; field
//! sampling (map composition) clamps lookups to the border instead.

use crate::error::{Error, Result};
use crate::geom::{
    cell, sample_position, AffineTransform2D, BackwardMap, ForegroundMask, GlobalTransform,
    NormCoord, RasterImage,
};
use crate::par;

/// Out-of-bounds policy for image sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleOptions {
    /// Per-channel value for samples outside the source (only the first
    /// `channels` entries are used).
    pub fill: [f32; 3],
    pub emit_oob_mask: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            fill: [0.0; 3],
            emit_oob_mask: false,
        }
    }
}

impl SampleOptions {
    pub fn with_fill(value: f32) -> Self {
        Self {
            fill: [value; 3],
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.fill.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidParameter(format!("fill {:?} outside [0, 1]", self.fill)));
        }
        Ok(())
    }
}

/// A warped image plus, on request, the mask of pixels that sampled outside the source.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpOutput {
    pub image: RasterImage,
    /// 1 where the sample fell outside the source image.
    pub oob_mask: Option<ForegroundMask>,
}

/// Bilinearly samples `img` at normalized `at` into `out`. Returns `false` (and
/// writes `fill`) when `at` lies outside the source.
#[inline]
pub(crate) fn sample_image(img: &RasterImage, at: NormCoord, fill: &[f32; 3], out: &mut [f32]) -> bool {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let px = sample_position(at.x, w);
    let py = sample_position(at.y, h);
    let inside = |p: f64, n: usize, v: f64| {
        if n < 2 {
            v.abs() <= 1.0
        } else {
            p >= 0.0 && p <= (n - 1) as f64
        }
    };
    if !(inside(px, w, at.x) && inside(py, h, at.y)) {
        out.copy_from_slice(&fill[..c]);
        return false;
    }
    let (j0, fx) = cell(px, w);
    let (i0, fy) = cell(py, h);
    let data = img.data();
    let base = (i0 * w + j0) * c;
    if fx == 0.0 && fy == 0.0 {
        out.copy_from_slice(&data[base..base + c]);
        return true;
    }
    let dx = if w > 1 { c } else { 0 };
    let dy = if h > 1 { w * c } else { 0 };
    let w00 = ((1.0 - fx) * (1.0 - fy)) as f32;
    let w01 = (fx * (1.0 - fy)) as f32;
    let w10 = ((1.0 - fx) * fy) as f32;
    let w11 = (fx * fy) as f32;
    for (k, o) in out.iter_mut().enumerate() {
        let v = data[base + k] * w00
            + data[base + dx + k] * w01
            + data[base + dy + k] * w10
            + data[base + dy + dx + k] * w11;
        *o = v.clamp(0.0, 1.0);
    }
    true
}

/// Renders an `out_h x out_w` image where each output pixel samples `img` at `lookup(p)`.
fn warp_with(
    img: &RasterImage,
    out_h: usize,
    out_w: usize,
    opts: &SampleOptions,
    lookup: impl Fn(usize, usize) -> NormCoord + Sync + Send,
) -> Result<WarpOutput> {
    opts.validate()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::ZeroSizeOutput);
    }
    let c = img.channels();
    let mut data = vec![0.0f32; out_h * out_w * c];
    let mut oob = vec![0u8; if opts.emit_oob_mask { out_h * out_w } else { 0 }];
    if opts.emit_oob_mask {
        let mut rows: Vec<(&mut [f32], &mut [u8])> = data.chunks_mut(out_w * c).zip(oob.chunks_mut(out_w)).collect();
        let render = |i: usize, (row, mask): &mut (&mut [f32], &mut [u8])| {
            for j in 0..out_w {
                let ok = sample_image(img, lookup(i, j), &opts.fill, &mut row[j * c..(j + 1) * c]);
                mask[j] = u8::from(!ok);
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            rows.par_iter_mut().enumerate().for_each(|(i, r)| render(i, r));
        }
        #[cfg(not(feature = "parallel"))]
        rows.iter_mut().enumerate().for_each(|(i, r)| render(i, r));
    } else {
        par::fill_rows(&mut data, out_w * c, |i, row| {
            for j in 0..out_w {
                sample_image(img, lookup(i, j), &opts.fill, &mut row[j * c..(j + 1) * c]);
            }
        });
    }
    let image = RasterImage::from_raw_unchecked(out_h, out_w, c, data);
    let oob_mask = if opts.emit_oob_mask {
        Some(ForegroundMask::new(out_h, out_w, oob)?)
    } else {
        None
    };
    Ok(WarpOutput { image, oob_mask })
}

/// Affine warp: `a` maps source normalized coordinates to output normalized
/// coordinates, so each output pixel samples the source at `a⁻¹(p)`.
pub fn warp_affine(
    img: &RasterImage,
    a: &AffineTransform2D,
    out_h: usize,
    out_w: usize,
    opts: &SampleOptions,
) -> Result<WarpOutput> {
    warp_transform(img, &GlobalTransform::Affine(*a), out_h, out_w, opts)
}

/// [`warp_affine`] for either transform family.
pub fn warp_transform(
    img: &RasterImage,
    t: &GlobalTransform,
    out_h: usize,
    out_w: usize,
    opts: &SampleOptions,
) -> Result<WarpOutput> {
    let inv = t.inverse()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::ZeroSizeOutput);
    }
    let frame = BackwardMap::identity(out_h, out_w)?;
    warp_with(img, out_h, out_w, opts, |i, j| inv.apply(frame.at(i, j)))
}

/// Samples `img` through a dense backward map; output takes the map's size.
pub fn warp_by_map(img: &RasterImage, map: &BackwardMap, opts: &SampleOptions) -> Result<WarpOutput> {
    warp_with(img, map.height(), map.width(), opts, |i, j| map.at(i, j))
}

/// Corner-aligned bilinear resize.
pub fn resize(img: &RasterImage, out_h: usize, out_w: usize) -> Result<RasterImage> {
    if out_h == img.height() && out_w == img.width() {
        return Ok(img.clone());
    }
    let id = BackwardMap::identity(out_h, out_w)?;
    Ok(warp_by_map(img, &id, &SampleOptions::default())?.image)
}

/// Applies `a_inv` pointwise to every coordinate of `field`, with no resampling.
pub fn compose_affine_into_map(field: &BackwardMap, a_inv: &AffineTransform2D) -> Result<BackwardMap> {
    compose_transform_into_map(field, &GlobalTransform::Affine(*a_inv))
}

/// [`compose_affine_into_map`] for either transform family.
pub fn compose_transform_into_map(field: &BackwardMap, t_inv: &GlobalTransform) -> Result<BackwardMap> {
    // The composed map is only meaningful when the stage-1 transform it undoes exists.
    t_inv.inverse()?;
    let coords: Vec<NormCoord> = par::map_indices(field.coords().len(), |k| t_inv.apply(field.coords()[k]));
    BackwardMap::new(field.height(), field.width(), coords)
}

/// Chains backward maps: `result[p] = prev(next[p])`, a bilinear lookup into
/// the two-channel field `prev` with `next[p]` clamped to `[-1, 1]^2`.
///
/// An identity `prev` returns the clamped `next` directly, which is what the
/// lookup computes up to rounding.
pub fn compose_maps(prev: &BackwardMap, next: &BackwardMap) -> Result<BackwardMap> {
    if prev.is_identity() {
        let coords = next.coords().iter().map(|p| p.clamped()).collect();
        return BackwardMap::new(next.height(), next.width(), coords);
    }
    let coords: Vec<NormCoord> = par::map_indices(next.coords().len(), |k| prev.sample(next.coords()[k]));
    BackwardMap::new(next.height(), next.width(), coords)
}

pub fn invert_affine(a: &AffineTransform2D) -> Result<AffineTransform2D> {
    a.inverse()
}
