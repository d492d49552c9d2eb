//! Coordinate types, control grids, dense backward maps and raster images.
//!
//! Conventions used throughout the crate:
//! - `x` runs along the width axis, `y` along the height axis.
//! - Normalized coordinates are corner-aligned: pixel centers `0` and
//!   `size - 1` sit exactly at `-1` and `+1`.
//! - Lattices are stored row-major, `i` over rows (height), `j` over columns.

pub(crate) mod format;
mod raster;
mod transform;

use std::ops::{Add, Mul, Sub};

pub use format::{read_grid, read_map, write_grid, write_map, DMAP_HEADER_LEN, DMAP_MAGIC};
pub use raster::{ForegroundMask, RasterImage};
pub use transform::{AffineTransform2D, GlobalTransform, Homography2D, DET_EPS};

use crate::error::{Error, Result};

/// Point in the normalized square `[-1, 1]^2` (or outside it, for unclamped grids).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormCoord {
    pub x: f64,
    pub y: f64,
}

impl NormCoord {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn clamped(self) -> Self {
        Self::new(self.x.clamp(-1.0, 1.0), self.y.clamp(-1.0, 1.0))
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for NormCoord {
    type Output = NormCoord;
    #[inline]
    fn add(self, o: NormCoord) -> NormCoord {
        NormCoord::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for NormCoord {
    type Output = NormCoord;
    #[inline]
    fn sub(self, o: NormCoord) -> NormCoord {
        NormCoord::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for NormCoord {
    type Output = NormCoord;
    #[inline]
    fn mul(self, s: f64) -> NormCoord {
        NormCoord::new(self.x * s, self.y * s)
    }
}

/// Maps a pixel-center coordinate to `[-1, 1]` with the corner-aligned convention.
#[inline]
pub fn pixel_to_norm(px: f64, size: usize) -> f64 {
    debug_assert!(size >= 2);
    if size < 2 {
        return 0.0;
    }
    -1.0 + 2.0 * px / (size - 1) as f64
}

/// Inverse of [`pixel_to_norm`].
#[inline]
pub fn norm_to_pixel(v: f64, size: usize) -> f64 {
    if size < 2 {
        return 0.0;
    }
    (v + 1.0) * (size - 1) as f64 * 0.5
}

/// Pixel position used by the samplers: values within 1e-9 of an integer are
/// snapped onto it so that identity fields sample exactly.
#[inline]
pub(crate) fn sample_position(v: f64, size: usize) -> f64 {
    let p = norm_to_pixel(v, size);
    let r = p.round();
    if (p - r).abs() < 1e-9 {
        r
    } else {
        p
    }
}

/// Lower lattice index and fractional offset of position `p` on an axis of
/// `size` samples, with `p` clamped onto the axis.
#[inline]
pub(crate) fn cell(p: f64, size: usize) -> (usize, f64) {
    if size < 2 {
        return (0, 0.0);
    }
    let p = p.clamp(0.0, (size - 1) as f64);
    let i0 = (p.floor() as usize).min(size - 2);
    (i0, p - i0 as f64)
}

/// Bilinear sample of a row-major coordinate lattice at normalized `at`.
/// `at` is clamped to the lattice domain first.
#[inline]
pub(crate) fn sample_coords(coords: &[NormCoord], rows: usize, cols: usize, at: NormCoord) -> NormCoord {
    let at = at.clamped();
    let (j0, fx) = cell(sample_position(at.x, cols), cols);
    let (i0, fy) = cell(sample_position(at.y, rows), rows);
    let idx = i0 * cols + j0;
    let p00 = coords[idx];
    if fx == 0.0 && fy == 0.0 {
        return p00;
    }
    let p01 = if cols > 1 { coords[idx + 1] } else { p00 };
    let p10 = if rows > 1 { coords[idx + cols] } else { p00 };
    let p11 = if cols > 1 && rows > 1 { coords[idx + cols + 1] } else { p00 };
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w01 = fx * (1.0 - fy);
    let w10 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    NormCoord::new(
        p00.x * w00 + p01.x * w01 + p10.x * w10 + p11.x * w11,
        p00.y * w00 + p01.y * w01 + p10.y * w10 + p11.y * w11,
    )
}

/// Sparse `rows x cols` control grid of normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    rows: usize,
    cols: usize,
    points: Vec<NormCoord>,
}

impl Grid2D {
    pub const DEFAULT_ROWS: usize = 45;
    pub const DEFAULT_COLS: usize = 31;

    pub fn new(rows: usize, cols: usize, points: Vec<NormCoord>) -> Result<Self> {
        check_lattice("grid rows", rows)?;
        check_lattice("grid cols", cols)?;
        if points.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "grid {rows}x{cols} needs {} points, got {}",
                rows * cols,
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self { rows, cols, points })
    }

    /// Uniformly spaced grid spanning `[-1, 1]^2` with corners exactly at `(±1, ±1)`.
    pub fn canonical(rows: usize, cols: usize) -> Result<Self> {
        check_lattice("grid rows", rows)?;
        check_lattice("grid cols", cols)?;
        let points = (0..rows)
            .flat_map(|i| {
                (0..cols).map(move |j| {
                    NormCoord::new(pixel_to_norm(j as f64, cols), pixel_to_norm(i as f64, rows))
                })
            })
            .collect();
        Ok(Self { rows, cols, points })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn points(&self) -> &[NormCoord] {
        &self.points
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> NormCoord {
        self.points[i * self.cols + j]
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Applies `f` to every control point.
    pub fn map_points(&self, f: impl Fn(NormCoord) -> NormCoord) -> Result<Grid2D> {
        Grid2D::new(self.rows, self.cols, self.points.iter().map(|&p| f(p)).collect())
    }

    /// Bilinear interpolation of the control grid at normalized `at` (clamped).
    pub fn sample(&self, at: NormCoord) -> NormCoord {
        sample_coords(&self.points, self.rows, self.cols, at)
    }

    /// Dense `height x width` field by bilinear interpolation of the control points.
    pub fn densify(&self, height: usize, width: usize) -> Result<BackwardMap> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        let mut coords = vec![NormCoord::default(); height * width];
        crate::par::fill_rows(&mut coords, width, |i, row| {
            let v = lattice_norm(i, height);
            for (j, out) in row.iter_mut().enumerate() {
                *out = self.sample(NormCoord::new(lattice_norm(j, width), v));
            }
        });
        BackwardMap::new(height, width, coords)
    }
}

/// Normalized coordinate of lattice index `i` on an axis of `n` samples; a
/// single-sample axis sits at the center.
#[inline]
fn lattice_norm(i: usize, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        pixel_to_norm(i as f64, n)
    }
}

fn check_lattice(what: &'static str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { what, min: 2, got: n });
    }
    Ok(())
}

/// Dense per-output-pixel field of source normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardMap {
    height: usize,
    width: usize,
    coords: Vec<NormCoord>,
}

impl BackwardMap {
    pub fn new(height: usize, width: usize, coords: Vec<NormCoord>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        if coords.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "map {height}x{width} needs {} coordinates, got {}",
                height * width,
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self {
            height,
            width,
            coords,
        })
    }

    pub fn identity(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        let coords = (0..height)
            .flat_map(|i| {
                (0..width)
                    .map(move |j| NormCoord::new(lattice_norm(j, width), lattice_norm(i, height)))
            })
            .collect();
        Ok(Self {
            height,
            width,
            coords,
        })
    }

    /// True when every coordinate equals its own lattice position bit for bit.
    pub fn is_identity(&self) -> bool {
        self.coords.iter().enumerate().all(|(k, p)| {
            let (i, j) = (k / self.width, k % self.width);
            *p == NormCoord::new(lattice_norm(j, self.width), lattice_norm(i, self.height))
        })
    }

    /// Builds a map by evaluating `f` at every output pixel's normalized position.
    pub fn from_fn(
        height: usize,
        width: usize,
        f: impl Fn(NormCoord) -> NormCoord + Sync + Send,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        let mut coords = vec![NormCoord::default(); height * width];
        crate::par::fill_rows(&mut coords, width, |i, row| {
            let v = lattice_norm(i, height);
            for (j, out) in row.iter_mut().enumerate() {
                *out = f(NormCoord::new(lattice_norm(j, width), v));
            }
        });
        BackwardMap::new(height, width, coords)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coords(&self) -> &[NormCoord] {
        &self.coords
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> NormCoord {
        self.coords[i * self.width + j]
    }

    /// Normalized position of output pixel `(i, j)` in this map's own frame.
    #[inline]
    pub fn output_position(&self, i: usize, j: usize) -> NormCoord {
        NormCoord::new(lattice_norm(j, self.width), lattice_norm(i, self.height))
    }

    /// Bilinear sample of the field at normalized `at`, clamped to `[-1, 1]^2`.
    pub fn sample(&self, at: NormCoord) -> NormCoord {
        sample_coords(&self.coords, self.height, self.width, at)
    }

    /// Mean Euclidean distance between two same-shaped maps.
    pub fn mean_distance(&self, other: &BackwardMap) -> Result<f64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let sum: f64 = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (*a - *b).norm())
            .sum();
        Ok(sum / self.coords.len() as f64)
    }

    /// Largest Euclidean distance between two same-shaped maps.
    pub fn max_distance(&self, other: &BackwardMap) -> Result<f64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max))
    }
}
