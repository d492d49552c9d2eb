use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// Row-major image with 1 or 3 interleaved channels, intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Single-channel image filled with `value`.
    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, 1, vec![value.clamp(0.0, 1.0); height * width])
    }

    /// Single-channel image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f32 + Sync + Send) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        let mut data = vec![0.0f32; height * width];
        crate::par::fill_rows(&mut data, width, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j).clamp(0.0, 1.0);
            }
        });
        Self::new(height, width, 1, data)
    }

    pub(crate) fn from_raw_unchecked(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f32 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    /// Luma (Rec. 601) for color images; a clone for grayscale.
    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        Self::from_raw_unchecked(self.height, self.width, 1, data)
    }

    /// Grayscale values widened to f64.
    pub fn gray_f64(&self) -> Vec<f64> {
        self.to_gray().data.iter().map(|&v| v as f64).collect()
    }

    /// Crops rows `top..top+h`, columns `left..left+w` (clipped to the image).
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<RasterImage> {
        let bottom = (top + h).min(self.height);
        let right = (left + w).min(self.width);
        if top >= bottom || left >= right {
            return Err(Error::ZeroSizeOutput);
        }
        let (nh, nw) = (bottom - top, right - left);
        let mut data = Vec::with_capacity(nh * nw * self.channels);
        for i in top..bottom {
            let start = (i * self.width + left) * self.channels;
            data.extend_from_slice(&self.data[start..start + nw * self.channels]);
        }
        Ok(Self::from_raw_unchecked(nh, nw, self.channels, data))
    }

    /// Returns a copy with each masked-out pixel set to zero.
    pub fn masked(&self, mask: &ForegroundMask) -> Result<RasterImage> {
        mask.check_dims(self.height, self.width)?;
        let mut data = self.data.clone();
        for (px, m) in data.chunks_exact_mut(self.channels).zip(mask.data()) {
            if *m == 0 {
                px.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(Self::from_raw_unchecked(self.height, self.width, self.channels, data))
    }

    /// Mean absolute intensity difference over all samples.
    pub fn mean_abs_diff(&self, other: &RasterImage) -> Result<f64> {
        if self.height != other.height || self.width != other.width || self.channels != other.channels {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Reads an 8-bit PNG; grayscale stays single-channel, everything else becomes RGB.
    pub fn load_png(path: impl AsRef<Path>) -> Result<RasterImage> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = match img.color() {
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16 => {
                (1, img.to_luma8().into_raw())
            }
            _ => (3, img.to_rgb8().into_raw()),
        };
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        RasterImage::new(h, w, channels, data)
    }

    /// Writes an 8-bit PNG (values rounded to the nearest level).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let result = if self.channels == 1 {
            let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("sized buffer");
            buf.save(path)
        } else {
            let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("sized buffer");
            buf.save(path)
        };
        result.map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })
    }
}

/// Binary per-pixel foreground mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForegroundMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ForegroundMask {
    /// Any nonzero entry is stored as 1.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        let data = data.into_iter().map(|v| u8::from(v != 0)).collect();
        Ok(Self { height, width, data })
    }

    pub fn full(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![1; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let data = (0..height)
            .flat_map(|i| (0..width).map(move |j| (i, j)))
            .map(|(i, j)| u8::from(f(i, j)))
            .collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.width + j] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub(crate) fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs image {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Bounding box of set pixels as `(top, left, bottom, right)` inclusive.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for i in 0..self.height {
            for j in 0..self.width {
                if self.get(i, j) {
                    out = Some(match out {
                        None => (i, j, i, j),
                        Some((t, l, b, r)) => (t.min(i), l.min(j), b.max(i), r.max(j)),
                    });
                }
            }
        }
        out
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<ForegroundMask> {
        let img = RasterImage::load_png(path)?.to_gray();
        let data = img.data().iter().map(|&v| u8::from(v > 0.0)).collect();
        ForegroundMask::new(img.height(), img.width(), data)
    }

    /// Single-channel PNG, foreground written as 255.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let data = self.data.iter().map(|&v| v as f32).collect();
        RasterImage::from_raw_unchecked(self.height, self.width, 1, data).save_png(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_intensity() {
        assert!(RasterImage::new(1, 2, 1, vec![0.5, 1.5]).is_err());
        assert!(RasterImage::new(1, 2, 2, vec![0.5; 4]).is_err());
    }

    #[test]
    fn png_round_trip_is_exact_on_8bit_levels() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage::from_fn(5, 7, |i, j| ((i * 7 + j) as f32 * 3.0) / 255.0).unwrap();
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(RasterImage::load_png(&p).unwrap(), img);

        let mask = ForegroundMask::from_fn(4, 4, |i, j| i > j).unwrap();
        let mp = dir.path().join("m.png");
        mask.save_png(&mp).unwrap();
        assert_eq!(ForegroundMask::load_png(&mp).unwrap(), mask);
    }

    #[test]
    fn crop_clips_to_bounds() {
        let img = RasterImage::from_fn(4, 4, |i, j| (i * 4 + j) as f32 / 16.0).unwrap();
        let c = img.crop(2, 3, 5, 5).unwrap();
        assert_eq!((c.height(), c.width()), (2, 1));
        assert_eq!(c.get(1, 0, 0), img.get(3, 3, 0));
    }
}
