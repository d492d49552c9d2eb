use crate::error::{Error, Result};
use crate::geom::{ForegroundMask, RasterImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Pyramid weights, finest level first.
pub const MSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

const C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
const C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

fn gaussian() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" Gaussian filter: output is `(h - 10) x (w - 10)`.
fn filter(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; h * ow];
    crate::par::fill_rows(&mut tmp, ow, |i, row| {
        let line = &src[i * w..(i + 1) * w];
        for (j, o) in row.iter_mut().enumerate() {
            *o = k.iter().zip(&line[j..j + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    });
    let mut out = vec![0.0; oh * ow];
    crate::par::fill_rows(&mut out, ow, |i, row| {
        for (j, o) in row.iter_mut().enumerate() {
            *o = (0..SSIM_WINDOW).map(|t| k[t] * tmp[(i + t) * ow + j]).sum();
        }
    });
    out
}

/// Whether each valid window lies entirely inside the mask.
fn full_windows(mask: &[u8], h: usize, w: usize) -> Vec<bool> {
    let mut integral = vec![0u32; (h + 1) * (w + 1)];
    for i in 0..h {
        let mut row = 0u32;
        for j in 0..w {
            row += u32::from(mask[i * w + j] == 0);
            integral[(i + 1) * (w + 1) + j + 1] = integral[i * (w + 1) + j + 1] + row;
        }
    }
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let at = |i: usize, j: usize| integral[i * (w + 1) + j];
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            let (i1, j1) = (i + SSIM_WINDOW, j + SSIM_WINDOW);
            out.push(at(i1, j1) + at(i, j) == at(i, j1) + at(i1, j));
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure over the counted windows.
fn level_stats(a: &[f64], b: &[f64], h: usize, w: usize, mask: Option<&[u8]>) -> Result<(f64, f64)> {
    let k = gaussian();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = filter(a, h, w, &k);
    let mu_b = filter(b, h, w, &k);
    let aa = filter(&prod(a, a), h, w, &k);
    let bb = filter(&prod(b, b), h, w, &k);
    let ab = filter(&prod(a, b), h, w, &k);
    let keep = mask.map(|m| full_windows(m, h, w));
    let (mut s_sum, mut cs_sum, mut n) = (0.0, 0.0, 0usize);
    for i in 0..mu_a.len() {
        if keep.as_ref().is_some_and(|k| !k[i]) {
            continue;
        }
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let cs = (2.0 * cov + C2) / (va + vb + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        s_sum += l * cs;
        cs_sum += cs;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((s_sum / n as f64, cs_sum / n as f64))
}

fn prepared(a: &RasterImage, b: &RasterImage, mask: Option<&ForegroundMask>, min: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h, w) = (a.height(), a.width());
    if (h, w) != (b.height(), b.width()) {
        return Err(Error::DimensionMismatch(format!("{h}x{w} vs {}x{}", b.height(), b.width())));
    }
    if h < min || w < min {
        return Err(Error::ImageTooSmall { height: h, width: w, min });
    }
    let (mut ga, mut gb) = (a.gray_f64(), b.gray_f64());
    if let Some(m) = mask {
        m.check_dims(h, w)?;
        for ((x, y), &v) in ga.iter_mut().zip(gb.iter_mut()).zip(m.data()) {
            if v == 0 {
                *x = 0.0;
                *y = 0.0;
            }
        }
    }
    Ok((ga, gb))
}

/// Single-scale SSIM (mean over all valid 11x11 windows).
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    let (ga, gb) = prepared(a, b, None, SSIM_WINDOW)?;
    Ok(level_stats(&ga, &gb, a.height(), a.width(), None)?.0)
}

fn downsample(v: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (nh, nw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(nh * nw);
    for i in 0..nh {
        for j in 0..nw {
            let at = |r: usize, c: usize| v[r * w + c];
            out.push(0.25 * (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1)));
        }
    }
    out
}

fn downsample_mask(m: &[u8], h: usize, w: usize) -> Vec<u8> {
    let (nh, nw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(nh * nw);
    for i in 0..nh {
        for j in 0..nw {
            let c = m[2 * i * w + 2 * j] + m[2 * i * w + 2 * j + 1] + m[(2 * i + 1) * w + 2 * j] + m[(2 * i + 1) * w + 2 * j + 1];
            out.push(u8::from(c >= 2));
        }
    }
    out
}

/// Five-level MS-SSIM with the pyramid weights normalized by their sum.
///
/// Levels 1-4 contribute their contrast-structure term, level 5 the full SSIM;
/// negative terms are clamped to zero. With a mask, both images are zeroed
/// outside it, only windows entirely inside it are averaged, and the mask is
/// carried down the pyramid by a half-coverage rule.
pub fn mssim(a: &RasterImage, b: &RasterImage, mask: Option<&ForegroundMask>) -> Result<f64> {
    mssim_weighted(a, b, mask, &MSSIM_WEIGHTS)
}

/// [`mssim`] with one weight per pyramid level.
pub fn mssim_weighted(a: &RasterImage, b: &RasterImage, mask: Option<&ForegroundMask>, weights: &[f64]) -> Result<f64> {
    let levels = weights.len();
    if levels == 0 || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
        return Err(Error::InvalidParameter(format!("bad MS-SSIM weights {weights:?}")));
    }
    let min = SSIM_WINDOW << (levels - 1);
    let (mut ga, mut gb) = prepared(a, b, mask, min)?;
    let mut m: Option<Vec<u8>> = mask.map(|m| m.data().to_vec());
    let (mut h, mut w) = (a.height(), a.width());
    let total: f64 = weights.iter().sum();
    let mut score = 1.0;
    for (level, &weight) in weights.iter().enumerate() {
        let (s, cs) = level_stats(&ga, &gb, h, w, m.as_deref())?;
        let term = if level + 1 == levels { s } else { cs };
        score *= term.max(0.0).powf(weight / total);
        if level + 1 < levels {
            ga = downsample(&ga, h, w);
            gb = downsample(&gb, h, w);
            m = m.map(|mm| downsample_mask(&mm, h, w));
            h /= 2;
            w /= 2;
        }
    }
    Ok(score)
}
