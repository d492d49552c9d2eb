use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::format::{decode_field, encode_field, read_bytes, write_bytes};
use crate::geom::RasterImage;

pub const DFLO_MAGIC: &[u8; 5] = b"DFLO1";

/// Per-pixel displacement in pixels: rectified pixel `p` corresponds to GT
/// position `p + v(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFlow {
    height: usize,
    width: usize,
    vectors: Vec<[f64; 2]>,
}

impl DenseFlow {
    pub fn new(height: usize, width: usize, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroSizeOutput);
        }
        if vectors.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "flow {height}x{width} needs {} vectors, got {}",
                height * width,
                vectors.len()
            )));
        }
        if let Some(i) = vectors.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self { height, width, vectors })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![[0.0; 2]; height * width])
    }

    /// Builds a flow from `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f64; 2]) -> Result<Self> {
        let vectors = (0..height * width).map(|k| f(k / width, k % width)).collect();
        Self::new(height, width, vectors)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        self.vectors[i * self.width + j]
    }

    /// Bilinear sample at pixel position `(x, y)`, clamped to the field.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        let (j0, fx) = crate::geom::cell(x, self.width);
        let (i0, fy) = crate::geom::cell(y, self.height);
        let j1 = (j0 + 1).min(self.width - 1);
        let i1 = (i0 + 1).min(self.height - 1);
        let (a, b, c, d) = (self.get(i0, j0), self.get(i0, j1), self.get(i1, j0), self.get(i1, j1));
        let mut out = [0.0; 2];
        for k in 0..2 {
            let top = a[k] * (1.0 - fx) + b[k] * fx;
            let bot = c[k] * (1.0 - fx) + d[k] * fx;
            out[k] = top * (1.0 - fy) + bot * fy;
        }
        out
    }

    /// Copy with vectors outside `keep` set to zero.
    pub fn masked(&self, keep: &crate::geom::ForegroundMask) -> Result<DenseFlow> {
        keep.check_dims(self.height, self.width)?;
        let vectors = self
            .vectors
            .iter()
            .zip(keep.data())
            .map(|(v, &m)| if m == 0 { [0.0; 2] } else { *v })
            .collect();
        Ok(Self {
            height: self.height,
            width: self.width,
            vectors,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let pairs: Vec<[f32; 2]> = self.vectors.iter().map(|v| [v[0] as f32, v[1] as f32]).collect();
        encode_field(DFLO_MAGIC, self.height, self.width, &pairs)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, w, v) = decode_field(DFLO_MAGIC, bytes)?;
        Self::new(h, w, v.into_iter().map(|[x, y]| [x as f64, y as f64]).collect())
    }
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<DenseFlow> {
    DenseFlow::from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_flow(path: impl AsRef<Path>, flow: &DenseFlow) -> Result<()> {
    write_bytes(path.as_ref(), &flow.to_bytes()?)
}

/// Coarse-to-fine block matching parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockMatchParams {
    pub levels: usize,
    pub block: usize,
    pub radius: i64,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        Self {
            levels: 3,
            block: 16,
            radius: 8,
        }
    }
}

struct Level {
    h: usize,
    w: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn half(v: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (nh, nw) = ((h / 2).max(1), (w / 2).max(1));
    let mut out = Vec::with_capacity(nh * nw);
    for i in 0..nh {
        for j in 0..nw {
            let (i0, j0) = ((2 * i).min(h - 1), (2 * j).min(w - 1));
            let (i1, j1) = ((2 * i + 1).min(h - 1), (2 * j + 1).min(w - 1));
            out.push(0.25 * (v[i0 * w + j0] + v[i0 * w + j1] + v[i1 * w + j0] + v[i1 * w + j1]));
        }
    }
    (out, nh, nw)
}

/// Block vector field on a `rows x cols` lattice of block centers.
struct BlockField {
    rows: usize,
    cols: usize,
    block: usize,
    v: Vec<[f64; 2]>,
}

impl BlockField {
    /// Bilinear interpolation between block centers at pixel `(x, y)`.
    fn at(&self, x: f64, y: f64) -> [f64; 2] {
        let c = (self.block as f64 - 1.0) * 0.5;
        let u = (x - c) / self.block as f64;
        let t = (y - c) / self.block as f64;
        let (j0, fx) = crate::geom::cell(u, self.cols);
        let (i0, fy) = crate::geom::cell(t, self.rows);
        let j1 = (j0 + 1).min(self.cols - 1);
        let i1 = (i0 + 1).min(self.rows - 1);
        let g = |i: usize, j: usize| self.v[i * self.cols + j];
        let mut out = [0.0; 2];
        for k in 0..2 {
            let top = g(i0, j0)[k] * (1.0 - fx) + g(i0, j1)[k] * fx;
            let bot = g(i1, j0)[k] * (1.0 - fx) + g(i1, j1)[k] * fx;
            out[k] = top * (1.0 - fy) + bot * fy;
        }
        out
    }
}

fn ncc(lv: &Level, top: usize, left: usize, bh: usize, bw: usize, dy: i64, dx: i64) -> Option<f64> {
    let (t2, l2) = (top as i64 + dy, left as i64 + dx);
    if t2 < 0 || l2 < 0 || t2 as usize + bh > lv.h || l2 as usize + bw > lv.w {
        return None;
    }
    let (t2, l2) = (t2 as usize, l2 as usize);
    let n = (bh * bw) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..bh {
        let ra = &lv.a[(top + i) * lv.w + left..][..bw];
        let rb = &lv.b[(t2 + i) * lv.w + l2..][..bw];
        for (x, y) in ra.iter().zip(rb) {
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
    }
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-9 * n || vb <= 1e-9 * n {
        return Some(0.0);
    }
    Some((sab - sa * sb / n) / (va * vb).sqrt())
}

fn parabola(m: Option<f64>, c: f64, p: Option<f64>) -> f64 {
    match (m, p) {
        (Some(m), Some(p)) => {
            let den = m - 2.0 * c + p;
            if den < -1e-12 {
                (0.5 * (m - p) / den).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

fn match_level(lv: &Level, prev: Option<&BlockField>, p: &BlockMatchParams) -> BlockField {
    let bs = p.block;
    let rows = lv.h.div_ceil(bs);
    let cols = lv.w.div_ceil(bs);
    let v = crate::par::map_indices(rows * cols, |k| {
        let (bi, bj) = (k / cols, k % cols);
        let (top, left) = (bi * bs, bj * bs);
        let (bh, bw) = (bs.min(lv.h - top), bs.min(lv.w - left));
        let pred = prev.map_or([0.0; 2], |f| {
            let c = (bs as f64 - 1.0) * 0.5;
            let q = f.at((left as f64 + c) * 0.5, (top as f64 + c) * 0.5);
            [q[0] * 2.0, q[1] * 2.0]
        });
        let (px, py) = (pred[0].round() as i64, pred[1].round() as i64);
        let mut best: Option<(f64, i64, i64)> = None;
        for dy in py - p.radius..=py + p.radius {
            for dx in px - p.radius..=px + p.radius {
                let Some(s) = ncc(lv, top, left, bh, bw, dy, dx) else { continue };
                let better = match best {
                    None => true,
                    Some((bs_, bx, by)) => s > bs_ + 1e-12 || ((s - bs_).abs() <= 1e-12 && dx * dx + dy * dy < bx * bx + by * by),
                };
                if better {
                    best = Some((s, dx, dy));
                }
            }
        }
        let Some((s, dx, dy)) = best else { return pred };
        // An exact match sits on the integer offset; the parabola would only add bias.
        if s >= 1.0 - 1e-9 {
            return [dx as f64, dy as f64];
        }
        let sx = parabola(ncc(lv, top, left, bh, bw, dy, dx - 1), s, ncc(lv, top, left, bh, bw, dy, dx + 1));
        let sy = parabola(ncc(lv, top, left, bh, bw, dy - 1, dx), s, ncc(lv, top, left, bh, bw, dy + 1, dx));
        [dx as f64 + sx, dy as f64 + sy]
    });
    BlockField { rows, cols, block: bs, v }
}

/// Dense flow from `a` (rectified) to `b` (reference) by coarse-to-fine block
/// matching with normalized cross-correlation. Equal scores prefer the smaller
/// displacement, so textureless regions get zero flow.
pub fn estimate_flow(a: &RasterImage, b: &RasterImage, params: &BlockMatchParams) -> Result<DenseFlow> {
    let (h, w) = (a.height(), a.width());
    if (h, w) != (b.height(), b.width()) {
        return Err(Error::DimensionMismatch(format!("{h}x{w} vs {}x{}", b.height(), b.width())));
    }
    if params.block == 0 || params.levels == 0 || params.radius < 0 {
        return Err(Error::InvalidParameter(format!("{params:?}")));
    }
    let mut levels = vec![Level {
        h,
        w,
        a: a.gray_f64(),
        b: b.gray_f64(),
    }];
    for _ in 1..params.levels {
        let last = levels.last().unwrap();
        if last.h < 2 * params.block || last.w < 2 * params.block {
            break;
        }
        let (na, nh, nw) = half(&last.a, last.h, last.w);
        let (nb, _, _) = half(&last.b, last.h, last.w);
        levels.push(Level { h: nh, w: nw, a: na, b: nb });
    }
    let mut field: Option<BlockField> = None;
    for lv in levels.iter().rev() {
        field = Some(match_level(lv, field.as_ref(), params));
    }
    let field = field.expect("at least one level");
    let mut vectors = vec![[0.0; 2]; h * w];
    crate::par::fill_rows(&mut vectors, w, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = field.at(j as f64, i as f64);
        }
    });
    DenseFlow::new(h, w, vectors)
}
