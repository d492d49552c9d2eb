use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{
    norm_to_pixel, pixel_to_norm, AffineTransform2D, BackwardMap, ForegroundMask, GlobalTransform, Homography2D,
    NormCoord, RasterImage,
};
use crate::metrics::BlockLayout;
use crate::warp::sample_image;

pub const MAX_SMOOTH_AMPLITUDE: f64 = 0.15;
pub const MAX_SMOOTH_LIPSCHITZ: f64 = 0.5;
pub const MAX_MODES_PER_AXIS: usize = 3;
pub const MAX_RIPPLE_AMPLITUDE: f64 = 0.02;
pub const MIN_RIPPLE_WAVELENGTH: f64 = 0.1;
pub const NEWTON_TOLERANCE: f64 = 1e-6;
pub const NEWTON_MAX_ITERATIONS: usize = 20;
pub const INJECTIVITY_PROBE: usize = 128;
/// Background intensity when no texture is requested.
pub const PLAIN_BACKGROUND: f32 = 0.15;

/// One low-frequency sinusoid displacing a single coordinate:
/// `d(p) = amplitude · sin(π (fx x + fy y) + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothMode {
    /// 0 displaces x, 1 displaces y.
    pub component: usize,
    pub amplitude: f64,
    pub fx: f64,
    pub fy: f64,
    pub phase: f64,
}

impl SmoothMode {
    fn slope(&self) -> f64 {
        self.amplitude.abs() * std::f64::consts::PI * self.fx.hypot(self.fy)
    }
}

/// Upper bound on the Lipschitz constant of the summed smooth displacement.
pub fn smooth_lipschitz(modes: &[SmoothMode]) -> f64 {
    let per = |c: usize| modes.iter().filter(|m| m.component == c).map(SmoothMode::slope).sum::<f64>();
    per(0).hypot(per(1))
}

/// Scales amplitudes down so the Lipschitz bound is at most `limit`.
pub fn limit_smooth(modes: &mut [SmoothMode], limit: f64) {
    let l = smooth_lipschitz(modes);
    if l > limit {
        let k = limit / l;
        modes.iter_mut().for_each(|m| m.amplitude *= k);
    }
}

/// High-frequency plane-wave ripple:
/// `d(p) = amplitude · sin(2π (k·p) / wavelength + phase) · e`, with `k` the unit
/// vector at `wave_angle` and `e` the unit vector at `disp_angle`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ripple {
    pub amplitude: f64,
    pub wavelength: f64,
    pub wave_angle: f64,
    pub disp_angle: f64,
    pub phase: f64,
}

impl Ripple {
    pub fn slope(&self) -> f64 {
        self.amplitude.abs() * std::f64::consts::TAU / self.wavelength
    }
}

/// Visible part of the distorted frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Complete,
    /// The frame is the window of half-size `1 - fraction` centered at `(cx, cy)`,
    /// rescaled to `[-1, 1]^2`.
    Cropped { fraction: f64, cx: f64, cy: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Background {
    None,
    Textured(u64),
}

/// Full description of a synthetic distortion. The forward map sends flat
/// page coordinates into the distorted frame: `crop ∘ fine ∘ smooth ∘ page`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionSpec {
    pub page: GlobalTransform,
    pub smooth: Vec<SmoothMode>,
    pub fine: Option<Ripple>,
    pub seed: u64,
    pub boundary: Boundary,
    pub background: Background,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        Self::identity()
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl DistortionSpec {
    pub fn identity() -> Self {
        Self {
            page: GlobalTransform::Affine(AffineTransform2D::IDENTITY),
            smooth: Vec::new(),
            fine: None,
            seed: 0,
            boundary: Boundary::Complete,
            background: Background::None,
        }
    }

    pub fn affine(m: AffineTransform2D) -> Self {
        Self {
            page: GlobalTransform::Affine(m),
            ..Self::identity()
        }
    }

    /// Parameter bounds, invertibility of the page transform and the Jacobian
    /// probe. Returns the compiled map on success.
    pub fn compile(&self) -> Result<Distortion> {
        for c in 0..2 {
            let modes: Vec<_> = self.smooth.iter().filter(|m| m.component == c).collect();
            if modes.len() > MAX_MODES_PER_AXIS {
                return Err(bad(format!("{} smooth modes on axis {c}, at most {MAX_MODES_PER_AXIS}", modes.len())));
            }
            let amp: f64 = modes.iter().map(|m| m.amplitude.abs()).sum();
            if amp > MAX_SMOOTH_AMPLITUDE + 1e-12 {
                return Err(bad(format!("smooth amplitude {amp} exceeds {MAX_SMOOTH_AMPLITUDE}")));
            }
        }
        if self.smooth.iter().any(|m| m.component > 1 || ![m.amplitude, m.fx, m.fy, m.phase].iter().all(|v| v.is_finite())) {
            return Err(bad("malformed smooth mode"));
        }
        let lip = smooth_lipschitz(&self.smooth);
        if lip > MAX_SMOOTH_LIPSCHITZ + 1e-12 {
            return Err(bad(format!("smooth Lipschitz bound {lip} exceeds {MAX_SMOOTH_LIPSCHITZ}")));
        }
        if let Some(r) = &self.fine {
            if ![r.amplitude, r.wavelength, r.wave_angle, r.disp_angle, r.phase].iter().all(|v| v.is_finite()) {
                return Err(bad("malformed ripple"));
            }
            if r.amplitude.abs() > MAX_RIPPLE_AMPLITUDE + 1e-12 {
                return Err(bad(format!("ripple amplitude {} exceeds {MAX_RIPPLE_AMPLITUDE}", r.amplitude)));
            }
            if r.wavelength < MIN_RIPPLE_WAVELENGTH {
                return Err(bad(format!("ripple wavelength {} below {MIN_RIPPLE_WAVELENGTH}", r.wavelength)));
            }
        }
        if let Boundary::Cropped { fraction, cx, cy } = self.boundary {
            if !(fraction > 0.0 && fraction < 0.5) || cx.abs() > fraction + 1e-12 || cy.abs() > fraction + 1e-12 {
                return Err(bad(format!("crop window fraction={fraction} center=({cx}, {cy}) invalid")));
            }
        }
        let page_inv = self.page.inverse()?;
        let d = Distortion {
            spec: self.clone(),
            page_inv,
        };
        d.check_injective()?;
        Ok(d)
    }

    /// `key=value` lines; parsed back exactly by [`Self::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "seed={}", self.seed);
        match &self.page {
            GlobalTransform::Affine(a) => {
                let _ = writeln!(s, "page=affine {}", join(&a.m));
            }
            GlobalTransform::Perspective(h) => {
                let _ = writeln!(s, "page=perspective {}", join(&h.h));
            }
        }
        let _ = writeln!(s, "smooth={}", self.smooth.len());
        for (k, m) in self.smooth.iter().enumerate() {
            let axis = if m.component == 0 { "x" } else { "y" };
            let _ = writeln!(s, "smooth.{k}={axis} {}", join(&[m.amplitude, m.fx, m.fy, m.phase]));
        }
        match &self.fine {
            None => s.push_str("ripple=none\n"),
            Some(r) => {
                let _ = writeln!(
                    s,
                    "ripple={}",
                    join(&[r.amplitude, r.wavelength, r.wave_angle, r.disp_angle, r.phase])
                );
            }
        }
        match self.boundary {
            Boundary::Complete => s.push_str("boundary=complete\n"),
            Boundary::Cropped { fraction, cx, cy } => {
                let _ = writeln!(s, "boundary=cropped {}", join(&[fraction, cx, cy]));
            }
        }
        match self.background {
            Background::None => s.push_str("background=none\n"),
            Background::Textured(seed) => {
                let _ = writeln!(s, "background=textured {seed}");
            }
        }
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let fmt = |m: String| Error::BadFormat(m);
        let nums = |v: &str, n: usize, key: &str| -> Result<Vec<f64>> {
            let out: Vec<f64> = v
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt(format!("{key}: {e}")))?;
            if out.len() != n || out.iter().any(|x| !x.is_finite()) {
                return Err(fmt(format!("{key}: expected {n} finite numbers")));
            }
            Ok(out)
        };
        let mut spec = Self::identity();
        let mut smooth_n = 0usize;
        let mut smooth: Vec<Option<SmoothMode>> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line.split_once('=').ok_or_else(|| fmt(format!("no '=' in {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "seed" => spec.seed = value.parse().map_err(|e| fmt(format!("seed: {e}")))?,
                "page" => {
                    let (kind, rest) = value.split_once(' ').unwrap_or((value, ""));
                    spec.page = match kind {
                        "affine" => GlobalTransform::Affine(AffineTransform2D::new(nums(rest, 6, key)?.try_into().unwrap())?),
                        "perspective" => {
                            GlobalTransform::Perspective(Homography2D::new(nums(rest, 9, key)?.try_into().unwrap())?)
                        }
                        other => return Err(fmt(format!("page kind {other:?}"))),
                    };
                }
                "smooth" => {
                    smooth_n = value.parse().map_err(|e| fmt(format!("smooth: {e}")))?;
                    smooth = vec![None; smooth_n];
                }
                "ripple" => {
                    spec.fine = if value == "none" {
                        None
                    } else {
                        let v = nums(value, 5, key)?;
                        Some(Ripple {
                            amplitude: v[0],
                            wavelength: v[1],
                            wave_angle: v[2],
                            disp_angle: v[3],
                            phase: v[4],
                        })
                    };
                }
                "boundary" => {
                    spec.boundary = if value == "complete" {
                        Boundary::Complete
                    } else if let Some(rest) = value.strip_prefix("cropped") {
                        let v = nums(rest, 3, key)?;
                        Boundary::Cropped {
                            fraction: v[0],
                            cx: v[1],
                            cy: v[2],
                        }
                    } else {
                        return Err(fmt(format!("boundary {value:?}")));
                    };
                }
                "background" => {
                    spec.background = if value == "none" {
                        Background::None
                    } else if let Some(rest) = value.strip_prefix("textured") {
                        Background::Textured(rest.trim().parse().map_err(|e| fmt(format!("background: {e}")))?)
                    } else {
                        return Err(fmt(format!("background {value:?}")));
                    };
                }
                k if k.starts_with("smooth.") => {
                    let idx: usize = k[7..].parse().map_err(|e| fmt(format!("{k}: {e}")))?;
                    let slot = smooth.get_mut(idx).ok_or_else(|| fmt(format!("{k} beyond smooth={smooth_n}")))?;
                    let (axis, rest) = value.split_once(' ').ok_or_else(|| fmt(format!("{k}: missing axis")))?;
                    let component = match axis {
                        "x" => 0,
                        "y" => 1,
                        other => return Err(fmt(format!("{k}: axis {other:?}"))),
                    };
                    let v = nums(rest, 4, k)?;
                    *slot = Some(SmoothMode {
                        component,
                        amplitude: v[0],
                        fx: v[1],
                        fy: v[2],
                        phase: v[3],
                    });
                }
                other => return Err(fmt(format!("unknown key {other:?}"))),
            }
        }
        spec.smooth = smooth
            .into_iter()
            .enumerate()
            .map(|(k, m)| m.ok_or_else(|| fmt(format!("smooth.{k} missing"))))
            .collect::<Result<_>>()?;
        Ok(spec)
    }
}

type Jac = [[f64; 2]; 2];

fn mat_mul(a: &Jac, b: &Jac) -> Jac {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

const IDENTITY_JAC: Jac = [[1.0, 0.0], [0.0, 1.0]];

/// A validated [`DistortionSpec`] with its page inverse cached.
#[derive(Clone, Debug)]
pub struct Distortion {
    spec: DistortionSpec,
    page_inv: GlobalTransform,
}

impl Distortion {
    pub fn spec(&self) -> &DistortionSpec {
        &self.spec
    }

    fn smooth(&self, r: NormCoord) -> (NormCoord, Jac) {
        let mut out = r;
        let mut j = IDENTITY_JAC;
        for m in &self.spec.smooth {
            let arg = std::f64::consts::PI * (m.fx * r.x + m.fy * r.y) + m.phase;
            let (s, c) = arg.sin_cos();
            let g = m.amplitude * std::f64::consts::PI * c;
            if m.component == 0 {
                out.x += m.amplitude * s;
                j[0][0] += g * m.fx;
                j[0][1] += g * m.fy;
            } else {
                out.y += m.amplitude * s;
                j[1][0] += g * m.fx;
                j[1][1] += g * m.fy;
            }
        }
        (out, j)
    }

    fn ripple(&self, r: NormCoord) -> (NormCoord, Jac) {
        let Some(w) = &self.spec.fine else {
            return (r, IDENTITY_JAC);
        };
        let (ks, kc) = w.wave_angle.sin_cos();
        let (es, ec) = w.disp_angle.sin_cos();
        let k = std::f64::consts::TAU / w.wavelength;
        let (s, c) = (k * (kc * r.x + ks * r.y) + w.phase).sin_cos();
        let g = w.amplitude * k * c;
        (
            NormCoord::new(r.x + w.amplitude * s * ec, r.y + w.amplitude * s * es),
            [[1.0 + g * ec * kc, g * ec * ks], [g * es * kc, 1.0 + g * es * ks]],
        )
    }

    /// Nonlinear part `fine ∘ smooth` and its Jacobian.
    fn core(&self, r: NormCoord, with_fine: bool) -> (NormCoord, Jac) {
        let (s, js) = self.smooth(r);
        if !with_fine {
            return (s, js);
        }
        let (f, jf) = self.ripple(s);
        (f, mat_mul(&jf, &js))
    }

    fn crop(&self, q: NormCoord) -> NormCoord {
        match self.spec.boundary {
            Boundary::Complete => q,
            Boundary::Cropped { fraction, cx, cy } => {
                let s = 1.0 - fraction;
                NormCoord::new((q.x - cx) / s, (q.y - cy) / s)
            }
        }
    }

    fn uncrop(&self, q: NormCoord) -> NormCoord {
        match self.spec.boundary {
            Boundary::Complete => q,
            Boundary::Cropped { fraction, cx, cy } => {
                let s = 1.0 - fraction;
                NormCoord::new(q.x * s + cx, q.y * s + cy)
            }
        }
    }

    fn crop_scale(&self) -> f64 {
        match self.spec.boundary {
            Boundary::Complete => 1.0,
            Boundary::Cropped { fraction, .. } => 1.0 / (1.0 - fraction),
        }
    }

    /// Flat page coordinates to distorted-frame coordinates.
    pub fn forward(&self, p: NormCoord) -> NormCoord {
        self.crop(self.core(self.spec.page.apply(p), true).0)
    }

    /// [`Self::forward`] without the fine ripple.
    pub fn forward_coarse(&self, p: NormCoord) -> NormCoord {
        self.crop(self.core(self.spec.page.apply(p), false).0)
    }

    pub fn jacobian(&self, p: NormCoord) -> Jac {
        let jp = match &self.spec.page {
            GlobalTransform::Affine(a) => [[a.m[0], a.m[1]], [a.m[3], a.m[4]]],
            GlobalTransform::Perspective(h) => h.jacobian(p),
        };
        let jc = self.core(self.spec.page.apply(p), true).1;
        let k = self.crop_scale();
        let j = mat_mul(&jc, &jp);
        [[j[0][0] * k, j[0][1] * k], [j[1][0] * k, j[1][1] * k]]
    }

    /// Solves `forward(p) = q` by damped Newton on the nonlinear part.
    /// Returns `None` if it does not reach the tolerance.
    pub fn inverse(&self, q: NormCoord) -> Option<NormCoord> {
        let t = self.uncrop(q);
        let mut r = t;
        let (mut val, mut jac) = self.core(r, true);
        let mut res = (val - t).norm();
        for _ in 0..NEWTON_MAX_ITERATIONS {
            if res <= NEWTON_TOLERANCE {
                break;
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det.abs() < 1e-12 {
                return None;
            }
            let e = val - t;
            let step = NormCoord::new(
                (jac[1][1] * e.x - jac[0][1] * e.y) / det,
                (-jac[1][0] * e.x + jac[0][0] * e.y) / det,
            );
            let mut lambda = 1.0;
            loop {
                let cand = r - step * lambda;
                let (v, j) = self.core(cand, true);
                let cr = (v - t).norm();
                if cr < res || lambda < 1.0 / 64.0 {
                    r = cand;
                    val = v;
                    jac = j;
                    res = cr;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if res > NEWTON_TOLERANCE || !r.is_finite() {
            return None;
        }
        Some(self.page_inv.apply(r))
    }

    fn check_injective(&self) -> Result<()> {
        let n = INJECTIVITY_PROBE;
        for i in 0..n {
            for j in 0..n {
                let p = NormCoord::new(pixel_to_norm(j as f64, n), pixel_to_norm(i as f64, n));
                let jm = self.jacobian(p);
                let det = jm[0][0] * jm[1][1] - jm[0][1] * jm[1][0];
                if !(det > 0.0) {
                    return Err(Error::NonInjectiveSpec(format!(
                        "Jacobian determinant {det:e} at ({:.4}, {:.4})",
                        p.x, p.y
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Seeded value-noise blobs plus straight dark edges, in distorted-frame pixels.
struct Texture {
    lattice: Vec<f64>,
    n: usize,
    lines: Vec<(f64, f64, f64, f64)>,
    h: usize,
    w: usize,
}

impl Texture {
    fn new(seed: u64, h: usize, w: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 9;
        let lattice = (0..n * n).map(|_| rng.random_range(0.15..0.6)).collect();
        let lines = (0..6)
            .map(|_| {
                let (px, py) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
                let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                (px, py, -a.sin(), a.cos())
            })
            .collect();
        Self { lattice, n, lines, h, w }
    }

    fn value(&self, i: usize, j: usize) -> f32 {
        let (x, y) = (j as f64, i as f64);
        if self.lines.iter().any(|&(px, py, nx, ny)| ((x - px) * nx + (y - py) * ny).abs() < 1.0) {
            return 0.05;
        }
        let u = x / (self.w - 1).max(1) as f64 * (self.n - 1) as f64;
        let v = y / (self.h - 1).max(1) as f64 * (self.n - 1) as f64;
        let (j0, i0) = ((u.floor() as usize).min(self.n - 2), (v.floor() as usize).min(self.n - 2));
        let (fu, fv) = (u - j0 as f64, v - i0 as f64);
        let at = |a: usize, b: usize| self.lattice[a * self.n + b];
        let top = at(i0, j0) * (1.0 - fu) + at(i0, j0 + 1) * fu;
        let bot = at(i0 + 1, j0) * (1.0 - fu) + at(i0 + 1, j0 + 1) * fu;
        (top * (1.0 - fv) + bot * fv) as f32
    }
}

/// A distorted document with exact ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub flat: RasterImage,
    pub distorted: RasterImage,
    /// For each flat-frame pixel, its normalized position in `distorted`.
    pub gt_backward: BackwardMap,
    /// Page support in the distorted frame.
    pub mask: ForegroundMask,
    /// Flat-frame pixels that are visible in the distorted frame.
    pub gt_mask: ForegroundMask,
    pub layout: BlockLayout,
    pub spec: DistortionSpec,
}

const INSIDE_TOL: f64 = 1e-9;

fn inside(p: NormCoord) -> bool {
    p.x.abs() <= 1.0 + INSIDE_TOL && p.y.abs() <= 1.0 + INSIDE_TOL
}

/// Renders `flat` through `spec` into a same-sized distorted frame.
pub fn distort(flat: &RasterImage, layout: &BlockLayout, spec: &DistortionSpec) -> Result<SyntheticSample> {
    let d = spec.compile()?;
    let (h, w) = (flat.height(), flat.width());
    let flat_gray = flat.to_gray();
    let gt_backward = BackwardMap::from_fn(h, w, |p| d.forward(p))?;
    let texture = match spec.background {
        Background::Textured(seed) => Some(Texture::new(seed, h, w)),
        Background::None => None,
    };
    let pixels = crate::par::try_map_indices(h * w, |k| {
        let (i, j) = (k / w, k % w);
        let q = NormCoord::new(pixel_to_norm(j as f64, w), pixel_to_norm(i as f64, h));
        let p = d.inverse(q).ok_or(Error::NewtonDivergence { x: j, y: i })?;
        if inside(p) {
            let mut v = [0.0f32];
            sample_image(&flat_gray, p.clamped(), &[1.0; 3], &mut v);
            Ok::<_, Error>((v[0], 1u8))
        } else {
            let bg = texture.as_ref().map_or(PLAIN_BACKGROUND, |t| t.value(i, j));
            Ok((bg, 0u8))
        }
    })?;
    let (data, mask): (Vec<f32>, Vec<u8>) = pixels.into_iter().unzip();
    let gt_mask: Vec<u8> = gt_backward.coords().iter().map(|&q| u8::from(inside(q))).collect();
    Ok(SyntheticSample {
        flat: flat_gray,
        distorted: RasterImage::new(h, w, 1, data)?,
        gt_backward,
        mask: ForegroundMask::new(h, w, mask)?,
        gt_mask: ForegroundMask::new(h, w, gt_mask)?,
        layout: layout.clone(),
        spec: spec.clone(),
    })
}

/// Pixel-space displacement field `rectified → flat` implied by a rectifying
/// backward map `d` (rectified pixel to distorted normalized coordinates).
/// Pixels whose source cannot be inverted get a zero vector.
pub fn true_flow(sample: &SyntheticSample, d: &BackwardMap) -> Result<crate::metrics::DenseFlow> {
    let dist = sample.spec.compile()?;
    let (fh, fw) = (sample.flat.height(), sample.flat.width());
    let (h, w) = (d.height(), d.width());
    let vectors = crate::par::map_indices(h * w, |k| {
        let (i, j) = (k / w, k % w);
        match dist.inverse(d.coords()[k]) {
            Some(p) => [norm_to_pixel(p.x, fw) - j as f64, norm_to_pixel(p.y, fh) - i as f64],
            None => [0.0, 0.0],
        }
    });
    crate::metrics::DenseFlow::new(h, w, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render_page;

    fn wavy() -> DistortionSpec {
        let mut smooth = vec![
            SmoothMode {
                component: 0,
                amplitude: 0.05,
                fx: 0.7,
                fy: 0.9,
                phase: 0.3,
            },
            SmoothMode {
                component: 1,
                amplitude: 0.06,
                fx: 1.0,
                fy: 0.4,
                phase: 1.1,
            },
        ];
        limit_smooth(&mut smooth, MAX_SMOOTH_LIPSCHITZ);
        DistortionSpec {
            page: GlobalTransform::Affine(AffineTransform2D::similarity(0.8, 0.05, 0.02, -0.03)),
            smooth,
            fine: Some(Ripple {
                amplitude: 0.006,
                wavelength: 0.4,
                wave_angle: 1.3,
                disp_angle: 1.5,
                phase: 0.2,
            }),
            seed: 9,
            boundary: Boundary::Complete,
            background: Background::Textured(4),
        }
    }

    #[test]
    fn identity_spec_is_exact() {
        let (flat, layout) = render_page(1, 2).unwrap();
        let s = distort(&flat, &layout, &DistortionSpec::identity()).unwrap();
        assert_eq!(s.distorted, flat);
        assert_eq!(s.gt_backward, BackwardMap::identity(712, 488).unwrap());
        assert_eq!(s.mask.count(), 712 * 488);
    }

    #[test]
    fn affine_spec_gt_is_closed_form() {
        let m = AffineTransform2D::from_rows([0.8, 0.05, 0.02], [-0.03, 0.85, 0.01]).unwrap();
        let (flat, layout) = render_page(2, 2).unwrap();
        let s = distort(&flat, &layout, &DistortionSpec::affine(m)).unwrap();
        for i in (0..712).step_by(37) {
            for j in (0..488).step_by(23) {
                let p = s.gt_backward.output_position(i, j);
                assert_eq!(s.gt_backward.at(i, j), m.apply(p));
            }
        }
    }

    #[test]
    fn newton_inverts_forward() {
        let d = wavy().compile().unwrap();
        for k in 0..50 {
            let p = NormCoord::new(-0.95 + 0.038 * k as f64, 0.9 - 0.035 * k as f64);
            let q = d.forward(p);
            let back = d.inverse(q).unwrap();
            assert!((back - p).norm() < 1e-5, "{p:?} -> {back:?}");
        }
    }

    #[test]
    fn round_trip_reconstructs_flat() {
        let (flat, layout) = render_page(3, 3).unwrap();
        let s = distort(&flat, &layout, &wavy()).unwrap();
        let back = crate::warp::warp_by_map(&s.distorted, &s.gt_backward, &Default::default()).unwrap();
        let err = back.image.mean_abs_diff(&flat).unwrap();
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn mask_pixels_back_project_inside_page() {
        let (flat, layout) = render_page(4, 2).unwrap();
        let s = distort(&flat, &layout, &wavy()).unwrap();
        let d = s.spec.compile().unwrap();
        let (h, w) = (712, 488);
        for i in (0..h).step_by(7) {
            for j in (0..w).step_by(5) {
                if s.mask.get(i, j) {
                    let q = NormCoord::new(pixel_to_norm(j as f64, w), pixel_to_norm(i as f64, h));
                    let p = d.inverse(q).unwrap();
                    let (px, py) = (norm_to_pixel(p.x, w), norm_to_pixel(p.y, h));
                    assert!(px > -0.5 && px < w as f64 - 0.5 && py > -0.5 && py < h as f64 - 0.5);
                }
            }
        }
    }

    #[test]
    fn kv_round_trip() {
        let mut spec = wavy();
        spec.boundary = Boundary::Cropped {
            fraction: 0.2,
            cx: -0.2,
            cy: 0.1,
        };
        assert_eq!(DistortionSpec::from_kv(&spec.to_kv()).unwrap(), spec);
        let mut persp = DistortionSpec::identity();
        persp.page = GlobalTransform::Perspective(
            Homography2D::new([0.8, 0.01, 0.0, 0.02, 0.85, 0.01, 0.05, -0.04, 1.0]).unwrap(),
        );
        assert_eq!(DistortionSpec::from_kv(&persp.to_kv()).unwrap(), persp);
        assert!(DistortionSpec::from_kv("bogus=1").is_err());
        assert!(DistortionSpec::from_kv("smooth=1\n").is_err());
    }

    #[test]
    fn bounds_are_enforced() {
        let mut s = wavy();
        s.fine.as_mut().unwrap().amplitude = 0.05;
        assert!(s.compile().is_err());
        let mut s = wavy();
        s.fine.as_mut().unwrap().wavelength = 0.05;
        assert!(s.compile().is_err());
        let mut s = wavy();
        s.smooth[0].amplitude = 0.5;
        assert!(s.compile().is_err());
        let flip = DistortionSpec::affine(AffineTransform2D::scale(-1.0, 1.0));
        assert!(matches!(flip.compile(), Err(Error::NonInjectiveSpec(_))));
    }
}
