use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::format::{read_bytes, write_bytes};
use crate::geom::{read_map, write_map, AffineTransform2D, ForegroundMask, GlobalTransform, RasterImage};
use crate::metrics::BlockLayout;
use crate::synth::distortion::{
    distort, limit_smooth, Background, Boundary, DistortionSpec, Ripple, SmoothMode, MAX_SMOOTH_LIPSCHITZ,
};
use crate::synth::page::render_page;

/// Cumulative distortion levels: each includes everything before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    AffineOnly,
    Smooth,
    Fine,
    Crop,
    Background,
}

impl Difficulty {
    pub const ALL: [Difficulty; 5] = [
        Difficulty::AffineOnly,
        Difficulty::Smooth,
        Difficulty::Fine,
        Difficulty::Crop,
        Difficulty::Background,
    ];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::AffineOnly => "affine-only",
            Difficulty::Smooth => "+smooth",
            Difficulty::Fine => "+fine",
            Difficulty::Crop => "+crop",
            Difficulty::Background => "+background",
        })
    }
}

impl FromStr for Difficulty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches('+') {
            "affine-only" | "affine" => Ok(Difficulty::AffineOnly),
            "smooth" => Ok(Difficulty::Smooth),
            "fine" => Ok(Difficulty::Fine),
            "crop" => Ok(Difficulty::Crop),
            "background" => Ok(Difficulty::Background),
            _ => Err(Error::InvalidParameter(format!(
                "unknown difficulty {s:?} (expected affine-only, +smooth, +fine, +crop or +background)"
            ))),
        }
    }
}

/// Seed of sample `index` within a suite.
pub fn sample_seed(suite_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Draws a distortion of the requested level. All components are always drawn
/// so that raising the level only adds parts to the same base geometry.
pub fn random_spec(seed: u64, difficulty: Difficulty, height: usize, width: usize) -> DistortionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = rng.random_range(0.7..0.9);
    let sx = scale * rng.random_range(0.97..1.03);
    let sy = scale * rng.random_range(0.97..1.03);
    let angle: f64 = rng.random_range(-5.0f64..5.0).to_radians();
    let shear = rng.random_range(-0.03..0.03);
    let (tx, ty) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
    // Rotate in pixel space so the page is not sheared by the frame aspect.
    let (px, py) = ((width - 1) as f64 * 0.5, (height - 1) as f64 * 0.5);
    let (s, c) = angle.sin_cos();
    let l = [[c * sx, c * shear - s * sy], [s * sx, s * shear + c * sy]];
    let page = AffineTransform2D {
        m: [l[0][0], l[0][1] * py / px, tx, l[1][0] * px / py, l[1][1], ty],
    };

    let mut smooth = Vec::new();
    for component in 0..2 {
        let modes = rng.random_range(1..=3usize);
        for _ in 0..modes {
            smooth.push(SmoothMode {
                component,
                amplitude: rng.random_range(0.015..0.045),
                fx: rng.random_range(0.2..1.4),
                fy: rng.random_range(0.2..1.4),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            });
        }
    }
    limit_smooth(&mut smooth, MAX_SMOOTH_LIPSCHITZ);

    let wavelength = rng.random_range(0.35..0.6);
    let slope = rng.random_range(0.08..0.2);
    let wave_angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let ripple = Ripple {
        amplitude: (slope * wavelength / std::f64::consts::TAU).min(0.02),
        wavelength,
        wave_angle,
        disp_angle: wave_angle + rng.random_range(-0.5..0.5),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
    };

    let fraction = rng.random_range(0.2..0.3);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let boundary = if rng.random_bool(0.5) {
        Boundary::Cropped {
            fraction,
            cx: sign * fraction,
            cy: 0.0,
        }
    } else {
        Boundary::Cropped {
            fraction,
            cx: 0.0,
            cy: sign * fraction,
        }
    };
    let background_seed: u64 = rng.random();

    DistortionSpec {
        page: GlobalTransform::Affine(page),
        smooth: if difficulty >= Difficulty::Smooth { smooth } else { Vec::new() },
        fine: (difficulty >= Difficulty::Fine).then_some(ripple),
        seed,
        boundary: if difficulty >= Difficulty::Crop { boundary } else { Boundary::Complete },
        background: if difficulty >= Difficulty::Background {
            Background::Textured(background_seed)
        } else {
            Background::None
        },
    }
}

/// One seeded sample: a fresh page with 2 to 4 blocks and a random distortion.
pub fn make_sample(seed: u64, difficulty: Difficulty) -> Result<crate::synth::SyntheticSample> {
    let blocks = 2 + (seed % 3) as usize;
    let (flat, layout) = render_page(seed, blocks)?;
    let spec = random_spec(seed, difficulty, flat.height(), flat.width());
    distort(&flat, &layout, &spec)
}

/// `n` deterministic samples at the given difficulty.
pub fn make_suite(n: usize, seed: u64, difficulty: Difficulty) -> Result<Vec<crate::synth::SyntheticSample>> {
    if n == 0 {
        return Err(Error::InvalidParameter("suite size must be at least 1".into()));
    }
    (0..n).map(|k| make_sample(sample_seed(seed, k), difficulty)).collect()
}

pub fn sample_id(index: usize) -> String {
    format!("sample_{index:03}")
}

/// File names inside each sample directory.
pub const SAMPLE_FILES: [&str; 7] = [
    "flat.png",
    "distorted.png",
    "mask.png",
    "gt_mask.png",
    "gt.dmap",
    "layout.txt",
    "spec.txt",
];

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Writes one sample into `dir` (created if needed).
pub fn write_sample(dir: &Path, s: &crate::synth::SyntheticSample) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    s.flat.save_png(dir.join("flat.png"))?;
    s.distorted.save_png(dir.join("distorted.png"))?;
    s.mask.save_png(dir.join("mask.png"))?;
    s.gt_mask.save_png(dir.join("gt_mask.png"))?;
    write_map(dir.join("gt.dmap"), &s.gt_backward)?;
    s.layout.write(dir.join("layout.txt"))?;
    write_bytes(&dir.join("spec.txt"), s.spec.to_kv().as_bytes())
}

/// Reads a sample written by [`write_sample`].
pub fn load_sample(dir: &Path) -> Result<crate::synth::SyntheticSample> {
    let spec_bytes = read_bytes(&dir.join("spec.txt"))?;
    let spec = DistortionSpec::from_kv(&String::from_utf8_lossy(&spec_bytes))?;
    Ok(crate::synth::SyntheticSample {
        flat: RasterImage::load_png(dir.join("flat.png"))?.to_gray(),
        distorted: RasterImage::load_png(dir.join("distorted.png"))?,
        gt_backward: read_map(dir.join("gt.dmap"))?,
        mask: ForegroundMask::load_png(dir.join("mask.png"))?,
        gt_mask: ForegroundMask::load_png(dir.join("gt_mask.png"))?,
        layout: BlockLayout::read(dir.join("layout.txt"))?,
        spec,
    })
}

/// Manifest text: a header, then one tab-separated record per sample with its
/// relative file paths and the one-line spec summary.
pub fn manifest_text(samples: &[crate::synth::SyntheticSample]) -> String {
    let mut s = String::from("id");
    for f in SAMPLE_FILES {
        s.push('\t');
        s.push_str(f.split('.').next().unwrap_or(f));
    }
    s.push_str("\tspec\n");
    for (k, sample) in samples.iter().enumerate() {
        let id = sample_id(k);
        s.push_str(&id);
        for f in SAMPLE_FILES {
            s.push('\t');
            s.push_str(&format!("{id}/{f}"));
        }
        s.push('\t');
        s.push_str(&sample.spec.to_kv().trim_end().replace('\n', ";"));
        s.push('\n');
    }
    s
}

/// Writes every sample under `dir/<id>/` plus `dir/manifest.tsv`.
pub fn write_suite(dir: &Path, samples: &[crate::synth::SyntheticSample]) -> Result<PathBuf> {
    for (k, s) in samples.iter().enumerate() {
        write_sample(&dir.join(sample_id(k)), s)?;
    }
    let path = dir.join(MANIFEST_NAME);
    write_bytes(&path, manifest_text(samples).as_bytes())?;
    Ok(path)
}

/// Sample directories listed in a suite manifest, in order.
pub fn read_manifest(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let bytes = read_bytes(&dir.join(MANIFEST_NAME))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let id = line.split('\t').next().unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::BadFormat("manifest record without id".into()));
        }
        out.push((id.clone(), dir.join(&id)));
    }
    Ok(out)
}
