use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{Error, Result};
use crate::geom::{BackwardMap, GlobalTransform, Grid2D, RasterImage};

/// Cascade stage a grid is requested for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Document localization on the downscaled input.
    Localize,
    /// Coarse backward grid on the normalized view `O_0`.
    Coarse,
    /// Refinement iteration `n >= 1`, run on `O_n`, producing `G_{n+1}`.
    Fine(usize),
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Localize => f.write_str("L"),
            Stage::Coarse => f.write_str("C"),
            Stage::Fine(n) => write!(f, "F:{n}"),
        }
    }
}

impl Stage {
    /// Relative path of this stage's grid inside an image directory.
    pub fn file_key(&self) -> String {
        match self {
            Stage::Localize => "L".into(),
            Stage::Coarse => "C".into(),
            Stage::Fine(n) => format!("F/{n}"),
        }
    }
}

/// Everything a predictor may look at.
///
/// Learned predictors only need `image`; the remaining fields carry pipeline
/// state that file replay and ground-truth oracles rely on.
#[derive(Clone, Copy, Debug)]
pub struct PredictRequest<'a> {
    /// Input at working resolution.
    pub image: &'a RasterImage,
    pub image_id: &'a str,
    pub stage: Stage,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Stage-1 transform, set from the coarse stage on.
    pub transform: Option<&'a GlobalTransform>,
    /// Current composed map `D_n`, set for refinement stages.
    pub current_map: Option<&'a BackwardMap>,
}

/// A source of control grids for the three cascade stages.
pub trait GridPredictor: Send + Sync {
    fn predict(&self, req: &PredictRequest<'_>) -> Result<Grid2D>;
}

impl<T: GridPredictor + ?Sized> GridPredictor for &T {
    fn predict(&self, req: &PredictRequest<'_>) -> Result<Grid2D> {
        (**self).predict(req)
    }
}

/// Always returns the canonical grid, i.e. predicts no deformation.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPredictor;

impl GridPredictor for IdentityPredictor {
    fn predict(&self, req: &PredictRequest<'_>) -> Result<Grid2D> {
        Grid2D::canonical(req.grid_rows, req.grid_cols)
    }
}

/// Replays stored grids from `dir/<image id>/{L,C,F/<n>}.dmap`.
#[derive(Clone, Debug)]
pub struct FilePredictor {
    dir: PathBuf,
}

pub const GRID_EXTENSION: &str = "dmap";

impl FilePredictor {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, image_id: &str, stage: Stage) -> PathBuf {
        self.dir
            .join(image_id)
            .join(format!("{}.{GRID_EXTENSION}", stage.file_key()))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

pub fn file_predictor(dir: impl Into<PathBuf>) -> FilePredictor {
    FilePredictor::new(dir)
}

impl GridPredictor for FilePredictor {
    fn predict(&self, req: &PredictRequest<'_>) -> Result<Grid2D> {
        let path = self.path_for(req.image_id, req.stage);
        if !path.is_file() {
            return Err(Error::PredictorFailure(format!("{}/{}", req.image_id, req.stage.file_key())));
        }
        let grid = crate::geom::read_grid(&path)?;
        if (grid.rows(), grid.cols()) != (req.grid_rows, req.grid_cols) {
            return Err(Error::BadFormat(format!(
                "{}: grid is {}x{}, expected {}x{}",
                path.display(),
                grid.rows(),
                grid.cols(),
                req.grid_rows,
                req.grid_cols
            )));
        }
        Ok(grid)
    }
}

/// External predictor: runs `program args... <png> <stage tag>` and reads a
/// DMAP1 grid from stdout. Tags are `L`, `C` and `F:<n>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandPredictor {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandPredictor {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }
}

impl GridPredictor for CommandPredictor {
    fn predict(&self, req: &PredictRequest<'_>) -> Result<Grid2D> {
        let mut file = tempfile::Builder::new()
            .suffix(".png")
            .tempfile()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        req.image.save_png(file.path())?;
        file.flush().map_err(|e| Error::io(file.path(), e))?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(file.path())
            .arg(req.stage.to_string())
            .output()
            .map_err(|e| Error::PredictorFailure(format!("{}: {e}", self.program)))?;
        if !out.status.success() {
            return Err(Error::PredictorFailure(format!(
                "{} {} exited with {}: {}",
                self.program,
                req.stage,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Grid2D::from_bytes(&out.stdout)
    }
}

/// Wraps a closure as a predictor.
pub struct FnPredictor<F>(pub F);

impl<F> GridPredictor for FnPredictor<F>
where
    F: Fn(&PredictRequest<'_>) -> Result<Grid2D> + Send + Sync,
{
    fn predict(&self, req: &PredictRequest<'_>) -> Result<Grid2D> {
        (self.0)(req)
    }
}
