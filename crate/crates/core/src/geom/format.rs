//! Binary lattice format shared by grids, maps and flow fields.
//!
//! Layout (little-endian): 5-byte magic, one zero pad byte, `u16` version (1),
//! `u32` rows, `u32` cols, then `rows * cols` pairs of `f32` (x then y), row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{BackwardMap, Grid2D, NormCoord};

pub const DMAP_MAGIC: &[u8; 5] = b"DMAP1";
pub const DMAP_HEADER_LEN: usize = 16;
const VERSION: u16 = 1;
/// Upper bound on lattice elements accepted when decoding.
const MAX_ELEMENTS: u64 = 1 << 30;

pub(crate) fn encode_field(magic: &[u8; 5], rows: usize, cols: usize, values: &[[f32; 2]]) -> Result<Vec<u8>> {
    if rows as u64 > u32::MAX as u64 || cols as u64 > u32::MAX as u64 {
        return Err(Error::DimensionOverflow {
            rows: rows as u64,
            cols: cols as u64,
        });
    }
    debug_assert_eq!(values.len(), rows * cols);
    let mut out = Vec::with_capacity(DMAP_HEADER_LEN + values.len() * 8);
    out.extend_from_slice(magic);
    out.push(0);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for (i, v) in values.iter().enumerate() {
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(Error::NonFinitePayload(i));
        }
        out.extend_from_slice(&v[0].to_le_bytes());
        out.extend_from_slice(&v[1].to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode_field(magic: &[u8; 5], bytes: &[u8]) -> Result<(usize, usize, Vec<[f32; 2]>)> {
    if bytes.len() < DMAP_HEADER_LEN {
        return Err(Error::BadFormat(format!(
            "{} bytes is shorter than the {DMAP_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..5] != magic {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..5]).into_owned(),
        });
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
    let n = rows
        .checked_mul(cols)
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or(Error::DimensionOverflow { rows, cols })?;
    let expected = DMAP_HEADER_LEN as u64 + n * 8;
    if bytes.len() as u64 != expected {
        return Err(Error::BadFormat(format!(
            "{rows}x{cols} payload needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(n as usize);
    for (i, chunk) in bytes[DMAP_HEADER_LEN..].chunks_exact(8).enumerate() {
        let x = f32::from_le_bytes(chunk[..4].try_into().unwrap());
        let y = f32::from_le_bytes(chunk[4..].try_into().unwrap());
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinitePayload(i));
        }
        values.push([x, y]);
    }
    Ok((rows as usize, cols as usize, values))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_pairs(points: &[NormCoord]) -> Vec<[f32; 2]> {
    points.iter().map(|p| [p.x as f32, p.y as f32]).collect()
}

fn from_pairs(values: Vec<[f32; 2]>) -> Vec<NormCoord> {
    values
        .into_iter()
        .map(|[x, y]| NormCoord::new(x as f64, y as f64))
        .collect()
}

impl Grid2D {
    /// DMAP1 bytes; coordinates are narrowed to f32.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_field(DMAP_MAGIC, self.rows(), self.cols(), &to_pairs(self.points()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Grid2D> {
        let (rows, cols, values) = decode_field(DMAP_MAGIC, bytes)?;
        Grid2D::new(rows, cols, from_pairs(values))
    }
}

impl BackwardMap {
    /// DMAP1 bytes; coordinates are narrowed to f32.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_field(DMAP_MAGIC, self.height(), self.width(), &to_pairs(self.coords()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<BackwardMap> {
        let (rows, cols, values) = decode_field(DMAP_MAGIC, bytes)?;
        BackwardMap::new(rows, cols, from_pairs(values))
    }
}

pub fn write_grid(path: impl AsRef<Path>, grid: &Grid2D) -> Result<()> {
    write_bytes(path.as_ref(), &grid.to_bytes()?)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid2D> {
    Grid2D::from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_map(path: impl AsRef<Path>, map: &BackwardMap) -> Result<()> {
    write_bytes(path.as_ref(), &map.to_bytes()?)
}

pub fn read_map(path: impl AsRef<Path>) -> Result<BackwardMap> {
    BackwardMap::from_bytes(&read_bytes(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("id.dmap");
        let id = BackwardMap::identity(8, 8).unwrap();
        write_map(&p, &id).unwrap();
        let back = read_map(&p).unwrap();
        // 8x8 identity coordinates are k/7 fractions; compare after f32 narrowing.
        let narrowed = BackwardMap::from_bytes(&id.to_bytes().unwrap()).unwrap();
        assert_eq!(back, narrowed);
        assert!(back.max_distance(&id).unwrap() < 1e-7);
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = Grid2D::canonical(2, 2).unwrap().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Grid2D::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn default_grid_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.dmap");
        write_grid(&p, &Grid2D::canonical(45, 31).unwrap()).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16 + 45 * 31 * 2 * 4);
    }

    #[test]
    fn header_layout() {
        let bytes = Grid2D::canonical(3, 2).unwrap().to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"DMAP1");
        assert_eq!(bytes[5], 0);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), -1.0);
    }

    #[test]
    fn overflow_and_truncation_and_nan() {
        let mut bytes = Grid2D::canonical(2, 2).unwrap().to_bytes().unwrap();
        let mut huge = bytes.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(Grid2D::from_bytes(&huge), Err(Error::DimensionOverflow { .. })));
        assert!(matches!(Grid2D::from_bytes(&bytes[..20]), Err(Error::BadFormat(_))));
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(Grid2D::from_bytes(&bytes), Err(Error::NonFinitePayload(0))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_map("/definitely/not/here.dmap"), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in 2usize..6, cols in 2usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<NormCoord> = (0..rows * cols)
                .map(|_| NormCoord::new(rng.random_range(-3.0f32..3.0) as f64, rng.random_range(-3.0f32..3.0) as f64))
                .collect();
            let grid = Grid2D::new(rows, cols, points).unwrap();
            let bytes = grid.to_bytes().unwrap();
            let back = Grid2D::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &grid);
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }
}
