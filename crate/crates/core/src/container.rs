//! RT4D binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"R4DT" | u32 version=1 | u32 ndims | ndims x u32 dims | u32 dtype (0 = f32 LE)
//! 64-byte metadata: 6 x f32 LE (range_min, range_max, az_min, az_max, dop_min, dop_max), zero padded
//! payload: f32 LE, row-major, last axis fastest
//! ```
//!
//! An all-zero metadata block means "no grid attached" (embedding dumps).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"R4DT";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
pub const METADATA_LEN: usize = 64;
pub const MAX_DIMS: usize = 4;

const CHUNK_ELEMS: usize = 1 << 18;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic bytes {0:?} (expected R4DT)")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("file truncated: {0}")]
    TruncatedFile(String),
    #[error("{0} unexpected bytes after payload")]
    TrailingData(usize),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for ContainerError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ContainerError::TruncatedFile(e.to_string())
        } else {
            ContainerError::Io(e)
        }
    }
}

/// Physical axis extents stored in the metadata block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridExtents {
    pub range_min: f32,
    pub range_max: f32,
    pub az_min: f32,
    pub az_max: f32,
    pub dop_min: f32,
    pub dop_max: f32,
}

impl GridExtents {
    fn to_array(self) -> [f32; 6] {
        [
            self.range_min,
            self.range_max,
            self.az_min,
            self.az_max,
            self.dop_min,
            self.dop_max,
        ]
    }
}

/// Untyped container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub grid: Option<GridExtents>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>, grid: Option<GridExtents>) -> Result<Self, ContainerError> {
        check_dims(&dims)?;
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(ContainerError::DimMismatch(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, grid, data })
    }
}

fn check_dims(dims: &[usize]) -> Result<(), ContainerError> {
    if dims.is_empty() || dims.len() > MAX_DIMS {
        return Err(ContainerError::DimMismatch(format!(
            "{} dims declared, supported 1..={MAX_DIMS}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(ContainerError::DimMismatch(format!("zero-length axis in {dims:?}")));
    }
    Ok(())
}

fn element_count(dims: &[usize]) -> Result<usize, ContainerError> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| ContainerError::DimMismatch(format!("dims {dims:?} overflow")))
}

pub fn write_raw<W: Write>(w: W, t: &RawTensor) -> Result<(), ContainerError> {
    write_parts(w, &t.dims, &t.data, t.grid)
}

/// Writes a container from borrowed parts.
pub fn write_parts<W: Write>(
    mut w: W,
    dims: &[usize],
    data: &[f32],
    grid: Option<GridExtents>,
) -> Result<(), ContainerError> {
    check_dims(dims)?;
    if element_count(dims)? != data.len() {
        return Err(ContainerError::DimMismatch("payload length does not match dims".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| ContainerError::DimMismatch(format!("axis {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&DTYPE_F32.to_le_bytes())?;

    let mut meta = [0u8; METADATA_LEN];
    if let Some(g) = grid {
        for (i, v) in g.to_array().iter().enumerate() {
            meta[i * 4..i * 4 + 4].copy_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&meta)?;

    let mut buf = Vec::with_capacity(CHUNK_ELEMS.min(data.len()) * 4);
    for chunk in data.chunks(CHUNK_ELEMS) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ContainerError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_raw<R: Read>(mut r: R) -> Result<RawTensor, ContainerError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ContainerError::TruncatedFile("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let ndims = read_u32(&mut r)? as usize;
    if ndims == 0 || ndims > MAX_DIMS {
        return Err(ContainerError::DimMismatch(format!(
            "header declares {ndims} dims, supported 1..={MAX_DIMS}"
        )));
    }
    let dims = (0..ndims)
        .map(|_| read_u32(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    check_dims(&dims)?;
    let dtype = read_u32(&mut r)?;
    if dtype != DTYPE_F32 {
        return Err(ContainerError::UnsupportedDtype(dtype));
    }

    let mut meta = [0u8; METADATA_LEN];
    r.read_exact(&mut meta)
        .map_err(|_| ContainerError::TruncatedFile("metadata block incomplete".into()))?;
    let grid = if meta.iter().all(|&b| b == 0) {
        None
    } else {
        let f = |i: usize| f32::from_le_bytes(meta[i * 4..i * 4 + 4].try_into().unwrap());
        Some(GridExtents {
            range_min: f(0),
            range_max: f(1),
            az_min: f(2),
            az_max: f(3),
            dop_min: f(4),
            dop_max: f(5),
        })
    };

    let n = element_count(&dims)?;
    let mut data = Vec::with_capacity(n.min(CHUNK_ELEMS));
    let mut buf = vec![0u8; CHUNK_ELEMS.min(n) * 4];
    while data.len() < n {
        let take = (n - data.len()).min(CHUNK_ELEMS);
        let bytes = &mut buf[..take * 4];
        r.read_exact(bytes).map_err(|_| {
            ContainerError::TruncatedFile(format!("payload ends before {n} elements"))
        })?;
        data.extend(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
    }

    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(ContainerError::TrailingData(rest.len()));
    }
    Ok(RawTensor { dims, grid, data })
}

pub fn write_raw_file(path: impl AsRef<Path>, t: &RawTensor) -> Result<(), ContainerError> {
    write_raw(BufWriter::new(File::create(path)?), t)
}

pub fn write_parts_file(
    path: impl AsRef<Path>,
    dims: &[usize],
    data: &[f32],
    grid: Option<GridExtents>,
) -> Result<(), ContainerError> {
    write_parts(BufWriter::new(File::create(path)?), dims, data, grid)
}

pub fn read_raw_file(path: impl AsRef<Path>) -> Result<RawTensor, ContainerError> {
    read_raw(BufReader::new(File::open(path)?))
}
