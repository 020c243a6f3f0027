//! Token-norm statistics against a reference embedding dump, a reference
//! LayerNorm, and the swap-test detector for captioners that ignore their
//! sensor input.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::caption::CaptionRecord;
use crate::container::{self, ContainerError, RawTensor};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("non-finite value at token {token}, dim {dim}")]
    NonFiniteInput { token: usize, dim: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("reference tokens have zero mean norm")]
    ZeroReference,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("caption sets differ in frame keys: {0}")]
    KeyMismatch(String),
    #[error("caption sets are empty")]
    Empty,
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// Dense `n x d` matrix of token embeddings, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>) -> Result<Self, DiagnosticsError> {
        if n == 0 || d == 0 || n.checked_mul(d) != Some(data.len()) {
            return Err(DiagnosticsError::DimMismatch(format!(
                "{n} x {d} matrix with {} values",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiagnosticsError::NonFiniteInput {
                token: i / d,
                dim: i % d,
            });
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, DiagnosticsError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(DiagnosticsError::DimMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn from_raw(t: RawTensor) -> Result<Self, DiagnosticsError> {
        match t.dims[..] {
            [n, d] => Self::new(n, d, t.data),
            _ => Err(DiagnosticsError::DimMismatch(format!(
                "token dump must have 2 axes, got {:?}",
                t.dims
            ))),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DiagnosticsError> {
        Self::from_raw(container::read_raw_file(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DiagnosticsError> {
        container::write_parts_file(path, &[self.n, self.d], &self.data, None)?;
        Ok(())
    }

    pub fn tokens(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormStats {
    pub mean_l2: f64,
    /// Population standard deviation.
    pub std_l2: f64,
    pub min_l2: f64,
    pub max_l2: f64,
}

fn l2(row: &[f32]) -> f64 {
    row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

pub fn token_norm_stats(t: &TokenMatrix) -> NormStats {
    let norms: Vec<f64> = t.rows().map(l2).collect();
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    NormStats {
        mean_l2: mean,
        std_l2: var.sqrt(),
        min_l2: norms.iter().copied().fold(f64::INFINITY, f64::min),
        max_l2: norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub const DEFAULT_NORM_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    pub mean_l2: f64,
    pub std_l2: f64,
    pub min_l2: f64,
    pub max_l2: f64,
    pub reference_mean_l2: f64,
    pub ratio: f64,
    pub flagged: bool,
    pub threshold: f64,
}

/// Flags when the token mean norm is more than `threshold` times larger or
/// smaller than the reference mean norm.
pub fn norm_mismatch_check(
    tokens: &TokenMatrix,
    reference: &TokenMatrix,
    threshold: f64,
) -> Result<NormReport, DiagnosticsError> {
    if !(threshold >= 1.0 && threshold.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "norm threshold must be finite and >= 1, got {threshold}"
        )));
    }
    if tokens.d != reference.d {
        return Err(DiagnosticsError::DimMismatch(format!(
            "tokens have d = {}, reference d = {}",
            tokens.d, reference.d
        )));
    }
    let s = token_norm_stats(tokens);
    let r = token_norm_stats(reference);
    if r.mean_l2 == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    let ratio = s.mean_l2 / r.mean_l2;
    Ok(NormReport {
        mean_l2: s.mean_l2,
        std_l2: s.std_l2,
        min_l2: s.min_l2,
        max_l2: s.max_l2,
        reference_mean_l2: r.mean_l2,
        ratio,
        flagged: ratio > threshold || ratio < 1.0 / threshold,
        threshold,
    })
}

pub const DEFAULT_LAYER_NORM_EPS: f64 = 1e-5;

/// Per-token LayerNorm with unit gain and zero bias, computed in f64.
pub fn layer_norm(t: &TokenMatrix, eps: f64) -> Result<TokenMatrix, DiagnosticsError> {
    if t.d < 2 {
        return Err(DiagnosticsError::DimMismatch(format!("layer norm needs d >= 2, got {}", t.d)));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let d = t.d as f64;
    let mut out = Vec::with_capacity(t.data.len());
    for row in t.rows() {
        let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / d;
        let var = row.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + eps).sqrt();
        out.extend(row.iter().map(|&v| ((f64::from(v) - mean) * inv) as f32));
    }
    TokenMatrix::new(t.n, t.d, out)
}

pub const DEFAULT_IDENTICAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlindnessReport {
    pub frame_count: usize,
    pub identical_fraction_zero: f64,
    pub identical_fraction_noise: f64,
    pub mean_norm_edit_distance_zero: f64,
    pub mean_norm_edit_distance_noise: f64,
    pub identical_threshold: f64,
    pub flagged: bool,
}

/// Levenshtein distance over chars divided by the longer length; 0 for two
/// empty strings.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

fn keyed<'a>(name: &str, recs: &'a [CaptionRecord]) -> Result<BTreeMap<&'a str, &'a str>, DiagnosticsError> {
    let mut m = BTreeMap::new();
    for r in recs {
        if m.insert(r.frame_key.as_str(), r.text.as_str()).is_some() {
            return Err(DiagnosticsError::KeyMismatch(format!(
                "{name} repeats frame {}",
                r.frame_key
            )));
        }
    }
    Ok(m)
}

fn same_keys(name: &str, a: &BTreeMap<&str, &str>, b: &BTreeMap<&str, &str>) -> Result<(), DiagnosticsError> {
    if let Some(k) = a.keys().find(|k| !b.contains_key(*k)) {
        return Err(DiagnosticsError::KeyMismatch(format!("{name} lacks frame {k}")));
    }
    if let Some(k) = b.keys().find(|k| !a.contains_key(*k)) {
        return Err(DiagnosticsError::KeyMismatch(format!("{name} has extra frame {k}")));
    }
    Ok(())
}

/// Compares captions produced from real input against captions produced
/// from zeroed and from noise input, frame by frame.
pub fn swap_test(
    real: &[CaptionRecord],
    zeros: &[CaptionRecord],
    noise: &[CaptionRecord],
    identical_threshold: f64,
) -> Result<BlindnessReport, DiagnosticsError> {
    if !(0.0..=1.0).contains(&identical_threshold) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "identical threshold must lie in [0, 1], got {identical_threshold}"
        )));
    }
    let real = keyed("real", real)?;
    let zeros = keyed("zeros", zeros)?;
    let noise = keyed("noise", noise)?;
    same_keys("zeros", &real, &zeros)?;
    same_keys("noise", &real, &noise)?;
    if real.is_empty() {
        return Err(DiagnosticsError::Empty);
    }

    let (mut same_z, mut same_n, mut dist_z, mut dist_n) = (0usize, 0usize, 0.0, 0.0);
    for (key, text) in &real {
        let (z, n) = (zeros[key], noise[key]);
        same_z += usize::from(*text == z);
        same_n += usize::from(*text == n);
        dist_z += normalized_edit_distance(text, z);
        dist_n += normalized_edit_distance(text, n);
    }
    let count = real.len() as f64;
    let fz = same_z as f64 / count;
    let fn_ = same_n as f64 / count;
    Ok(BlindnessReport {
        frame_count: real.len(),
        identical_fraction_zero: fz,
        identical_fraction_noise: fn_,
        mean_norm_edit_distance_zero: dist_z / count,
        mean_norm_edit_distance_noise: dist_n / count,
        identical_threshold,
        flagged: fz >= identical_threshold || fn_ >= identical_threshold,
    })
}
