//! Run configuration as flat `key = value` text. Every key has a default;
//! the canonical rendering lists all keys and is what reports hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::caption::CaptionFormat;
use crate::diagnostics::{DEFAULT_IDENTICAL_THRESHOLD, DEFAULT_LAYER_NORM_EPS, DEFAULT_NORM_THRESHOLD};
use crate::geometry::{FovLimits, SectorTable};
use crate::metrics::{HallucinationMode, OovMode};
use crate::radar::{InputVariant, RadarGridConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{key} path does not exist: {}", path.display())]
    MissingPath { key: String, path: PathBuf },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: RadarGridConfig,
    pub variant: InputVariant,
    pub top_k: usize,
    pub fov: FovLimits,
    pub sectors: SectorTable,
    pub caption_format: CaptionFormat,
    pub vocab_path: Option<PathBuf>,
    pub manifest_path: Option<PathBuf>,
    pub hallucination: HallucinationMode,
    pub oov: OovMode,
    /// 0 uses every available core.
    pub threads: usize,
    pub norm_threshold: f64,
    pub layer_norm_eps: f64,
    pub identical_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: RadarGridConfig::default(),
            variant: InputVariant::FiveCh,
            top_k: 4,
            fov: FovLimits::default(),
            sectors: SectorTable::default(),
            caption_format: CaptionFormat::Prose,
            vocab_path: None,
            manifest_path: None,
            hallucination: HallucinationMode::Instance,
            oov: OovMode::Drop,
            threads: 0,
            norm_threshold: DEFAULT_NORM_THRESHOLD,
            layer_norm_eps: DEFAULT_LAYER_NORM_EPS,
            identical_threshold: DEFAULT_IDENTICAL_THRESHOLD,
        }
    }
}

/// Averaging scheme used by the metrics; fixed, recorded for attribution.
pub const POOLING: &str = "micro";

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "grid.range_min_m",
        "grid.range_max_m",
        "grid.az_min_deg",
        "grid.az_max_deg",
        "grid.doppler_min_mps",
        "grid.doppler_max_mps",
        "grid.doppler_bins",
        "grid.range_bins",
        "grid.elevation_bins",
        "grid.azimuth_bins",
        "variant",
        "top_k",
        "fov.az_limit_deg",
        "fov.range_limit_m",
        "sectors.ahead_deg",
        "sectors.slight_deg",
        "sectors.side_deg",
        "sectors.fov_deg",
        "caption_format",
        "vocab_path",
        "manifest_path",
        "hallucination",
        "oov",
        "threads",
        "norm_threshold",
        "layer_norm_eps",
        "identical_threshold",
    ];

    /// Keys that cannot change results; left out of the canonical form.
    pub const EXECUTION_KEYS: &'static [&'static str] = &["threads"];

    /// [`RunConfig::KEYS`] minus the execution-only keys.
    pub fn result_keys() -> impl Iterator<Item = &'static str> {
        Self::KEYS.iter().copied().filter(|k| !Self::EXECUTION_KEYS.contains(k))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "grid.range_min_m" => self.grid.range_min_m = parse_value(key, v)?,
            "grid.range_max_m" => self.grid.range_max_m = parse_value(key, v)?,
            "grid.az_min_deg" => self.grid.az_min_deg = parse_value(key, v)?,
            "grid.az_max_deg" => self.grid.az_max_deg = parse_value(key, v)?,
            "grid.doppler_min_mps" => self.grid.doppler_min_mps = parse_value(key, v)?,
            "grid.doppler_max_mps" => self.grid.doppler_max_mps = parse_value(key, v)?,
            "grid.doppler_bins" => self.grid.doppler_bins = parse_value(key, v)?,
            "grid.range_bins" => self.grid.range_bins = parse_value(key, v)?,
            "grid.elevation_bins" => self.grid.elevation_bins = parse_value(key, v)?,
            "grid.azimuth_bins" => self.grid.azimuth_bins = parse_value(key, v)?,
            "variant" => self.variant = parse_value(key, v)?,
            "top_k" => self.top_k = parse_value(key, v)?,
            "fov.az_limit_deg" => self.fov.az_limit_deg = parse_value(key, v)?,
            "fov.range_limit_m" => self.fov.range_limit_m = parse_value(key, v)?,
            "sectors.ahead_deg" => self.sectors.ahead_deg = parse_value(key, v)?,
            "sectors.slight_deg" => self.sectors.slight_deg = parse_value(key, v)?,
            "sectors.side_deg" => self.sectors.side_deg = parse_value(key, v)?,
            "sectors.fov_deg" => self.sectors.fov_deg = parse_value(key, v)?,
            "caption_format" => self.caption_format = parse_value(key, v)?,
            "vocab_path" => self.vocab_path = opt_path(v),
            "manifest_path" => self.manifest_path = opt_path(v),
            "hallucination" => self.hallucination = parse_value(key, v)?,
            "oov" => self.oov = parse_value(key, v)?,
            "threads" => self.threads = parse_value(key, v)?,
            "norm_threshold" => self.norm_threshold = parse_value(key, v)?,
            "layer_norm_eps" => self.layer_norm_eps = parse_value(key, v)?,
            "identical_threshold" => self.identical_threshold = parse_value(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let g = &self.grid;
        Some(match key {
            "grid.range_min_m" => g.range_min_m.to_string(),
            "grid.range_max_m" => g.range_max_m.to_string(),
            "grid.az_min_deg" => g.az_min_deg.to_string(),
            "grid.az_max_deg" => g.az_max_deg.to_string(),
            "grid.doppler_min_mps" => g.doppler_min_mps.to_string(),
            "grid.doppler_max_mps" => g.doppler_max_mps.to_string(),
            "grid.doppler_bins" => g.doppler_bins.to_string(),
            "grid.range_bins" => g.range_bins.to_string(),
            "grid.elevation_bins" => g.elevation_bins.to_string(),
            "grid.azimuth_bins" => g.azimuth_bins.to_string(),
            "variant" => self.variant.as_str().to_string(),
            "top_k" => self.top_k.to_string(),
            "fov.az_limit_deg" => self.fov.az_limit_deg.to_string(),
            "fov.range_limit_m" => self.fov.range_limit_m.to_string(),
            "sectors.ahead_deg" => self.sectors.ahead_deg.to_string(),
            "sectors.slight_deg" => self.sectors.slight_deg.to_string(),
            "sectors.side_deg" => self.sectors.side_deg.to_string(),
            "sectors.fov_deg" => self.sectors.fov_deg.to_string(),
            "caption_format" => self.caption_format.to_string(),
            "vocab_path" => path_text(&self.vocab_path),
            "manifest_path" => path_text(&self.manifest_path),
            "hallucination" => self.hallucination.to_string(),
            "oov" => self.oov.to_string(),
            "threads" => self.threads.to_string(),
            "norm_threshold" => self.norm_threshold.to_string(),
            "layer_norm_eps" => self.layer_norm_eps.to_string(),
            "identical_threshold" => self.identical_threshold.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Malformed { line: i + 1 })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.merge_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Range and value checks; paths are checked by [`RunConfig::check_paths`].
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sectors.validate().map_err(ConfigError::Invalid)?;
        let positive = [
            ("fov.az_limit_deg", self.fov.az_limit_deg),
            ("fov.range_limit_m", self.fov.range_limit_m),
            ("layer_norm_eps", self.layer_norm_eps),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{k} must be positive, got {v}")));
            }
        }
        if self.top_k == 0 {
            return Err(ConfigError::Invalid("top_k must be at least 1".into()));
        }
        if !(self.norm_threshold >= 1.0 && self.norm_threshold.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "norm_threshold must be >= 1, got {}",
                self.norm_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.identical_threshold) {
            return Err(ConfigError::Invalid(format!(
                "identical_threshold must lie in [0, 1], got {}",
                self.identical_threshold
            )));
        }
        Ok(())
    }

    pub fn check_paths(&self) -> Result<(), ConfigError> {
        for (key, p) in [("vocab_path", &self.vocab_path), ("manifest_path", &self.manifest_path)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingPath {
                        key: key.into(),
                        path: p.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Every result key in [`RunConfig::KEYS`] order plus the pooling scheme.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        for k in Self::result_keys() {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("listed key"));
        }
        let _ = writeln!(out, "pooling = {POOLING}");
        out
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_canonical_string().as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}
