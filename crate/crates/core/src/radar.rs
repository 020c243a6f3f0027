//! Radar input representation: elevation max-projection, R^4 range
//! compensation, Doppler aggregation and coordinate channels, assembled into
//! the 5-channel and full-Doppler (66-channel) network inputs.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::container::{self, ContainerError, GridExtents};

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("range bin {bin} has non-positive range {range_m} m")]
    NonPositiveRange { bin: usize, range_m: f64 },
    #[error("invalid power value {value} at flat index {index}")]
    InvalidPower { index: usize, value: f32 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// Physical axes of the radar tensor. Bin `i` of an axis with extent
/// `[min, max]` over `n` bins sits at `min + (i + 0.5) * (max - min) / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarGridConfig {
    pub range_min_m: f64,
    pub range_max_m: f64,
    pub az_min_deg: f64,
    pub az_max_deg: f64,
    pub doppler_min_mps: f64,
    pub doppler_max_mps: f64,
    pub doppler_bins: usize,
    pub range_bins: usize,
    pub elevation_bins: usize,
    pub azimuth_bins: usize,
}

impl Default for RadarGridConfig {
    fn default() -> Self {
        Self {
            range_min_m: 0.0,
            range_max_m: 80.0,
            az_min_deg: -53.0,
            az_max_deg: 53.0,
            doppler_min_mps: -32.0,
            doppler_max_mps: 32.0,
            doppler_bins: 64,
            range_bins: 256,
            elevation_bins: 37,
            azimuth_bins: 107,
        }
    }
}

fn bin_center(min: f64, max: f64, n: usize, i: usize) -> f64 {
    min + (i as f64 + 0.5) * (max - min) / n as f64
}

impl RadarGridConfig {
    pub fn validate(&self) -> Result<(), RadarError> {
        let axes = [
            ("range", self.range_min_m, self.range_max_m),
            ("azimuth", self.az_min_deg, self.az_max_deg),
            ("doppler", self.doppler_min_mps, self.doppler_max_mps),
        ];
        for (name, lo, hi) in axes {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(RadarError::InvalidGrid(format!(
                    "{name} axis needs finite min < max, got [{lo}, {hi}]"
                )));
            }
        }
        let bins = [
            ("doppler", self.doppler_bins),
            ("range", self.range_bins),
            ("elevation", self.elevation_bins),
            ("azimuth", self.azimuth_bins),
        ];
        for (name, n) in bins {
            if n == 0 {
                return Err(RadarError::InvalidGrid(format!("{name} bin count must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn range_m(&self, bin: usize) -> f64 {
        bin_center(self.range_min_m, self.range_max_m, self.range_bins, bin)
    }

    pub fn azimuth_deg(&self, bin: usize) -> f64 {
        bin_center(self.az_min_deg, self.az_max_deg, self.azimuth_bins, bin)
    }

    pub fn doppler_mps(&self, bin: usize) -> f64 {
        bin_center(self.doppler_min_mps, self.doppler_max_mps, self.doppler_bins, bin)
    }

    pub fn tesseract_dims(&self) -> [usize; 4] {
        [self.doppler_bins, self.range_bins, self.elevation_bins, self.azimuth_bins]
    }

    pub fn cube_dims(&self) -> [usize; 3] {
        [self.doppler_bins, self.range_bins, self.azimuth_bins]
    }

    pub fn extents(&self) -> GridExtents {
        GridExtents {
            range_min: self.range_min_m as f32,
            range_max: self.range_max_m as f32,
            az_min: self.az_min_deg as f32,
            az_max: self.az_max_deg as f32,
            dop_min: self.doppler_min_mps as f32,
            dop_max: self.doppler_max_mps as f32,
        }
    }

    /// Adopts the physical extents stored in a container header, keeping
    /// bin counts.
    pub fn with_extents(mut self, g: GridExtents) -> Self {
        self.range_min_m = f64::from(g.range_min);
        self.range_max_m = f64::from(g.range_max);
        self.az_min_deg = f64::from(g.az_min);
        self.az_max_deg = f64::from(g.az_max);
        self.doppler_min_mps = f64::from(g.dop_min);
        self.doppler_max_mps = f64::from(g.dop_max);
        self
    }
}

/// R^4 gain relative to the far edge of the range axis.
pub fn r4_gain(range_m: f64, grid: &RadarGridConfig) -> f64 {
    (range_m / grid.range_max_m).powi(4)
}

fn check_power(data: &[f32]) -> Result<(), RadarError> {
    match data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(index) => Err(RadarError::InvalidPower {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}

fn check_len(dims: &[usize], len: usize) -> Result<(), RadarError> {
    let n: usize = dims.iter().product();
    if n != len {
        return Err(RadarError::DimMismatch(format!(
            "dims {dims:?} need {n} values, got {len}"
        )));
    }
    Ok(())
}

/// 4D power tensor, axes (Doppler, range, elevation, azimuth).
#[derive(Debug, Clone, PartialEq)]
pub struct Tesseract {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl Tesseract {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self, RadarError> {
        check_len(&dims, data.len())?;
        check_power(&data)?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn index(&self, d: usize, r: usize, e: usize, a: usize) -> usize {
        let [_, nr, ne, na] = self.dims;
        ((d * nr + r) * ne + e) * na + a
    }

    pub fn get(&self, d: usize, r: usize, e: usize, a: usize) -> f32 {
        self.data[self.index(d, r, e, a)]
    }

    /// Sets one voxel; rejects negative or non-finite power.
    pub fn set(&mut self, d: usize, r: usize, e: usize, a: usize, p: f32) -> Result<(), RadarError> {
        let i = self.index(d, r, e, a);
        check_power(std::slice::from_ref(&p)).map_err(|_| RadarError::InvalidPower { index: i, value: p })?;
        self.data[i] = p;
        Ok(())
    }

    /// Requires the shape to match `grid` exactly.
    pub fn check_grid(&self, grid: &RadarGridConfig) -> Result<(), RadarError> {
        if self.dims != grid.tesseract_dims() {
            return Err(RadarError::DimMismatch(format!(
                "tesseract {:?} vs grid {:?}",
                self.dims,
                grid.tesseract_dims()
            )));
        }
        Ok(())
    }
}

/// Elevation-collapsed cube, axes (Doppler, range, azimuth).
#[derive(Debug, Clone, PartialEq)]
pub struct RaCube {
    dims: [usize; 3],
    data: Vec<f32>,
}

impl RaCube {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self, RadarError> {
        check_len(&dims, data.len())?;
        check_power(&data)?;
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, d: usize, r: usize, a: usize) -> f32 {
        let [_, nr, na] = self.dims;
        self.data[(d * nr + r) * na + a]
    }

    fn check_grid(&self, grid: &RadarGridConfig) -> Result<(), RadarError> {
        if self.dims != grid.cube_dims() {
            return Err(RadarError::DimMismatch(format!(
                "cube {:?} vs grid {:?}",
                self.dims,
                grid.cube_dims()
            )));
        }
        Ok(())
    }
}

/// Per-cell maximum over the elevation axis.
pub fn elevation_max_project(t: &Tesseract) -> RaCube {
    let [nd, nr, ne, na] = t.dims;
    let mut out = vec![0.0f32; nd * nr * na];
    out.par_chunks_mut(na)
        .zip(t.data.par_chunks(ne * na))
        .for_each(|(row, slab)| {
            row.copy_from_slice(&slab[..na]);
            for el in slab.chunks_exact(na).skip(1) {
                for (o, &v) in row.iter_mut().zip(el) {
                    if v > *o {
                        *o = v;
                    }
                }
            }
        });
    RaCube {
        dims: [nd, nr, na],
        data: out,
    }
}

/// Multiplies each range bin by `(range_m / range_max_m)^4`.
pub fn r4_compensate(c: &RaCube, grid: &RadarGridConfig) -> Result<RaCube, RadarError> {
    grid.validate()?;
    c.check_grid(grid)?;
    let gains = range_gains(grid)?;
    let [_, nr, na] = c.dims;
    let mut out = c.data.clone();
    out.par_chunks_mut(na).enumerate().for_each(|(row, cells)| {
        let g = gains[row % nr];
        for v in cells {
            *v *= g;
        }
    });
    Ok(RaCube { dims: c.dims, data: out })
}

fn range_gains(grid: &RadarGridConfig) -> Result<Vec<f32>, RadarError> {
    (0..grid.range_bins)
        .map(|bin| {
            let range_m = grid.range_m(bin);
            if range_m <= 0.0 {
                Err(RadarError::NonPositiveRange { bin, range_m })
            } else {
                Ok(r4_gain(range_m, grid) as f32)
            }
        })
        .collect()
}

/// Range x azimuth planes summarizing the Doppler axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerPlanes {
    pub total_power: Vec<f32>,
    pub mean_velocity: Vec<f32>,
    pub peak_velocity: Vec<f32>,
}

/// Total power, power-weighted mean velocity and peak-bin velocity per cell.
/// Cells without power report zero velocity; argmax ties go to the lowest bin.
pub fn doppler_aggregate(c: &RaCube, grid: &RadarGridConfig) -> Result<DopplerPlanes, RadarError> {
    grid.validate()?;
    c.check_grid(grid)?;
    let [nd, nr, na] = c.dims;
    let velocities: Vec<f64> = (0..nd).map(|d| grid.doppler_mps(d)).collect();
    let (v_lo, v_hi) = (velocities[0], velocities[nd - 1]);

    let mut total = vec![0.0f32; nr * na];
    let mut mean = vec![0.0f32; nr * na];
    let mut peak = vec![0.0f32; nr * na];

    total
        .par_chunks_mut(na)
        .zip(mean.par_chunks_mut(na))
        .zip(peak.par_chunks_mut(na))
        .enumerate()
        .for_each(|(r, ((tot, mv), pv))| {
            let mut sum = vec![0.0f64; na];
            let mut moment = vec![0.0f64; na];
            let mut best = vec![f32::NEG_INFINITY; na];
            let mut best_bin = vec![0usize; na];
            for (d, &v) in velocities.iter().enumerate() {
                let row = &c.data[(d * nr + r) * na..(d * nr + r + 1) * na];
                for a in 0..na {
                    let p = row[a];
                    sum[a] += f64::from(p);
                    moment[a] += v * f64::from(p);
                    if p > best[a] {
                        best[a] = p;
                        best_bin[a] = d;
                    }
                }
            }
            for a in 0..na {
                tot[a] = sum[a] as f32;
                if sum[a] > 0.0 {
                    mv[a] = (moment[a] / sum[a]).clamp(v_lo, v_hi) as f32;
                    pv[a] = velocities[best_bin[a]] as f32;
                }
            }
        });

    Ok(DopplerPlanes {
        total_power: total,
        mean_velocity: mean,
        peak_velocity: peak,
    })
}

/// Metric range (m) and azimuth (deg) planes, each range x azimuth.
pub fn coordinate_channels(grid: &RadarGridConfig) -> Result<(Vec<f32>, Vec<f32>), RadarError> {
    grid.validate()?;
    let (nr, na) = (grid.range_bins, grid.azimuth_bins);
    let az: Vec<f32> = (0..na).map(|a| grid.azimuth_deg(a) as f32).collect();
    let mut range_plane = Vec::with_capacity(nr * na);
    let mut az_plane = Vec::with_capacity(nr * na);
    for r in 0..nr {
        let range_m = grid.range_m(r) as f32;
        range_plane.extend(std::iter::repeat(range_m).take(na));
        az_plane.extend_from_slice(&az);
    }
    Ok((range_plane, az_plane))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputVariant {
    /// `[total power, mean velocity, peak velocity, range, azimuth]`.
    FiveCh,
    /// Every compensated Doppler bin (ascending velocity), then range and azimuth.
    SixtySixCh,
}

impl InputVariant {
    pub fn channels(self, doppler_bins: usize) -> usize {
        match self {
            InputVariant::FiveCh => 5,
            InputVariant::SixtySixCh => doppler_bins + 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputVariant::FiveCh => "5ch",
            InputVariant::SixtySixCh => "66ch",
        }
    }
}

impl std::str::FromStr for InputVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "5ch" | "5" | "five" => Ok(InputVariant::FiveCh),
            "66ch" | "66" | "full" => Ok(InputVariant::SixtySixCh),
            other => Err(format!("unknown input variant `{other}` (expected 5ch or 66ch)")),
        }
    }
}

/// Network input, axes (channel, range, azimuth).
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub variant: InputVariant,
    dims: [usize; 3],
    data: Vec<f32>,
}

impl InputTensor {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        let plane = self.dims[1] * self.dims[2];
        &self.data[ch * plane..(ch + 1) * plane]
    }

    pub fn channel_semantics(&self) -> Vec<String> {
        let mut names: Vec<String> = match self.variant {
            InputVariant::FiveCh => ["total_power_r4", "mean_doppler_mps", "peak_doppler_mps"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            InputVariant::SixtySixCh => (0..self.dims[0] - 2)
                .map(|d| format!("doppler_bin_{d}_r4"))
                .collect(),
        };
        names.push("range_m".into());
        names.push("azimuth_deg".into());
        names
    }

    fn from_raw_parts(variant: InputVariant, dims: [usize; 3], data: Vec<f32>) -> Result<Self, RadarError> {
        check_len(&dims, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(RadarError::InvalidPower {
                index,
                value: data[index],
            });
        }
        Ok(Self { variant, dims, data })
    }
}

/// Compensates the cube, then emits either the Doppler summary or all bins,
/// followed by the two coordinate planes.
pub fn build_input(c: &RaCube, grid: &RadarGridConfig, variant: InputVariant) -> Result<InputTensor, RadarError> {
    let comp = r4_compensate(c, grid)?;
    let (range_plane, az_plane) = coordinate_channels(grid)?;
    let [nd, nr, na] = comp.dims;
    let channels = variant.channels(nd);
    let mut data = Vec::with_capacity(channels * nr * na);
    match variant {
        InputVariant::FiveCh => {
            let planes = doppler_aggregate(&comp, grid)?;
            data.extend_from_slice(&planes.total_power);
            data.extend_from_slice(&planes.mean_velocity);
            data.extend_from_slice(&planes.peak_velocity);
        }
        InputVariant::SixtySixCh => data.extend_from_slice(&comp.data),
    }
    data.extend_from_slice(&range_plane);
    data.extend_from_slice(&az_plane);
    Ok(InputTensor {
        variant,
        dims: [channels, nr, na],
        data,
    })
}

/// Max-projection followed by [`build_input`].
pub fn preprocess(t: &Tesseract, grid: &RadarGridConfig, variant: InputVariant) -> Result<InputTensor, RadarError> {
    grid.validate()?;
    t.check_grid(grid)?;
    build_input(&elevation_max_project(t), grid, variant)
}

/// Any tensor kind the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum RadarTensor {
    Tesseract(Tesseract),
    Cube(RaCube),
    Input(InputTensor),
}

/// Reads a container and classifies it by rank: 4 axes is a tesseract; 3 axes
/// with 5 or 66 leading channels is a network input; other 3-axis tensors are
/// cubes. The header grid, when present, is returned alongside.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<(RadarTensor, Option<GridExtents>), RadarError> {
    let raw = container::read_raw_file(path)?;
    let grid = raw.grid;
    let t = match raw.dims.as_slice() {
        &[d, r, e, a] => RadarTensor::Tesseract(Tesseract::new([d, r, e, a], raw.data)?),
        &[5, r, a] => RadarTensor::Input(InputTensor::from_raw_parts(InputVariant::FiveCh, [5, r, a], raw.data)?),
        &[66, r, a] => RadarTensor::Input(InputTensor::from_raw_parts(InputVariant::SixtySixCh, [66, r, a], raw.data)?),
        &[d, r, a] => RadarTensor::Cube(RaCube::new([d, r, a], raw.data)?),
        other => {
            return Err(RadarError::DimMismatch(format!(
                "expected 3 or 4 axes, found {other:?}"
            )))
        }
    };
    Ok((t, grid))
}

pub fn read_tesseract(path: impl AsRef<Path>) -> Result<(Tesseract, Option<GridExtents>), RadarError> {
    match read_tensor(path)? {
        (RadarTensor::Tesseract(t), g) => Ok((t, g)),
        _ => Err(RadarError::DimMismatch("expected a 4-axis tesseract".into())),
    }
}

pub fn write_tensor(t: &RadarTensor, grid: &RadarGridConfig, path: impl AsRef<Path>) -> Result<(), RadarError> {
    let (dims, data): (&[usize], &[f32]) = match t {
        RadarTensor::Tesseract(t) => (&t.dims, &t.data),
        RadarTensor::Cube(c) => (&c.dims, &c.data),
        RadarTensor::Input(i) => (&i.dims, &i.data),
    };
    container::write_parts_file(path, dims, data, Some(grid.extents()))?;
    Ok(())
}
