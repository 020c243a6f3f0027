//! Scene geometry: box labels to polar objects, the radar field-of-view
//! filter, range-ordered top-k selection and bearing sectors.
//!
//! Azimuth is measured with x forward and y left, so positive azimuth is to
//! the left of the vehicle.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::FrameKey;
use crate::vocab::ClassVocabulary;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("azimuth {0} deg is outside the field of view")]
    OutOfFov(f64),
    #[error("class `{0}` is not in the vocabulary")]
    UnknownClass(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("line {line}: {reason}")]
    LabelFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 3D bounding box label in the ego frame (x forward, y left, z up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    #[serde(rename = "class")]
    pub class_label: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.class_label.trim().is_empty() {
            return Err(GeometryError::InvalidBox("empty class label".into()));
        }
        let dims_ok = [self.l, self.w, self.h].iter().all(|v| v.is_finite() && *v > 0.0);
        let pos_ok = [self.x, self.y, self.z, self.yaw].iter().all(|v| v.is_finite());
        if !(dims_ok && pos_ok) {
            return Err(GeometryError::InvalidBox(format!(
                "{}: non-finite position or non-positive size",
                self.class_label
            )));
        }
        Ok(())
    }
}

/// A classified object in polar ego coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class_name: String,
    pub range_m: f64,
    pub azimuth_deg: f64,
}

impl SceneObject {
    pub fn new(class_name: impl Into<String>, range_m: f64, azimuth_deg: f64) -> Self {
        Self {
            class_name: class_name.into(),
            range_m,
            azimuth_deg,
        }
    }
}

/// Ground-plane range and azimuth of the box center, class canonicalized.
pub fn to_polar(b: &Box3D, vocab: &ClassVocabulary) -> Result<SceneObject, GeometryError> {
    b.validate()?;
    let class = vocab
        .normalize(&b.class_label)
        .ok_or_else(|| GeometryError::UnknownClass(b.class_label.clone()))?;
    Ok(SceneObject {
        class_name: class.to_string(),
        range_m: b.x.hypot(b.y),
        azimuth_deg: b.y.atan2(b.x).to_degrees(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovLimits {
    pub az_limit_deg: f64,
    pub range_limit_m: f64,
}

impl Default for FovLimits {
    fn default() -> Self {
        Self {
            az_limit_deg: 53.0,
            range_limit_m: 80.0,
        }
    }
}

impl FovLimits {
    pub fn contains(&self, o: &SceneObject) -> bool {
        o.azimuth_deg.abs() <= self.az_limit_deg && o.range_m <= self.range_limit_m
    }
}

/// Keeps objects inside the field of view; both limits are inclusive.
pub fn fov_filter(objs: &[SceneObject], fov: FovLimits) -> Vec<SceneObject> {
    objs.iter().filter(|o| fov.contains(o)).cloned().collect()
}

/// Total order used for range sorting: range, then |azimuth|, then class,
/// then signed azimuth.
pub fn range_order(a: &SceneObject, b: &SceneObject) -> Ordering {
    a.range_m
        .total_cmp(&b.range_m)
        .then(a.azimuth_deg.abs().total_cmp(&b.azimuth_deg.abs()))
        .then_with(|| a.class_name.cmp(&b.class_name))
        .then(a.azimuth_deg.total_cmp(&b.azimuth_deg))
}

/// The `k` nearest objects, nearest first.
pub fn select_topk(objs: &[SceneObject], k: usize) -> Vec<SceneObject> {
    let mut sorted = objs.to_vec();
    sorted.sort_by(range_order);
    sorted.truncate(k);
    sorted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BearingSector {
    FarLeft,
    Left,
    SlightlyLeft,
    Ahead,
    SlightlyRight,
    Right,
    FarRight,
}

impl BearingSector {
    pub const ALL: [BearingSector; 7] = [
        BearingSector::FarLeft,
        BearingSector::Left,
        BearingSector::SlightlyLeft,
        BearingSector::Ahead,
        BearingSector::SlightlyRight,
        BearingSector::Right,
        BearingSector::FarRight,
    ];

    /// Caption phrase; a bijection with the sectors.
    pub fn phrase(self) -> &'static str {
        match self {
            BearingSector::FarLeft => "far to the left",
            BearingSector::Left => "to the left",
            BearingSector::SlightlyLeft => "slightly to the left",
            BearingSector::Ahead => "straight ahead",
            BearingSector::SlightlyRight => "slightly to the right",
            BearingSector::Right => "to the right",
            BearingSector::FarRight => "far to the right",
        }
    }

    pub fn from_phrase(phrase: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.phrase() == phrase)
    }

    pub fn mirror(self) -> Self {
        match self {
            BearingSector::FarLeft => BearingSector::FarRight,
            BearingSector::Left => BearingSector::Right,
            BearingSector::SlightlyLeft => BearingSector::SlightlyRight,
            BearingSector::Ahead => BearingSector::Ahead,
            BearingSector::SlightlyRight => BearingSector::SlightlyLeft,
            BearingSector::Right => BearingSector::Left,
            BearingSector::FarRight => BearingSector::FarLeft,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BearingSector::FarLeft => "far_left",
            BearingSector::Left => "left",
            BearingSector::SlightlyLeft => "slightly_left",
            BearingSector::Ahead => "ahead",
            BearingSector::SlightlyRight => "slightly_right",
            BearingSector::Right => "right",
            BearingSector::FarRight => "far_right",
        }
    }
}

impl fmt::Display for BearingSector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BearingSector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown bearing sector `{s}`"))
    }
}

/// Sector boundaries by absolute azimuth. A sector includes its inner
/// boundary: `|az| < ahead` is ahead, `ahead <= |az| < slight` is slightly
/// left/right, `slight <= |az| < side` is left/right, and
/// `side <= |az| <= fov` is far left/right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorTable {
    pub ahead_deg: f64,
    pub slight_deg: f64,
    pub side_deg: f64,
    pub fov_deg: f64,
}

impl Default for SectorTable {
    fn default() -> Self {
        Self {
            ahead_deg: 7.5,
            slight_deg: 22.5,
            side_deg: 40.0,
            fov_deg: 53.0,
        }
    }
}

impl SectorTable {
    pub fn validate(&self) -> Result<(), String> {
        let b = [self.ahead_deg, self.slight_deg, self.side_deg, self.fov_deg];
        if b[0] > 0.0 && b.windows(2).all(|w| w[0] < w[1]) && b.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(format!("sector boundaries must increase strictly from 0: {b:?}"))
        }
    }

    pub fn sector(&self, azimuth_deg: f64) -> Result<BearingSector, GeometryError> {
        let mag = azimuth_deg.abs();
        if !(mag <= self.fov_deg) {
            return Err(GeometryError::OutOfFov(azimuth_deg));
        }
        if mag < self.ahead_deg {
            return Ok(BearingSector::Ahead);
        }
        let left = azimuth_deg > 0.0;
        let sector = if mag < self.slight_deg {
            if left { BearingSector::SlightlyLeft } else { BearingSector::SlightlyRight }
        } else if mag < self.side_deg {
            if left { BearingSector::Left } else { BearingSector::Right }
        } else if left {
            BearingSector::FarLeft
        } else {
            BearingSector::FarRight
        };
        Ok(sector)
    }
}

/// Sector under the default boundary table.
pub fn bearing_sector(azimuth_deg: f64) -> Result<BearingSector, GeometryError> {
    SectorTable::default().sector(azimuth_deg)
}

/// One line of a label file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFrame {
    pub key: FrameKey,
    pub boxes: Vec<Box3D>,
}

/// Parses `frame_key TAB [box, ...]` records. Blank lines are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<LabelFrame>, GeometryError> {
    let mut frames = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |reason: String| GeometryError::LabelFormat { line, reason };
        let (key, json) = raw
            .split_once('\t')
            .ok_or_else(|| err("missing TAB after frame key".into()))?;
        let key: FrameKey = key.parse().map_err(|e| err(format!("{e}")))?;
        let boxes: Vec<Box3D> = serde_json::from_str(json).map_err(|e| err(e.to_string()))?;
        for b in &boxes {
            b.validate().map_err(|e| err(e.to_string()))?;
        }
        frames.push(LabelFrame { key, boxes });
    }
    Ok(frames)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelFrame>, GeometryError> {
    parse_labels(&std::fs::read_to_string(path)?)
}

pub fn format_label_line(frame: &LabelFrame) -> String {
    format!(
        "{}\t{}",
        frame.key,
        serde_json::to_string(&frame.boxes).expect("boxes serialize")
    )
}
