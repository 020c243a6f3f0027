//! Dataset manifest: per-sequence metadata (weather, road, time of day,
//! split) used to select frames and to stratify evaluation results.
//!
//! The on-disk format is one record per line,
//! `seq_id|frame_count|object_count|weather|road|time|split|zero_shot`,
//! with `#` comment lines. A comment of the form `# schema_version=N`
//! sets the schema version (default 1).

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// The K-RADAR sequence split shipped with the crate.
pub const KRADAR_SPLIT: &str = include_str!("../data/kradar_split.manifest");

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: malformed manifest record: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("line {line}: duplicate sequence {seq_id}")]
    DuplicateSequence { line: usize, seq_id: u32 },
    #[error("line {line}: unknown {field} value `{value}`")]
    UnknownEnumValue {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("unknown sequence {0}")]
    UnknownSequence(u32),
    #[error("malformed frame key `{0}` (expected seqID_frameIndex)")]
    BadFrameKey(String),
    #[error("frame {key} out of range: sequence has {frame_count} frames")]
    FrameOutOfRange { key: FrameKey, frame_count: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! text_enum {
    ($(#[$meta:meta])* $name:ident, $field:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            fn parse_field(s: &str, line: usize) -> Result<Self, ManifestError> {
                s.parse().map_err(|_| ManifestError::UnknownEnumValue {
                    line,
                    field: $field,
                    value: s.to_string(),
                })
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{}`", $field, other)),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

text_enum!(
    /// Weather condition of a recording sequence.
    Weather, "weather", {
        Normal => "normal",
        Rain => "rain",
        Sleet => "sleet",
        Fog => "fog",
        LightSnow => "light_snow",
        HeavySnow => "heavy_snow",
    }
);

text_enum!(TimeOfDay, "time", { Day => "day", Night => "night" });

text_enum!(Split, "split", { Train => "train", Val => "val", Test => "test" });

/// Frame address within the dataset. Rendered as `seqID_frameIndex`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub seq_id: u32,
    pub frame_index: u32,
}

impl FrameKey {
    pub fn new(seq_id: u32, frame_index: u32) -> Self {
        Self {
            seq_id,
            frame_index,
        }
    }
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.seq_id, self.frame_index)
    }
}

impl FromStr for FrameKey {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ManifestError::BadFrameKey(s.to_string());
        let (seq, frame) = s.trim().split_once('_').ok_or_else(bad)?;
        Ok(FrameKey {
            seq_id: seq.parse().map_err(|_| bad())?,
            frame_index: frame.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceMeta {
    pub seq_id: u32,
    pub frame_count: u32,
    pub object_count: u32,
    pub weather: Weather,
    pub road: String,
    pub time_of_day: TimeOfDay,
    pub split: Split,
    pub zero_shot_weather: bool,
}

/// Validated manifest. Sequences are kept sorted by `seq_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub schema_version: u32,
    sequences: Vec<SequenceMeta>,
}

impl Manifest {
    pub fn new(schema_version: u32, mut sequences: Vec<SequenceMeta>) -> Result<Self, ManifestError> {
        sequences.sort_by_key(|s| s.seq_id);
        for (i, pair) in sequences.windows(2).enumerate() {
            if pair[0].seq_id == pair[1].seq_id {
                return Err(ManifestError::DuplicateSequence {
                    line: i + 2,
                    seq_id: pair[1].seq_id,
                });
            }
        }
        for s in &sequences {
            if s.frame_count == 0 {
                return Err(ManifestError::MalformedManifest {
                    line: 0,
                    reason: format!("sequence {} has zero frames", s.seq_id),
                });
            }
        }
        Ok(Self {
            schema_version,
            sequences,
        })
    }

    /// The shipped K-RADAR split.
    pub fn kradar() -> Self {
        KRADAR_SPLIT.parse().expect("shipped manifest is valid")
    }

    pub fn sequences(&self) -> &[SequenceMeta] {
        &self.sequences
    }

    pub fn sequence(&self, seq_id: u32) -> Result<&SequenceMeta, ManifestError> {
        self.sequences
            .binary_search_by_key(&seq_id, |s| s.seq_id)
            .map(|i| &self.sequences[i])
            .map_err(|_| ManifestError::UnknownSequence(seq_id))
    }

    pub fn weather_of(&self, seq_id: u32) -> Result<Weather, ManifestError> {
        self.sequence(seq_id).map(|s| s.weather)
    }

    /// Resolves a frame key to its sequence, checking the frame index.
    pub fn resolve(&self, key: FrameKey) -> Result<&SequenceMeta, ManifestError> {
        let seq = self.sequence(key.seq_id)?;
        if key.frame_index >= seq.frame_count {
            return Err(ManifestError::FrameOutOfRange {
                key,
                frame_count: seq.frame_count,
            });
        }
        Ok(seq)
    }

    /// All frames of a split, ascending by sequence then frame index.
    /// Frame indices run from 0 to `frame_count - 1`.
    pub fn frames_of_split(&self, split: Split) -> Vec<FrameKey> {
        self.sequences
            .iter()
            .filter(|s| s.split == split)
            .flat_map(|s| (0..s.frame_count).map(move |f| FrameKey::new(s.seq_id, f)))
            .collect()
    }

    pub fn split_frame_total(&self, split: Split) -> u64 {
        self.sequences
            .iter()
            .filter(|s| s.split == split)
            .map(|s| u64::from(s.frame_count))
            .sum()
    }

    pub fn split_sequence_ids(&self, split: Split) -> Vec<u32> {
        self.sequences
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.seq_id)
            .collect()
    }

    pub fn weathers_of_split(&self, split: Split) -> BTreeSet<Weather> {
        self.sequences
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.weather)
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Canonical serialization: version comment, then one record per line in
    /// ascending `seq_id` order.
    pub fn to_canonical_string(&self) -> String {
        let mut out = format!(
            "# seq_id|frame_count|object_count|weather|road|time|split|zero_shot\n# schema_version={}\n",
            self.schema_version
        );
        for s in &self.sequences {
            out.push_str(&format!(
                "{}|{}|{}|{}|{}|{}|{}|{}\n",
                s.seq_id,
                s.frame_count,
                s.object_count,
                s.weather,
                s.road,
                s.time_of_day,
                s.split,
                u8::from(s.zero_shot_weather)
            ));
        }
        out
    }
}

impl FromStr for Manifest {
    type Err = ManifestError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut schema_version = SCHEMA_VERSION;
        let mut sequences: Vec<SequenceMeta> = Vec::new();
        let mut seen = std::collections::HashMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("schema_version=") {
                    schema_version = v.trim().parse().map_err(|_| ManifestError::MalformedManifest {
                        line,
                        reason: format!("bad schema_version `{}`", v.trim()),
                    })?;
                }
                continue;
            }
            let meta = parse_record(trimmed, line)?;
            if seen.insert(meta.seq_id, line).is_some() {
                return Err(ManifestError::DuplicateSequence {
                    line,
                    seq_id: meta.seq_id,
                });
            }
            sequences.push(meta);
        }
        Manifest::new(schema_version, sequences)
    }
}

fn parse_record(line_text: &str, line: usize) -> Result<SequenceMeta, ManifestError> {
    let fields: Vec<&str> = line_text.split('|').map(str::trim).collect();
    if fields.len() != 8 {
        return Err(ManifestError::MalformedManifest {
            line,
            reason: format!("expected 8 `|`-separated fields, found {}", fields.len()),
        });
    }
    let int = |s: &str, name: &str| -> Result<u32, ManifestError> {
        s.parse().map_err(|_| ManifestError::MalformedManifest {
            line,
            reason: format!("{name} `{s}` is not a non-negative integer"),
        })
    };
    let frame_count = int(fields[1], "frame_count")?;
    if frame_count == 0 {
        return Err(ManifestError::MalformedManifest {
            line,
            reason: "frame_count must be positive".into(),
        });
    }
    if fields[4].is_empty() {
        return Err(ManifestError::MalformedManifest {
            line,
            reason: "empty road field".into(),
        });
    }
    let zero_shot_weather = match fields[7] {
        "0" => false,
        "1" => true,
        other => {
            return Err(ManifestError::UnknownEnumValue {
                line,
                field: "zero_shot",
                value: other.to_string(),
            })
        }
    };
    Ok(SequenceMeta {
        seq_id: int(fields[0], "seq_id")?,
        frame_count,
        object_count: int(fields[2], "object_count")?,
        weather: Weather::parse_field(fields[3], line)?,
        road: fields[4].to_string(),
        time_of_day: TimeOfDay::parse_field(fields[5], line)?,
        split: Split::parse_field(fields[6], line)?,
        zero_shot_weather,
    })
}
