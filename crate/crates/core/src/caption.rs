//! Ground-truth caption rendering (prose and structured) and the
//! line-delimited caption file container.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{self, FovLimits, GeometryError, SceneObject, SectorTable};

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("total object count {total} is below the {described} described objects")]
    CountTooSmall { total: usize, described: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("caption for {0} contains a tab or newline")]
    ForbiddenChar(String),
    #[error("duplicate frame key {key} on line {line}")]
    DuplicateKey { line: usize, key: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaptionFormat {
    Prose,
    Structured,
}

impl CaptionFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptionFormat::Prose => "prose",
            CaptionFormat::Structured => "structured",
        }
    }
}

impl fmt::Display for CaptionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaptionFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prose" => Ok(CaptionFormat::Prose),
            "structured" | "json" => Ok(CaptionFormat::Structured),
            other => Err(format!("unknown caption format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtCaption {
    pub frame_key: String,
    pub format: CaptionFormat,
    pub text: String,
    /// Objects in the field of view before top-k truncation.
    pub object_count_total: usize,
}

/// Integer rounding with halves away from zero.
pub fn round_half_away(v: f64) -> i64 {
    v.round() as i64
}

fn article(class: &str) -> &'static str {
    match class.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn check_count(objs: &[SceneObject], total: usize) -> Result<(), CaptionError> {
    if total < objs.len() {
        return Err(CaptionError::CountTooSmall {
            total,
            described: objs.len(),
        });
    }
    Ok(())
}

/// `There are N objects. Closest: a <class> <bearing> at <R> m, ...`
pub fn gen_prose(
    frame_key: &str,
    objs: &[SceneObject],
    total_count: usize,
    sectors: &SectorTable,
) -> Result<GtCaption, CaptionError> {
    check_count(objs, total_count)?;
    let mut text = match total_count {
        0 => "There are no objects.".to_string(),
        1 => "There is 1 object.".to_string(),
        n => format!("There are {n} objects."),
    };
    if !objs.is_empty() {
        let parts = objs
            .iter()
            .map(|o| {
                let sector = sectors.sector(o.azimuth_deg)?;
                Ok(format!(
                    "{} {} {} at {} m",
                    article(&o.class_name),
                    o.class_name,
                    sector.phrase(),
                    round_half_away(o.range_m)
                ))
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;
        text.push_str(" Closest: ");
        text.push_str(&parts.join(", "));
        text.push('.');
    }
    Ok(GtCaption {
        frame_key: frame_key.to_string(),
        format: CaptionFormat::Prose,
        text,
        object_count_total: total_count,
    })
}

/// Compact `{"objects":[{"class":..,"azimuth_deg":..,"range_m":..}]}`.
pub fn gen_structured(frame_key: &str, objs: &[SceneObject], total_count: usize) -> Result<GtCaption, CaptionError> {
    check_count(objs, total_count)?;
    let mut text = String::from("{\"objects\":[");
    for (i, o) in objs.iter().enumerate() {
        if i > 0 {
            text.push(',');
        }
        text.push_str(&format!(
            "{{\"class\":{},\"azimuth_deg\":{},\"range_m\":{}}}",
            serde_json::to_string(&o.class_name).expect("string serializes"),
            round_half_away(o.azimuth_deg),
            round_half_away(o.range_m)
        ));
    }
    text.push_str("]}");
    Ok(GtCaption {
        frame_key: frame_key.to_string(),
        format: CaptionFormat::Structured,
        text,
        object_count_total: total_count,
    })
}

/// FOV filter, range sort, top-k, then render.
pub fn caption_scene(
    frame_key: &str,
    objs: &[SceneObject],
    format: CaptionFormat,
    top_k: usize,
    fov: FovLimits,
    sectors: &SectorTable,
) -> Result<GtCaption, CaptionError> {
    let visible = geometry::fov_filter(objs, fov);
    let described = geometry::select_topk(&visible, top_k);
    match format {
        CaptionFormat::Prose => gen_prose(frame_key, &described, visible.len(), sectors),
        CaptionFormat::Structured => gen_structured(frame_key, &described, visible.len()),
    }
}

/// One line of a caption file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRecord {
    pub frame_key: String,
    pub format: CaptionFormat,
    pub text: String,
}

impl From<GtCaption> for CaptionRecord {
    fn from(c: GtCaption) -> Self {
        Self {
            frame_key: c.frame_key,
            format: c.format,
            text: c.text,
        }
    }
}

/// Parses `frame_key TAB format TAB text` lines. Text runs to the end of the
/// line. Blank lines are skipped; duplicate keys are rejected.
pub fn parse_caption_file(text: &str) -> Result<Vec<CaptionRecord>, CaptionError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let mut parts = raw.splitn(3, '\t');
        let (Some(key), Some(format), Some(body)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CaptionError::Format {
                line,
                reason: "expected frame_key TAB format TAB caption".into(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(CaptionError::Format {
                line,
                reason: "empty frame key".into(),
            });
        }
        let format = format
            .parse()
            .map_err(|reason| CaptionError::Format { line, reason })?;
        if !seen.insert(key.to_string()) {
            return Err(CaptionError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        out.push(CaptionRecord {
            frame_key: key.to_string(),
            format,
            text: body.to_string(),
        });
    }
    Ok(out)
}

pub fn read_caption_file(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>, CaptionError> {
    parse_caption_file(&std::fs::read_to_string(path)?)
}

pub fn format_caption_line(r: &CaptionRecord) -> Result<String, CaptionError> {
    if r.text.contains(['\t', '\n', '\r']) || r.frame_key.contains(['\t', '\n', '\r']) {
        return Err(CaptionError::ForbiddenChar(r.frame_key.clone()));
    }
    Ok(format!("{}\t{}\t{}", r.frame_key, r.format, r.text))
}

pub fn write_caption_file<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a CaptionRecord>,
) -> Result<(), CaptionError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", format_caption_line(r)?)?;
    }
    w.flush()?;
    Ok(())
}
