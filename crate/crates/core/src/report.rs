//! Metric reports: line-delimited `(group, metric, value)` CSV records, a
//! fixed-row text table, and per-group CSV for plotting.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::config::{RunConfig, POOLING};
use crate::metrics::{AggregateMetrics, GroupLabel};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report has no metric groups")]
    Empty,
}

pub const OVERALL: &str = "overall";
pub const META: &str = "meta";
pub const MISSING: &str = "NA";

/// Table rows: record metric name and display label.
pub const TABLE_ROWS: &[(&str, &str)] = &[
    ("class_f1", "Class F1"),
    ("precision", "Precision"),
    ("recall", "Recall"),
    ("range_mae_m", "Range MAE (m)"),
    ("bearing_acc", "Bearing acc."),
    ("azimuth_mae_deg", "Azimuth MAE (deg)"),
    ("hallucination_rate", "Hallucination"),
];

const GROUP_CSV_METRICS: &[&str] = &[
    "frame_count",
    "class_f1",
    "precision",
    "recall",
    "range_mae_m",
    "bearing_acc",
    "azimuth_mae_deg",
    "hallucination_rate",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricRecord {
    pub group: String,
    pub metric: String,
    pub value: String,
}

impl MetricRecord {
    pub fn new(group: &str, metric: &str, value: impl Into<String>) -> Self {
        Self {
            group: group.into(),
            metric: metric.into(),
            value: value.into(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |v| v.to_string())
}

/// Group name for a stratum, e.g. `weather:fog`.
pub fn stratum_group(label: GroupLabel) -> String {
    let kind = match label {
        GroupLabel::Weather(_) => "weather",
        GroupLabel::TimeOfDay(_) => "time",
        GroupLabel::Split(_) => "split",
        GroupLabel::ZeroShot(_) => "zero_shot",
    };
    format!("{kind}:{label}")
}

pub fn metric_records(group: &str, m: &AggregateMetrics) -> Vec<MetricRecord> {
    let r = |k: &str, v: String| MetricRecord::new(group, k, v);
    vec![
        r("frame_count", m.frame_count.to_string()),
        r("tp", m.tp.to_string()),
        r("pred_count", m.pred_count.to_string()),
        r("gt_count", m.gt_count.to_string()),
        r("class_f1", m.f1.to_string()),
        r("precision", m.precision.to_string()),
        r("precision_defined", m.precision_defined.to_string()),
        r("recall", m.recall.to_string()),
        r("range_mae_m", opt(m.range_mae_m)),
        r("bearing_acc", opt(m.bearing_acc)),
        r("azimuth_mae_deg", opt(m.azimuth_mae_deg)),
        r("hallucination_rate", m.hallucination_rate.to_string()),
    ]
}

/// Effective configuration, its hash and the pooling scheme, plus an
/// optional caller-supplied timestamp.
pub fn meta_records(config: &RunConfig, stamp: Option<&str>) -> Vec<MetricRecord> {
    let mut out = vec![
        MetricRecord::new(META, "config_hash", config.hash()),
        MetricRecord::new(META, "pooling", POOLING),
    ];
    for k in RunConfig::result_keys() {
        out.push(MetricRecord::new(META, &format!("config.{k}"), config.get(k).unwrap_or_default()));
    }
    if let Some(s) = stamp {
        out.push(MetricRecord::new(META, "stamp", s));
    }
    out
}

pub fn write_records<W: Write>(w: W, records: &[MetricRecord]) -> Result<(), ReportError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["group", "metric", "value"])?;
    for r in records {
        csv.write_record([&r.group, &r.metric, &r.value])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<MetricRecord>, ReportError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row?;
        out.push(MetricRecord::new(
            row.get(0).unwrap_or(""),
            row.get(1).unwrap_or(""),
            row.get(2).unwrap_or(""),
        ));
    }
    Ok(out)
}

/// Metric groups in first-appearance order, excluding metadata.
fn groups(records: &[MetricRecord]) -> Vec<(&str, BTreeMap<&str, &str>)> {
    let mut out: Vec<(&str, BTreeMap<&str, &str>)> = Vec::new();
    for r in records.iter().filter(|r| r.group != META) {
        match out.iter_mut().find(|(g, _)| *g == r.group) {
            Some((_, m)) => {
                m.insert(&r.metric, &r.value);
            }
            None => out.push((&r.group, BTreeMap::from([(r.metric.as_str(), r.value.as_str())]))),
        }
    }
    out
}

fn cell(v: Option<&&str>) -> String {
    match v.and_then(|s| s.parse::<f64>().ok()) {
        Some(x) => format!("{x:.3}"),
        None => "---".into(),
    }
}

/// Human-readable table, one column per group.
pub fn render_table(records: &[MetricRecord]) -> Result<String, ReportError> {
    let groups = groups(records);
    if groups.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut out = String::new();
    for r in records.iter().filter(|r| r.group == META && !r.metric.starts_with("config.")) {
        out.push_str(&format!("# {}: {}\n", r.metric, r.value));
    }
    let label_w = TABLE_ROWS.iter().map(|(_, l)| l.len()).max().unwrap_or(0).max("Metric".len());
    let widths: Vec<usize> = groups.iter().map(|(g, _)| g.len().max(7)).collect();

    let mut line = format!("{:<label_w$}", "Metric");
    for ((g, _), w) in groups.iter().zip(&widths) {
        line.push_str(&format!(" | {g:>w$}"));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    let rule_len = label_w + widths.iter().map(|w| w + 3).sum::<usize>();
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');
    for (metric, label) in TABLE_ROWS {
        let mut line = format!("{label:<label_w$}");
        for ((_, m), w) in groups.iter().zip(&widths) {
            line.push_str(&format!(" | {:>w$}", cell(m.get(metric))));
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// One CSV row per group whose name starts with `prefix:`, in record order.
pub fn write_group_csv<W: Write>(w: W, records: &[MetricRecord], prefix: &str) -> Result<usize, ReportError> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec![prefix];
    header.extend_from_slice(GROUP_CSV_METRICS);
    csv.write_record(&header)?;
    let mut rows = 0;
    let tag = format!("{prefix}:");
    for (g, m) in groups(records) {
        let Some(name) = g.strip_prefix(&tag) else { continue };
        let mut row = vec![name.to_string()];
        row.extend(GROUP_CSV_METRICS.iter().map(|k| m.get(k).unwrap_or(&MISSING).to_string()));
        csv.write_record(&row)?;
        rows += 1;
    }
    csv.flush()?;
    Ok(rows)
}
