//! Caption-as-detection metrics: per-frame multiset class matching,
//! micro-pooled precision/recall/F1, range and azimuth errors over matched
//! pairs, bearing-sector accuracy, hallucination rate, and stratified
//! aggregation over manifest attributes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::caption::CaptionRecord;
use crate::manifest::{FrameKey, Manifest, ManifestError, Split, TimeOfDay, Weather};
use crate::parse::{CaptionParser, ParsedPrediction, PredObject};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no frames to aggregate")]
    EmptyEvaluation,
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("prediction for {0} has no ground truth")]
    UnmatchedPrediction(String),
}

/// How out-of-vocabulary predicted classes are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OovMode {
    /// Ignored entirely.
    #[default]
    Drop,
    /// Counted as predictions that match nothing and are hallucinated.
    Penalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationMode {
    /// Each predicted object counts once.
    #[default]
    Instance,
    /// Distinct predicted class types per frame.
    ClassLevel,
}

impl std::str::FromStr for OovMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop" => Ok(OovMode::Drop),
            "penalize" => Ok(OovMode::Penalize),
            o => Err(format!("unknown oov mode `{o}` (drop|penalize)")),
        }
    }
}

impl std::str::FromStr for HallucinationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instance" => Ok(HallucinationMode::Instance),
            "class" | "class_level" | "class-level" => Ok(HallucinationMode::ClassLevel),
            o => Err(format!("unknown hallucination mode `{o}` (instance|class)")),
        }
    }
}

impl fmt::Display for OovMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovMode::Drop => "drop",
            OovMode::Penalize => "penalize",
        })
    }
}

impl fmt::Display for HallucinationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HallucinationMode::Instance => "instance",
            HallucinationMode::ClassLevel => "class",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEval {
    pub frame_key: String,
    pub tp: usize,
    pub pred_count: usize,
    pub gt_count: usize,
    /// `(prediction, ground truth)` pairs; one per true positive.
    pub matched_pairs: Vec<(PredObject, PredObject)>,
    pub hallucinated_count: usize,
    pub pred_class_count: usize,
    pub hallucinated_class_count: usize,
    pub range_abs_errors: Vec<f64>,
    pub az_abs_errors: Vec<f64>,
    pub sector_hits: usize,
    pub sector_total: usize,
}

/// Sort key: range, azimuth, sector; missing values last.
fn object_order(a: &PredObject, b: &PredObject) -> Ordering {
    fn opt(a: Option<f64>, b: Option<f64>) -> Ordering {
        match (a, b) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    }
    opt(a.range_m, b.range_m)
        .then(opt(a.azimuth_deg, b.azimuth_deg))
        .then(a.sector.cmp(&b.sector))
}

/// Minimum-cost order-preserving matching of every element of the shorter
/// sorted list into the longer one, cost `|a - b|`. Returns index pairs
/// `(short, long)`. With equal lengths this is the plain sorted pairing.
fn monotone_assignment(short: &[f64], long: &[f64]) -> Vec<(usize, usize)> {
    let (s, l) = (short.len(), long.len());
    debug_assert!(s <= l);
    if s == 0 {
        return Vec::new();
    }
    if s == l {
        return (0..s).map(|i| (i, i)).collect();
    }
    // cost[i][j]: best cost placing short[..i] into long[..j].
    let mut cost = vec![vec![f64::INFINITY; l + 1]; s + 1];
    cost[0].iter_mut().for_each(|c| *c = 0.0);
    for i in 1..=s {
        for j in i..=l {
            let take = cost[i - 1][j - 1] + (short[i - 1] - long[j - 1]).abs();
            let skip = cost[i][j - 1];
            cost[i][j] = if take <= skip { take } else { skip };
        }
    }
    let mut pairs = Vec::with_capacity(s);
    let (mut i, mut j) = (s, l);
    while i > 0 {
        let take = cost[i - 1][j - 1] + (short[i - 1] - long[j - 1]).abs();
        if j == i || take <= cost[i][j - 1] {
            pairs.push((i - 1, j - 1));
            i -= 1;
        }
        j -= 1;
    }
    pairs.reverse();
    pairs
}

/// Pairs equal-class objects. Ranged objects are matched by
/// [`monotone_assignment`]; remaining objects fill the rest of the
/// `min(|preds|, |gts|)` pairs in sorted order.
fn pair_class<'a>(preds: &[&'a PredObject], gts: &[&'a PredObject]) -> Vec<(&'a PredObject, &'a PredObject)> {
    let ranged = |v: &[&'a PredObject]| -> usize { v.iter().take_while(|o| o.range_m.is_some()).count() };
    let (rp, rg) = (ranged(preds), ranged(gts));
    let pr: Vec<f64> = preds[..rp].iter().map(|o| o.range_m.unwrap()).collect();
    let gr: Vec<f64> = gts[..rg].iter().map(|o| o.range_m.unwrap()).collect();

    let idx = if rp <= rg {
        monotone_assignment(&pr, &gr)
    } else {
        monotone_assignment(&gr, &pr).into_iter().map(|(g, p)| (p, g)).collect()
    };
    let mut used_p = vec![false; preds.len()];
    let mut used_g = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (p, g) in idx {
        used_p[p] = true;
        used_g[g] = true;
        pairs.push((preds[p], gts[g]));
    }
    let rest_p = preds.iter().zip(&used_p).filter(|(_, &u)| !u).map(|(o, _)| *o);
    let rest_g = gts.iter().zip(&used_g).filter(|(_, &u)| !u).map(|(o, _)| *o);
    pairs.extend(rest_p.zip(rest_g));
    pairs
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// Scores one frame. `gt` is normally the parse of the ground-truth caption.
pub fn match_frame(pred: &ParsedPrediction, gt: &[PredObject], oov: OovMode) -> FrameEval {
    let mut by_class: BTreeMap<&str, (Vec<&PredObject>, Vec<&PredObject>)> = BTreeMap::new();
    for p in &pred.objects {
        by_class.entry(&p.class_name).or_default().0.push(p);
    }
    for g in gt {
        by_class.entry(&g.class_name).or_default().1.push(g);
    }

    let mut eval = FrameEval {
        frame_key: pred.frame_key.clone(),
        tp: 0,
        pred_count: pred.objects.len(),
        gt_count: gt.len(),
        matched_pairs: Vec::new(),
        hallucinated_count: 0,
        pred_class_count: 0,
        hallucinated_class_count: 0,
        range_abs_errors: Vec::new(),
        az_abs_errors: Vec::new(),
        sector_hits: 0,
        sector_total: 0,
    };

    for (preds, gts) in by_class.values_mut() {
        preds.sort_by(|a, b| object_order(a, b));
        gts.sort_by(|a, b| object_order(a, b));
        if !preds.is_empty() {
            eval.pred_class_count += 1;
            if gts.is_empty() {
                eval.hallucinated_count += preds.len();
                eval.hallucinated_class_count += 1;
            }
        }
        for (p, g) in pair_class(preds, gts) {
            if let (Some(a), Some(b)) = (p.range_m, g.range_m) {
                eval.range_abs_errors.push((a - b).abs());
            }
            if let (Some(a), Some(b)) = (p.azimuth_deg, g.azimuth_deg) {
                eval.az_abs_errors.push(angle_diff(a, b));
            }
            if let (Some(a), Some(b)) = (p.sector, g.sector) {
                eval.sector_total += 1;
                eval.sector_hits += usize::from(a == b);
            }
            eval.matched_pairs.push((p.clone(), g.clone()));
        }
    }
    eval.tp = eval.matched_pairs.len();

    if oov == OovMode::Penalize && !pred.oov.is_empty() {
        eval.pred_count += pred.oov.len();
        eval.hallucinated_count += pred.oov.len();
        let distinct: BTreeSet<&String> = pred.oov.iter().collect();
        eval.pred_class_count += distinct.len();
        eval.hallucinated_class_count += distinct.len();
    }
    eval
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub frame_count: usize,
    pub tp: usize,
    pub pred_count: usize,
    pub gt_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when there were no predictions and precision was set to 0.
    pub precision_defined: bool,
    pub range_mae_m: Option<f64>,
    pub azimuth_mae_deg: Option<f64>,
    pub bearing_acc: Option<f64>,
    pub hallucination_rate: f64,
    pub hallucination_mode: HallucinationMode,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Micro-pooled metrics with instance-level hallucination.
pub fn aggregate(evals: &[FrameEval]) -> Result<AggregateMetrics, MetricsError> {
    aggregate_with(evals, HallucinationMode::Instance)
}

pub fn aggregate_with(evals: &[FrameEval], mode: HallucinationMode) -> Result<AggregateMetrics, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let (mut tp, mut pred, mut gt) = (0usize, 0usize, 0usize);
    let (mut range_sum, mut range_n, mut az_sum, mut az_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut hits, mut sectors) = (0usize, 0usize);
    for e in evals {
        tp += e.tp;
        pred += e.pred_count;
        gt += e.gt_count;
        range_sum += e.range_abs_errors.iter().sum::<f64>();
        range_n += e.range_abs_errors.len();
        az_sum += e.az_abs_errors.iter().sum::<f64>();
        az_n += e.az_abs_errors.len();
        hits += e.sector_hits;
        sectors += e.sector_total;
    }
    let precision_defined = pred > 0;
    let precision = if precision_defined { tp as f64 / pred as f64 } else { 0.0 };
    let recall = if gt > 0 { tp as f64 / gt as f64 } else { 1.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(AggregateMetrics {
        frame_count: evals.len(),
        tp,
        pred_count: pred,
        gt_count: gt,
        precision,
        recall,
        f1,
        precision_defined,
        range_mae_m: mean(range_sum, range_n),
        azimuth_mae_deg: mean(az_sum, az_n),
        bearing_acc: mean(hits as f64, sectors),
        hallucination_rate: hallucination_rate_with(evals, mode)?,
        hallucination_mode: mode,
    })
}

/// Hallucinated predicted objects over all predicted objects.
pub fn hallucination_rate(evals: &[FrameEval]) -> Result<f64, MetricsError> {
    hallucination_rate_with(evals, HallucinationMode::Instance)
}

pub fn hallucination_rate_with(evals: &[FrameEval], mode: HallucinationMode) -> Result<f64, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let (num, den) = evals.iter().fold((0usize, 0usize), |(n, d), e| match mode {
        HallucinationMode::Instance => (n + e.hallucinated_count, d + e.pred_count),
        HallucinationMode::ClassLevel => (n + e.hallucinated_class_count, d + e.pred_class_count),
    });
    Ok(if den == 0 { 0.0 } else { num as f64 / den as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratifyKey {
    Weather,
    TimeOfDay,
    Split,
    ZeroShot,
}

impl std::str::FromStr for StratifyKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weather" => Ok(StratifyKey::Weather),
            "time" | "time_of_day" => Ok(StratifyKey::TimeOfDay),
            "split" => Ok(StratifyKey::Split),
            "zero_shot" => Ok(StratifyKey::ZeroShot),
            o => Err(format!("unknown stratification key `{o}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupLabel {
    Weather(Weather),
    TimeOfDay(TimeOfDay),
    Split(Split),
    ZeroShot(bool),
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Weather(w) => write!(f, "{w}"),
            GroupLabel::TimeOfDay(t) => write!(f, "{t}"),
            GroupLabel::Split(s) => write!(f, "{s}"),
            GroupLabel::ZeroShot(z) => f.write_str(if *z { "zero_shot" } else { "seen" }),
        }
    }
}

/// Aggregates frames per manifest attribute, groups in enum order.
pub fn stratify(
    evals: &[FrameEval],
    manifest: &Manifest,
    key: StratifyKey,
    mode: HallucinationMode,
) -> Result<BTreeMap<GroupLabel, AggregateMetrics>, MetricsError> {
    let mut groups: BTreeMap<GroupLabel, Vec<FrameEval>> = BTreeMap::new();
    for e in evals {
        let fk: FrameKey = e.frame_key.parse()?;
        let seq = manifest.resolve(fk)?;
        let label = match key {
            StratifyKey::Weather => GroupLabel::Weather(seq.weather),
            StratifyKey::TimeOfDay => GroupLabel::TimeOfDay(seq.time_of_day),
            StratifyKey::Split => GroupLabel::Split(seq.split),
            StratifyKey::ZeroShot => GroupLabel::ZeroShot(seq.zero_shot_weather),
        };
        groups.entry(label).or_default().push(e.clone());
    }
    groups
        .into_iter()
        .map(|(g, v)| aggregate_with(&v, mode).map(|m| (g, m)))
        .collect()
}

fn sort_key(key: &str) -> (Option<FrameKey>, &str) {
    (key.parse().ok(), key)
}

/// Parses both caption sets and scores every ground-truth frame, in frame
/// order. A ground-truth frame without a prediction is scored as an empty
/// prediction.
pub fn evaluate_captions(
    parser: &CaptionParser,
    predictions: &[CaptionRecord],
    ground_truth: &[CaptionRecord],
    oov: OovMode,
) -> Result<Vec<FrameEval>, MetricsError> {
    let gt_keys: HashMap<&str, &CaptionRecord> =
        ground_truth.iter().map(|r| (r.frame_key.as_str(), r)).collect();
    if let Some(extra) = predictions.iter().find(|p| !gt_keys.contains_key(p.frame_key.as_str())) {
        return Err(MetricsError::UnmatchedPrediction(extra.frame_key.clone()));
    }
    let preds: HashMap<&str, &CaptionRecord> =
        predictions.iter().map(|r| (r.frame_key.as_str(), r)).collect();

    let mut order: Vec<&CaptionRecord> = ground_truth.iter().collect();
    order.sort_by(|a, b| sort_key(&a.frame_key).cmp(&sort_key(&b.frame_key)));

    Ok(order
        .par_iter()
        .map(|g| {
            let gt = parser.parse(&g.frame_key, g.format, &g.text);
            let pred = match preds.get(g.frame_key.as_str()) {
                Some(p) => parser.parse(&p.frame_key, p.format, &p.text),
                None => parser.parse(&g.frame_key, g.format, ""),
            };
            match_frame(&pred, &gt.objects, oov)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BearingSector;
    use crate::parse::ParseStatus;

    fn o(class: &str, range: f64) -> PredObject {
        PredObject {
            class_name: class.into(),
            range_m: Some(range),
            azimuth_deg: None,
            sector: None,
        }
    }

    fn pred(objects: Vec<PredObject>) -> ParsedPrediction {
        ParsedPrediction {
            frame_key: "1_0".into(),
            status: ParseStatus::Ok,
            raw_length: 0,
            stated_count: None,
            objects,
            oov: vec![],
        }
    }

    fn counts(tp: usize, pred: usize, gt: usize) -> FrameEval {
        FrameEval {
            frame_key: "1_0".into(),
            tp,
            pred_count: pred,
            gt_count: gt,
            matched_pairs: vec![],
            hallucinated_count: 0,
            pred_class_count: 0,
            hallucinated_class_count: 0,
            range_abs_errors: vec![],
            az_abs_errors: vec![],
            sector_hits: 0,
            sector_total: 0,
        }
    }

    #[test]
    fn multiset_class_matching() {
        let gt = vec![o("sedan", 1.0), o("sedan", 2.0), o("bus or truck", 3.0)];
        let p = pred(vec![o("sedan", 1.0), o("bus or truck", 3.0), o("bus or truck", 4.0)]);
        let e = match_frame(&p, &gt, OovMode::Drop);
        assert_eq!(e.tp, 2);
        let m = aggregate(&[e]).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction() {
        let gt = vec![o("sedan", 10.0), o("pedestrian", 4.0)];
        let e = match_frame(&pred(gt.clone()), &gt, OovMode::Drop);
        assert_eq!((e.tp, e.hallucinated_count), (2, 0));
        assert!(e.range_abs_errors.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sorted_pairing() {
        let gt = vec![o("sedan", 28.0), o("sedan", 12.0)];
        let e = match_frame(&pred(vec![o("sedan", 30.0), o("sedan", 10.0)]), &gt, OovMode::Drop);
        assert_eq!(e.range_abs_errors, vec![2.0, 2.0]);
        assert_eq!(e.matched_pairs[0].0.range_m, Some(10.0));
        assert_eq!(e.matched_pairs[0].1.range_m, Some(12.0));
    }

    #[test]
    fn unequal_counts_pick_closest_subset() {
        let e = match_frame(&pred(vec![o("sedan", 50.0)]), &[o("sedan", 10.0), o("sedan", 50.0)], OovMode::Drop);
        assert_eq!(e.range_abs_errors, vec![0.0]);
        assert_eq!(monotone_assignment(&[5.0, 9.0], &[1.0, 4.0, 8.0, 20.0]), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn pooled_arithmetic() {
        let m = aggregate(&[counts(1, 2, 2), counts(1, 1, 2)]).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_denominators() {
        let m = aggregate(&[counts(0, 0, 3)]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(!m.precision_defined);
        assert_eq!(m.hallucination_rate, 0.0);
        let m = aggregate(&[counts(0, 0, 0)]).unwrap();
        assert_eq!(m.recall, 1.0);
        assert!(matches!(aggregate(&[]), Err(MetricsError::EmptyEvaluation)));
        assert!(matches!(hallucination_rate(&[]), Err(MetricsError::EmptyEvaluation)));
    }

    #[test]
    fn hallucination_modes() {
        let e = match_frame(&pred(vec![o("sedan", 1.0), o("pedestrian", 2.0)]), &[o("sedan", 1.0)], OovMode::Drop);
        assert_eq!(hallucination_rate(&[e.clone()]).unwrap(), 0.5);
        let e = match_frame(&pred(vec![o("sedan", 1.0), o("sedan", 3.0), o("pedestrian", 2.0)]), &[], OovMode::Drop);
        assert_eq!(hallucination_rate(&[e.clone()]).unwrap(), 1.0);
        let e = match_frame(
            &pred(vec![o("sedan", 1.0), o("sedan", 3.0), o("pedestrian", 2.0)]),
            &[o("sedan", 2.0)],
            OovMode::Drop,
        );
        assert!((hallucination_rate(&[e.clone()]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(hallucination_rate_with(&[e], HallucinationMode::ClassLevel).unwrap(), 0.5);
    }

    #[test]
    fn oov_penalty() {
        let mut p = pred(vec![o("sedan", 1.0)]);
        p.oov = vec!["spaceship".into(), "spaceship".into()];
        let gt = [o("sedan", 1.0)];
        let dropped = match_frame(&p, &gt, OovMode::Drop);
        assert_eq!((dropped.pred_count, dropped.hallucinated_count), (1, 0));
        let pen = match_frame(&p, &gt, OovMode::Penalize);
        assert_eq!((pen.pred_count, pen.hallucinated_count), (3, 2));
        assert_eq!((pen.pred_class_count, pen.hallucinated_class_count), (2, 1));
    }

    #[test]
    fn spatial_fields_only_when_both_sides_have_them() {
        let mut a = o("sedan", 10.0);
        a.sector = Some(BearingSector::Left);
        a.azimuth_deg = Some(179.0);
        let mut b = o("sedan", 11.0);
        b.sector = Some(BearingSector::Right);
        b.azimuth_deg = Some(-179.0);
        let e = match_frame(&pred(vec![a]), &[b], OovMode::Drop);
        assert_eq!((e.sector_hits, e.sector_total), (0, 1));
        assert!((e.az_abs_errors[0] - 2.0).abs() < 1e-9);
        let none = PredObject {
            class_name: "sedan".into(),
            range_m: None,
            azimuth_deg: None,
            sector: None,
        };
        let e = match_frame(&pred(vec![none]), &[o("sedan", 3.0)], OovMode::Drop);
        assert_eq!(e.tp, 1);
        assert!(e.range_abs_errors.is_empty());
    }

    #[test]
    fn stratification() {
        let m = Manifest::kradar();
        let mk = |key: &str| FrameEval {
            frame_key: key.into(),
            ..counts(1, 1, 1)
        };
        let evals = vec![mk("18_0"), mk("38_1"), mk("42_2"), mk("46_3")];
        let groups = stratify(&evals, &m, StratifyKey::Weather, HallucinationMode::Instance).unwrap();
        let labels: Vec<String> = groups.keys().map(|g| g.to_string()).collect();
        assert_eq!(labels, ["normal", "fog", "light_snow", "heavy_snow"]);
        let time = stratify(&evals, &m, StratifyKey::TimeOfDay, HallucinationMode::Instance).unwrap();
        assert_eq!(time[&GroupLabel::TimeOfDay(TimeOfDay::Day)].frame_count, 3);
        assert_eq!(time[&GroupLabel::TimeOfDay(TimeOfDay::Night)].frame_count, 1);
        assert!(matches!(
            stratify(&[mk("99_0")], &m, StratifyKey::Weather, HallucinationMode::Instance),
            Err(MetricsError::Manifest(ManifestError::UnknownSequence(99)))
        ));
    }
}
