#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use radcap_core::caption::{self, CaptionFormat, CaptionRecord};
use radcap_core::geometry::{self, SceneObject, SectorTable};
use radcap_core::ClassVocabulary;

pub fn classes() -> Vec<String> {
    ClassVocabulary::default().classes().to_vec()
}

/// Random scene inside the default field of view.
pub fn random_scene<R: Rng>(rng: &mut R, max_objects: usize) -> Vec<SceneObject> {
    let classes = classes();
    let n = rng.gen_range(0..=max_objects);
    (0..n)
        .map(|_| {
            SceneObject::new(
                classes.choose(rng).unwrap().clone(),
                rng.gen_range(0.5..80.0),
                rng.gen_range(-53.0..=53.0),
            )
        })
        .collect()
}

/// Ground-truth caption record for a scene, all objects described.
pub fn gt_record(key: &str, objs: &[SceneObject], format: CaptionFormat) -> CaptionRecord {
    let described = geometry::select_topk(objs, objs.len());
    let c = match format {
        CaptionFormat::Prose => caption::gen_prose(key, &described, objs.len(), &SectorTable::default()),
        CaptionFormat::Structured => caption::gen_structured(key, &described, objs.len()),
    };
    c.unwrap().into()
}

/// A noisy "model output" for a scene: drops, swaps and adds objects and
/// jitters positions, then renders with the same template.
pub fn perturbed_record<R: Rng>(rng: &mut R, key: &str, objs: &[SceneObject], format: CaptionFormat) -> CaptionRecord {
    let classes = classes();
    let mut out = Vec::new();
    for o in objs {
        if !rng.gen_bool(0.8) {
            continue;
        }
        let mut o = o.clone();
        if rng.gen_bool(0.1) {
            o.class_name = classes.choose(rng).unwrap().clone();
        }
        o.range_m = (o.range_m + rng.gen_range(-3.0..3.0)).clamp(0.5, 80.0);
        o.azimuth_deg = (o.azimuth_deg + rng.gen_range(-6.0..6.0)).clamp(-53.0, 53.0);
        out.push(o);
    }
    if rng.gen_bool(0.2) {
        out.extend(random_scene(rng, 2));
    }
    gt_record(key, &out, format)
}

/// Independent minimum total |Δ| over all injections of the shorter list
/// into the longer one.
pub fn exhaustive_min_cost(a: &[f64], b: &[f64]) -> f64 {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    fn go(short: &[f64], long: &[f64], used: &mut Vec<bool>, i: usize) -> f64 {
        if i == short.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..long.len() {
            if !used[j] {
                used[j] = true;
                best = best.min((short[i] - long[j]).abs() + go(short, long, used, i + 1));
                used[j] = false;
            }
        }
        best
    }
    go(short, long, &mut vec![false; long.len()], 0)
}

/// Brute-force multiset intersection size of two class lists.
pub fn multiset_intersection(a: &[&str], b: &[&str]) -> usize {
    let mut rest: Vec<&str> = b.to_vec();
    let mut n = 0;
    for x in a {
        if let Some(i) = rest.iter().position(|y| y == x) {
            rest.swap_remove(i);
            n += 1;
        }
    }
    n
}

/// Euclidean norms of rows accumulated term by term.
pub fn row_norms(data: &[f32], d: usize) -> Vec<f64> {
    data.chunks(d)
        .map(|row| {
            let mut acc = 0.0f64;
            for &v in row {
                acc += (v as f64) * (v as f64);
            }
            acc.sqrt()
        })
        .collect()
}
