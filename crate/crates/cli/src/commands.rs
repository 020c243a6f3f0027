use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use radcap_core::caption::{self, CaptionFormat, CaptionRecord};
use radcap_core::config::RunConfig;
use radcap_core::diagnostics::{self, TokenMatrix};
use radcap_core::geometry::{self, SceneObject};
use radcap_core::manifest::{Manifest, Split};
use radcap_core::metrics::{self, HallucinationMode, OovMode, StratifyKey};
use radcap_core::parse::CaptionParser;
use radcap_core::radar::{self, InputVariant, RadarTensor};
use radcap_core::report;
use radcap_core::ClassVocabulary;

use crate::{input_err, CliError, CliResult};

fn vocabulary(cfg: &RunConfig) -> CliResult<ClassVocabulary> {
    match &cfg.vocab_path {
        Some(p) => ClassVocabulary::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => Ok(ClassVocabulary::default()),
    }
}

fn manifest(path: Option<&Path>, cfg: &RunConfig, builtin: bool) -> CliResult<Option<Manifest>> {
    if builtin {
        return Ok(Some(Manifest::kradar()));
    }
    match path.or(cfg.manifest_path.as_deref()) {
        Some(p) => Manifest::load(p)
            .map(Some)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => Ok(None),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_captions(path: &Path) -> CliResult<Vec<CaptionRecord>> {
    caption::read_caption_file(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// A tesseract file or a directory of them.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; one file per input, same file name.
    #[arg(long)]
    out: PathBuf,
    /// Input variant: 5ch or 66ch.
    #[arg(long)]
    variant: Option<InputVariant>,
}

impl PreprocessArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        Ok(())
    }
}

fn tensor_files(input: &Path) -> CliResult<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn preprocess_one(cfg: &RunConfig, path: &Path, out: &Path) -> Result<(), String> {
    let (t, extents) = radar::read_tesseract(path).map_err(|e| e.to_string())?;
    let [d, r, e, a] = t.dims();
    let mut grid = cfg.grid.clone();
    if let Some(x) = extents {
        grid = grid.with_extents(x);
    }
    grid.doppler_bins = d;
    grid.range_bins = r;
    grid.elevation_bins = e;
    grid.azimuth_bins = a;
    let input = radar::preprocess(&t, &grid, cfg.variant).map_err(|e| e.to_string())?;
    let name = path.file_name().ok_or("no file name")?;
    radar::write_tensor(&RadarTensor::Input(input), &grid, out.join(name)).map_err(|e| e.to_string())
}

/// Frames run one after another; each frame is internally parallel. A bad
/// file is reported and skipped.
pub fn preprocess(cfg: &RunConfig, a: &PreprocessArgs) -> CliResult<()> {
    let files = tensor_files(&a.input)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::Input(format!("{}: {e}", a.out.display())))?;
    let out = a.out.canonicalize().map_err(|e| CliError::Input(e.to_string()))?;
    let mut failures = 0;
    for f in &files {
        if f.parent().and_then(|p| p.canonicalize().ok()).as_deref() == Some(out.as_path()) {
            return Err(CliError::Config("output directory must differ from the input directory".into()));
        }
        match preprocess_one(cfg, f, &out) {
            Ok(()) => println!("{}\tok", f.display()),
            Err(e) => {
                failures += 1;
                eprintln!("{}\terror: {e}", f.display());
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Input(format!("{failures} of {} files failed", files.len())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenGtArgs {
    /// Label file: `frame_key TAB [boxes]` per line.
    #[arg(long)]
    labels: PathBuf,
    /// Write prose captions here.
    #[arg(long)]
    prose_out: Option<PathBuf>,
    /// Write structured captions here.
    #[arg(long)]
    structured_out: Option<PathBuf>,
    /// Manifest every frame key must resolve in.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use the shipped K-RADAR manifest.
    #[arg(long)]
    kradar: bool,
    /// Keep only frames of this split (needs a manifest).
    #[arg(long)]
    split: Option<Split>,
    /// Objects described per caption.
    #[arg(long)]
    top_k: Option<usize>,
}

impl GenGtArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(k) = self.top_k {
            cfg.top_k = k;
        }
        if self.prose_out.is_none() && self.structured_out.is_none() {
            return Err(CliError::Config("give --prose-out and/or --structured-out".into()));
        }
        Ok(())
    }
}

pub fn gen_gt(cfg: &RunConfig, a: &GenGtArgs) -> CliResult<()> {
    let vocab = vocabulary(cfg)?;
    let manifest = manifest(a.manifest.as_deref(), cfg, a.kradar)?;
    if a.split.is_some() && manifest.is_none() {
        return Err(CliError::Config("--split needs a manifest".into()));
    }
    let mut frames = geometry::read_labels(&a.labels).map_err(|e| CliError::Input(format!("{}: {e}", a.labels.display())))?;
    frames.sort_by_key(|f| f.key);
    if let Some(w) = frames.windows(2).find(|w| w[0].key == w[1].key) {
        return Err(CliError::Input(format!("{}: duplicate frame {}", a.labels.display(), w[0].key)));
    }

    let mut outputs: Vec<(CaptionFormat, &PathBuf, Vec<CaptionRecord>)> = Vec::new();
    if let Some(p) = &a.prose_out {
        outputs.push((CaptionFormat::Prose, p, Vec::new()));
    }
    if let Some(p) = &a.structured_out {
        outputs.push((CaptionFormat::Structured, p, Vec::new()));
    }
    for f in &frames {
        if let Some(m) = &manifest {
            let seq = m.resolve(f.key).map_err(input_err(a.labels.display()))?;
            if a.split.is_some_and(|s| s != seq.split) {
                continue;
            }
        }
        let objs: Vec<SceneObject> = f
            .boxes
            .iter()
            .map(|b| geometry::to_polar(b, &vocab))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Input(format!("{}: frame {}: {e}", a.labels.display(), f.key)))?;
        let key = f.key.to_string();
        for (format, _, recs) in &mut outputs {
            let c = caption::caption_scene(&key, &objs, *format, cfg.top_k, cfg.fov, &cfg.sectors)
                .map_err(|e| CliError::Internal(format!("frame {key}: {e}")))?;
            recs.push(c.into());
        }
    }
    for (_, path, recs) in &outputs {
        caption::write_caption_file(path, recs).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        println!("{}\t{} captions", path.display(), recs.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ParseArgs {
    /// Caption file to parse.
    #[arg(long)]
    captions: PathBuf,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn parse(cfg: &RunConfig, a: &ParseArgs) -> CliResult<()> {
    use rayon::prelude::*;
    let parser = CaptionParser::new(vocabulary(cfg)?);
    let recs = read_captions(&a.captions)?;
    let lines: Vec<String> = recs
        .par_iter()
        .map(|r| {
            let p = parser.parse(&r.frame_key, r.format, &r.text);
            serde_json::to_string(&p).expect("prediction serializes")
        })
        .collect();
    let mut w: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    for l in lines {
        writeln!(w, "{l}").map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Input(e.to_string()))
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted captions.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth captions.
    #[arg(long)]
    gt: PathBuf,
    /// Manifest for stratification.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use the shipped K-RADAR manifest.
    #[arg(long)]
    kradar: bool,
    /// Stratification keys (weather, time, split, zero_shot). Defaults to
    /// weather when a manifest is given.
    #[arg(long, value_delimiter = ',')]
    stratify: Vec<String>,
    /// Directory for metrics.csv, table.txt and per-group CSVs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Count hallucinations per distinct class instead of per object.
    #[arg(long)]
    class_level: bool,
    /// Out-of-vocabulary handling: drop or penalize.
    #[arg(long)]
    oov: Option<OovMode>,
    /// Free-form stamp recorded in the report (e.g. a date).
    #[arg(long)]
    stamp: Option<String>,
}

impl EvalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if self.class_level {
            cfg.hallucination = HallucinationMode::ClassLevel;
        }
        if let Some(o) = self.oov {
            cfg.oov = o;
        }
        if let Some(m) = &self.manifest {
            cfg.manifest_path = Some(m.clone());
        }
        Ok(())
    }
}

fn stratify_key(name: &str) -> CliResult<(StratifyKey, &'static str)> {
    let key: StratifyKey = name.parse().map_err(CliError::Config)?;
    let prefix = match key {
        StratifyKey::Weather => "weather",
        StratifyKey::TimeOfDay => "time",
        StratifyKey::Split => "split",
        StratifyKey::ZeroShot => "zero_shot",
    };
    Ok((key, prefix))
}

pub fn eval(cfg: &RunConfig, a: &EvalArgs) -> CliResult<()> {
    let parser = CaptionParser::new(vocabulary(cfg)?);
    let manifest = manifest(None, cfg, a.kradar)?;
    let mut keys = a.stratify.clone();
    if keys.is_empty() && manifest.is_some() {
        keys.push("weather".into());
    }
    let keys: Vec<(StratifyKey, &str)> = keys.iter().map(|k| stratify_key(k)).collect::<CliResult<_>>()?;
    if !keys.is_empty() && manifest.is_none() {
        return Err(CliError::Config("stratification needs --manifest or --kradar".into()));
    }

    let preds = read_captions(&a.pred)?;
    let gt = read_captions(&a.gt)?;
    let evals = metrics::evaluate_captions(&parser, &preds, &gt, cfg.oov).map_err(|e| CliError::Input(e.to_string()))?;
    for e in &evals {
        if e.tp > e.pred_count.min(e.gt_count) || e.matched_pairs.len() != e.tp || e.hallucinated_count > e.pred_count {
            return Err(CliError::Internal(format!("inconsistent counts for frame {}", e.frame_key)));
        }
    }
    let overall = metrics::aggregate_with(&evals, cfg.hallucination).map_err(|e| CliError::Input(e.to_string()))?;

    let mut records = report::meta_records(cfg, a.stamp.as_deref());
    records.extend(report::metric_records(report::OVERALL, &overall));
    if let Some(m) = &manifest {
        for (key, _) in &keys {
            let groups = metrics::stratify(&evals, m, *key, cfg.hallucination)
                .map_err(|e| CliError::Input(format!("{}: {e}", a.gt.display())))?;
            for (g, metrics) in groups {
                records.extend(report::metric_records(&report::stratum_group(g), &metrics));
            }
        }
    }
    let table = report::render_table(&records).map_err(|e| CliError::Internal(e.to_string()))?;
    print!("{table}");

    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        report::write_records(create(&dir.join("metrics.csv"))?, &records).map_err(|e| CliError::Input(e.to_string()))?;
        write_text(&dir.join("table.txt"), &table)?;
        for (_, prefix) in &keys {
            let path = dir.join(format!("{prefix}.csv"));
            report::write_group_csv(create(&path)?, &records, prefix).map_err(|e| CliError::Input(e.to_string()))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// metrics.csv written by `eval`.
    #[arg(long)]
    records: PathBuf,
    /// Group kind for the CSV (weather, time, split, zero_shot).
    #[arg(long)]
    group: Option<String>,
    /// Destination of the group CSV; stdout when absent.
    #[arg(long)]
    group_out: Option<PathBuf>,
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    let file = File::open(&a.records).map_err(|e| CliError::Input(format!("{}: {e}", a.records.display())))?;
    let records = report::read_records(file).map_err(|e| CliError::Input(format!("{}: {e}", a.records.display())))?;
    match &a.group {
        None => {
            let table = report::render_table(&records).map_err(|e| CliError::Input(e.to_string()))?;
            print!("{table}");
        }
        Some(g) => {
            let (_, prefix) = stratify_key(g)?;
            let rows = match &a.group_out {
                Some(p) => report::write_group_csv(create(p)?, &records, prefix),
                None => report::write_group_csv(std::io::stdout().lock(), &records, prefix),
            }
            .map_err(|e| CliError::Input(e.to_string()))?;
            if rows == 0 {
                return Err(CliError::Input(format!("no `{prefix}` groups in {}", a.records.display())));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Token dump (RT4D, 2 axes: tokens x dims).
    #[arg(long)]
    tokens: PathBuf,
    /// Reference embedding dump with the same dims.
    #[arg(long)]
    reference: PathBuf,
    /// Flag when the norm ratio leaves [1/threshold, threshold].
    #[arg(long)]
    threshold: Option<f64>,
    /// Also report the tokens after a unit-affine LayerNorm.
    #[arg(long)]
    layer_norm: bool,
}

impl DiagnoseArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(t) = self.threshold {
            cfg.norm_threshold = t;
        }
        Ok(())
    }
}

pub fn diagnose(cfg: &RunConfig, a: &DiagnoseArgs) -> CliResult<()> {
    let tokens = TokenMatrix::read(&a.tokens).map_err(input_err(a.tokens.display()))?;
    let reference = TokenMatrix::read(&a.reference).map_err(input_err(a.reference.display()))?;
    let raw = diagnostics::norm_mismatch_check(&tokens, &reference, cfg.norm_threshold)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = json!({
        "config_hash": cfg.hash(),
        "tokens": tokens.tokens(),
        "dim": tokens.dim(),
        "report": raw,
    });
    if a.layer_norm {
        let normed = diagnostics::layer_norm(&tokens, cfg.layer_norm_eps).map_err(|e| CliError::Input(e.to_string()))?;
        let after = diagnostics::norm_mismatch_check(&normed, &reference, cfg.norm_threshold)
            .map_err(|e| CliError::Input(e.to_string()))?;
        out["after_layer_norm"] = serde_json::to_value(after).expect("report serializes");
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SwapArgs {
    /// Captions from real sensor input.
    #[arg(long)]
    real: PathBuf,
    /// Captions from zeroed input.
    #[arg(long)]
    zeros: PathBuf,
    /// Captions from noise input.
    #[arg(long)]
    noise: PathBuf,
    /// Identical fraction at or above which the model is flagged.
    #[arg(long)]
    threshold: Option<f64>,
}

impl SwapArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(t) = self.threshold {
            cfg.identical_threshold = t;
        }
        Ok(())
    }
}

pub fn swap_test(cfg: &RunConfig, a: &SwapArgs) -> CliResult<()> {
    let real = read_captions(&a.real)?;
    let zeros = read_captions(&a.zeros)?;
    let noise = read_captions(&a.noise)?;
    let r = diagnostics::swap_test(&real, &zeros, &noise, cfg.identical_threshold)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let out = json!({ "config_hash": cfg.hash(), "report": r });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Manifest file; the shipped K-RADAR manifest when absent.
    manifest: Option<PathBuf>,
    /// Print the canonical serialization instead of the summary.
    #[arg(long)]
    canonical: bool,
}

pub fn validate_manifest(a: &ValidateArgs) -> CliResult<()> {
    let m = match &a.manifest {
        Some(p) => Manifest::load(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => Manifest::kradar(),
    };
    if a.canonical {
        print!("{}", m.to_canonical_string());
        return Ok(());
    }
    println!("schema_version\t{}", m.schema_version);
    println!("split\tsequences\tframes\tweathers");
    for split in Split::ALL {
        let weathers: Vec<String> = m.weathers_of_split(*split).iter().map(|w| w.to_string()).collect();
        println!(
            "{split}\t{}\t{}\t{}",
            m.split_sequence_ids(*split).len(),
            m.split_frame_total(*split),
            weathers.join(",")
        );
    }
    Ok(())
}
