use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radcap_core::container::GridExtents;
use radcap_core::diagnostics::TokenMatrix;
use radcap_core::radar::{self, RadarGridConfig, RadarTensor, Tesseract};

fn radcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radcap")).args(args).output().expect("spawn radcap")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/a").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn eval_fixture(out: &Path, threads: &str) -> Output {
    radcap(&[
        "eval", "--pred", s(&fixture("pred.txt")), "--gt", s(&fixture("gt.txt")),
        "--kradar", "--stratify", "weather,time", "--out-dir", s(out), "--threads", threads,
    ])
}

// Hand-computed: tp 4 of 6 predictions and 6 GT objects; range errors
// 2, 0, 0, 1; azimuth errors 2, 2, 0, 2; two predictions of absent classes.
#[test]
fn fixture_a_matches_hand_computed_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = eval_fixture(dir.path(), "1");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let get = |group: &str, metric: &str| -> String {
        csv.lines()
            .find_map(|l| l.strip_prefix(&format!("{group},{metric},")).map(str::to_string))
            .unwrap_or_else(|| panic!("{group} {metric} missing"))
    };
    let num = |g: &str, m: &str| get(g, m).parse::<f64>().unwrap();
    assert_eq!(get("overall", "tp"), "4");
    assert!((num("overall", "precision") - 4.0 / 6.0).abs() < 1e-12);
    assert!((num("overall", "recall") - 4.0 / 6.0).abs() < 1e-12);
    assert!((num("overall", "range_mae_m") - 0.75).abs() < 1e-12);
    assert!((num("overall", "azimuth_mae_deg") - 1.5).abs() < 1e-12);
    assert!((num("overall", "hallucination_rate") - 2.0 / 6.0).abs() < 1e-12);
    assert!((num("weather:normal", "class_f1") - 6.0 / 7.0).abs() < 1e-12);
    assert_eq!(get("weather:fog", "precision_defined"), "false");
    assert_eq!(get("weather:fog", "range_mae_m"), "NA");
    assert!((num("weather:heavy_snow", "class_f1") - 0.5).abs() < 1e-12);
    assert_eq!(get("overall", "bearing_acc"), "NA");

    // the committed table holds only the weather strata
    let expected = std::fs::read_to_string(fixture("expected_table.txt")).unwrap();
    let weather_only = radcap(&[
        "eval", "--pred", s(&fixture("pred.txt")), "--gt", s(&fixture("gt.txt")), "--kradar",
    ]);
    assert_eq!(String::from_utf8_lossy(&weather_only.stdout), expected);
}

#[test]
fn per_weather_csv_has_one_row_per_stratum() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eval_fixture(dir.path(), "2")), 0);
    let w = std::fs::read_to_string(dir.path().join("weather.csv")).unwrap();
    let rows: Vec<&str> = w.lines().collect();
    assert!(rows[0].starts_with("weather,frame_count,class_f1"));
    let names: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["normal", "fog", "heavy_snow"]);
    let t = std::fs::read_to_string(dir.path().join("time.csv")).unwrap();
    assert_eq!(t.lines().count(), 3);
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert_eq!(code(&eval_fixture(a.path(), "1")), 0);
    assert_eq!(code(&eval_fixture(b.path(), "4")), 0);
    assert_eq!(code(&eval_fixture(c.path(), "1")), 0);
    for f in ["metrics.csv", "table.txt", "weather.csv", "time.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        assert_eq!(x, std::fs::read(c.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn report_rerenders_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = eval_fixture(dir.path(), "1");
    let r = radcap(&["report", "--records", s(&dir.path().join("metrics.csv"))]);
    assert_eq!(code(&r), 0);
    assert_eq!(r.stdout, o.stdout);
    let g = radcap(&["report", "--records", s(&dir.path().join("metrics.csv")), "--group", "weather"]);
    assert_eq!(g.stdout, std::fs::read(dir.path().join("weather.csv")).unwrap());
}

#[test]
fn gen_gt_then_eval_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.txt");
    std::fs::write(
        &labels,
        "18_3\t[{\"class\":\"Sedan\",\"x\":10,\"y\":2,\"z\":0.5,\"l\":4,\"w\":1.8,\"h\":1.5,\"yaw\":0},\
         {\"class\":\"Pedestrian\",\"x\":5,\"y\":-3,\"z\":0.5,\"l\":0.5,\"w\":0.5,\"h\":1.7,\"yaw\":0}]\n\
         46_9\t[{\"class\":\"Bus or Truck\",\"x\":30,\"y\":10,\"z\":1,\"l\":9,\"w\":2.5,\"h\":3,\"yaw\":0}]\n",
    )
    .unwrap();
    let prose = dir.path().join("prose.txt");
    let structured = dir.path().join("structured.txt");
    let o = radcap(&[
        "gen-gt", "--labels", s(&labels), "--prose-out", s(&prose), "--structured-out", s(&structured), "--kradar",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [&prose, &structured] {
        let o = radcap(&["eval", "--pred", s(f), "--gt", s(f), "--kradar"]);
        assert_eq!(code(&o), 0);
        let out = String::from_utf8(o.stdout).unwrap();
        let f1 = out.lines().find(|l| l.starts_with("Class F1")).unwrap();
        assert_eq!(f1.matches("1.000").count(), 3, "{out}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // input format
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "no tabs here\n").unwrap();
    assert_eq!(code(&radcap(&["eval", "--pred", s(&bad), "--gt", s(&fixture("gt.txt"))])), 2);
    assert_eq!(code(&radcap(&["parse", "--captions", s(&dir.path().join("missing.txt"))])), 2);
    // config
    assert_eq!(code(&radcap(&["eval", "--pred", s(&fixture("pred.txt")), "--gt", s(&fixture("gt.txt")), "--set", "top_k=0"])), 3);
    assert_eq!(code(&radcap(&["eval", "--pred", s(&fixture("pred.txt")), "--gt", s(&fixture("gt.txt")), "--set", "nope=1"])), 3);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "vocab_path = /does/not/exist\n").unwrap();
    assert_eq!(code(&radcap(&["--config", s(&cfg), "parse", "--captions", s(&fixture("gt.txt"))])), 3);
    // stratification without a manifest
    assert_eq!(code(&radcap(&["eval", "--pred", s(&fixture("pred.txt")), "--gt", s(&fixture("gt.txt")), "--stratify", "weather"])), 3);
    // prediction for a frame with no ground truth
    let extra = dir.path().join("extra.txt");
    std::fs::write(&extra, "99_0\tprose\tThere are no objects.\n").unwrap();
    assert_eq!(code(&radcap(&["eval", "--pred", s(&extra), "--gt", s(&fixture("gt.txt"))])), 2);
    assert_eq!(code(&radcap(&["validate-manifest"])), 0);
}

#[test]
fn validate_manifest_prints_split_totals() {
    let o = radcap(&["validate-manifest"]);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("val\t3\t1790\t"), "{out}");
    assert!(out.contains("test\t4\t2387\tnormal,fog,light_snow,heavy_snow"), "{out}");
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.txt");
    std::fs::write(&p, radcap(&["validate-manifest", "--canonical"]).stdout).unwrap();
    assert_eq!(radcap(&["validate-manifest", s(&p)]).stdout, out.as_bytes());
}

fn small_grid() -> RadarGridConfig {
    let mut g = RadarGridConfig::default().with_extents(GridExtents {
        range_min: 0.0,
        range_max: 8.0,
        az_min: -30.0,
        az_max: 30.0,
        dop_min: -4.0,
        dop_max: 4.0,
    });
    g.doppler_bins = 4;
    g.range_bins = 4;
    g.elevation_bins = 3;
    g.azimuth_bins = 5;
    g
}

#[test]
fn preprocess_isolates_corrupt_frames() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    let out = dir.path().join("out");
    std::fs::create_dir(&input).unwrap();
    let grid = small_grid();
    let dims = grid.tesseract_dims();
    let n: usize = dims.iter().product();
    let data: Vec<f32> = (0..n).map(|i| (i % 7) as f32).collect();
    let t = RadarTensor::Tesseract(Tesseract::new(dims, data).unwrap());
    radar::write_tensor(&t, &grid, input.join("a.rt4d")).unwrap();
    radar::write_tensor(&t, &grid, input.join("c.rt4d")).unwrap();
    let mut truncated = std::fs::read(input.join("a.rt4d")).unwrap();
    truncated.truncate(truncated.len() - 9);
    std::fs::write(input.join("b.rt4d"), truncated).unwrap();

    let o = radcap(&["preprocess", "--input", s(&input), "--out", s(&out), "--variant", "5ch"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("b.rt4d") && err.contains("1 of 3"), "{err}");
    for good in ["a.rt4d", "c.rt4d"] {
        let (t, extents) = radar::read_tensor(out.join(good)).unwrap();
        let RadarTensor::Input(i) = t else { panic!("expected an input tensor") };
        assert_eq!(i.dims(), [5, 4, 5]);
        assert_eq!(extents, Some(grid.extents()));
        let expected = radar::preprocess(&Tesseract::new(dims, (0..n).map(|i| (i % 7) as f32).collect()).unwrap(), &grid, radar::InputVariant::FiveCh).unwrap();
        assert_eq!(i, expected);
    }
    assert!(!out.join("b.rt4d").exists());
}

#[test]
fn diagnose_norms_flags_scaled_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f32>> = (0..8).map(|i| vec![3.0 + i as f32 * 0.01, 4.0]).collect();
    let reference = TokenMatrix::from_rows(&rows).unwrap();
    let big: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|v| v * 40.0).collect()).collect();
    let tokens = TokenMatrix::from_rows(&big).unwrap();
    let (tp, rp) = (dir.path().join("t.rt4d"), dir.path().join("r.rt4d"));
    tokens.write(&tp).unwrap();
    reference.write(&rp).unwrap();
    let o = radcap(&["diagnose-norms", "--tokens", s(&tp), "--reference", s(&rp), "--layer-norm"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["flagged"], true);
    assert!((v["report"]["ratio"].as_f64().unwrap() - 40.0).abs() < 1e-3);
    assert!(v["after_layer_norm"]["ratio"].is_number());
    let o = radcap(&["diagnose-norms", "--tokens", s(&rp), "--reference", s(&rp)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["flagged"], false);
    assert_eq!(code(&radcap(&["diagnose-norms", "--tokens", s(&tp), "--reference", s(&rp), "--threshold", "0.5"])), 3);
}

#[test]
fn swap_test_flags_input_blind_captions() {
    let dir = tempfile::tempdir().unwrap();
    let real = fixture("pred.txt");
    let o = radcap(&["swap-test", "--real", s(&real), "--zeros", s(&real), "--noise", s(&real)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["flagged"], true);
    assert_eq!(v["report"]["identical_fraction_zero"], 1.0);
    let other = dir.path().join("other.txt");
    std::fs::write(&other, "18_0\tprose\tThere are no objects.\n").unwrap();
    assert_eq!(code(&radcap(&["swap-test", "--real", s(&real), "--zeros", s(&other), "--noise", s(&real)])), 2);
}

#[test]
fn parse_emits_one_json_line_per_caption() {
    let o = radcap(&["parse", "--captions", s(&fixture("pred.txt"))]);
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = o.stdout.split(|&b| b == b'\n').filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["objects"][0]["class"], "sedan");
    assert_eq!(lines[2]["objects"].as_array().unwrap().len(), 0);
}
