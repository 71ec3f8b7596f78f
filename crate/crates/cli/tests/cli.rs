use std::path::Path;
use std::process::{Command, Output};

fn nnnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnnf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nnnf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_kind(args: &[&str]) -> String {
    let out = nnnf(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "error output must be one line: {err:?}");
    let rest = lines[0].strip_prefix("error: kind=").expect("machine-parsable prefix");
    rest.split_whitespace().next().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "train.rounds = 4, 8\n\
train.initial_negatives = 300\n\
train.negatives_per_round = 100\n\
train.negative_cap = 400\n\
train.jitter_count = 0\n\
pool.local_mean = 60\n\
pool.neighbor_diff = 60\n\
pool.sidf = 40\n\
pool.ssf = 40\n\
detect.scales_per_octave = 2\n\
detect.stride = 8\n";

#[test]
fn pool_is_deterministic_and_preset_aware() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let nf = dir.path().join("nf.json");
    let out = ok(&["pool", "--seed", "3", "--out", s(&a)]);
    assert!(out.contains("sidf=750") && out.contains("ssf=450"), "{out}");
    ok(&["pool", "--seed", "3", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let out = ok(&["--preset", "nf-only", "pool", "--out", s(&nf)]);
    assert!(out.contains("sidf=0") && out.contains("ssf=0"), "{out}");
}

#[test]
fn end_to_end_synth_train_detect_eval_bench() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let train_dir = dir.path().join("train");
    let test_dir = dir.path().join("test");
    let model = dir.path().join("model.json");
    let dets = dir.path().join("dets.csv");
    let curve = dir.path().join("curve.csv");
    let plot = dir.path().join("plot.csv");

    let out = ok(&["synth", "--seed", "1", "--count", "12", "--out-dir", s(&train_dir)]);
    assert!(out.contains("scenes=12"));
    assert!(train_dir.join("annotations.csv").exists());
    ok(&["synth", "--seed", "2", "--count", "3", "--out-dir", s(&test_dir)]);

    let c = s(&cfg);
    let out = ok(&["--config", c, "--seed", "5", "train", "--data", s(&train_dir), "--out", s(&model)]);
    assert!(out.contains("model trees=8"), "{out}");
    let trace = std::fs::read_to_string(dir.path().join("model.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);

    ok(&["--config", c, "detect", "--model", s(&model), "--threshold", "-100", "--out", s(&dets), s(&test_dir)]);
    let rows = std::fs::read_to_string(&dets).unwrap();
    assert!(rows.starts_with("image_path,x,y,w,h,score"));
    assert!(rows.lines().count() > 1, "a permissive threshold reports windows");

    let out = ok(&[
        "eval",
        "--detections",
        s(&dets),
        "--annotations",
        s(&test_dir.join("annotations.csv")),
        "--out",
        s(&curve),
        "--plot-data",
        s(&plot),
    ]);
    let lamr_line = out.lines().last().unwrap();
    assert!(lamr_line.starts_with("LAMR="), "{out}");
    assert!(std::fs::read_to_string(&curve).unwrap().starts_with("threshold,fppi,miss_rate"));
    assert!(plot.exists());

    let out = ok(&["--config", c, "bench", "--model", s(&model), s(&test_dir)]);
    let windows: u64 = out
        .split_whitespace()
        .find_map(|t| t.strip_prefix("windows="))
        .unwrap()
        .parse()
        .unwrap();
    let hist: u64 = out
        .lines()
        .skip_while(|l| *l != "depth,windows")
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(hist, windows);

    let out = ok(&["analyze-sidf", "--model", s(&model), "--data", s(&train_dir), "--all-candidates"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("class,percent,count"));
    let total: f64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 100.0).abs() < 0.05, "{out}");
}

#[test]
fn retraining_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--seed", "9", "--count", "6", "--out-dir", s(&data)]);
    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    ok(&["--config", s(&cfg), "--jobs", "1", "train", "--data", s(&data), "--out", s(&m1)]);
    ok(&["--config", s(&cfg), "--jobs", "2", "train", "--data", s(&data), "--out", s(&m2)]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
}

#[test]
fn blank_image_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--seed", "4", "--count", "6", "--out-dir", s(&data)]);
    let model = dir.path().join("m.json");
    ok(&["--config", s(&cfg), "train", "--data", s(&data), "--out", s(&model)]);
    let blank = dir.path().join("blank.ppm");
    let mut ppm = b"P6\n160 256\n255\n".to_vec();
    ppm.extend(std::iter::repeat(128u8).take(160 * 256 * 3));
    std::fs::write(&blank, ppm).unwrap();
    let out = ok(&["detect", "--model", s(&model), s(&blank)]);
    assert_eq!(out.trim(), "image_path,x,y,w,h,score");
}

#[test]
fn errors_are_single_machine_readable_lines() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let img = dir.path().join("x.ppm");
    std::fs::write(&img, b"P6\n200 200\n255\n").unwrap();
    assert_eq!(error_kind(&["detect", "--model", s(&missing.join("m.json")), s(&img)]), "IoError");
    let model = dir.path().join("m.json");
    assert_eq!(
        error_kind(&["train", "--data", s(&missing), "--out", s(&model)]),
        "InsufficientData"
    );
    assert_eq!(error_kind(&["--preset", "bogus", "pool", "--out", s(&model)]), "ConfigError");
    assert_eq!(error_kind(&["frobnicate"]), "UsageError");
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(error_kind(&["--config", s(&cfg), "pool", "--out", s(&model)]), "ConfigError");
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "image_path,x,y,w,h,ignore\n").unwrap();
    let dets = dir.path().join("d.csv");
    std::fs::write(&dets, "image_path,x,y,w,h,score\n").unwrap();
    assert_eq!(
        error_kind(&["eval", "--detections", s(&dets), "--annotations", s(&empty)]),
        "NoGroundTruth"
    );
}
