use std::path::Path;
use std::process::{Command, Output};

fn milpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_milpf")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_synth(dir: &Path) {
    let o = milpf(&[
        "synth", "--out", p(dir), "--seed", "3", "--n-bags", "80", "--dim", "6", "--tiles-min", "4", "--tiles-max",
        "9", "--tile-size", "16",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn grid_prints_one_line_per_tile() {
    let o = milpf(&["grid", "--width", "1024", "--height", "1024", "--tile", "512", "--overlap", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0 0 512 512\n512 0 1024 512\n0 512 512 1024\n512 512 1024 1024\n");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(milpf(&["grid", "--width", "10"]).status.code(), Some(1));
    assert_eq!(milpf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(milpf(&["grid", "--width", "4", "--height", "4", "--tile", "2", "--overlap", "1.5"]).status.code(), Some(1));
    assert_eq!(milpf(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_defaults() {
    let o = milpf(&["sweep", "--help"]);
    let text = stdout(&o);
    assert!(text.contains("--jobs") && text.contains("[default: 1]"), "{text}");
    let text = stdout(&milpf(&["synth", "--help"]));
    assert!(text.contains("[default: 600]") && text.contains("--seed"), "{text}");
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = milpf(&["validate", "--data", p(&dir.path().join("nope"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn params_counts_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "seed=1\nglobal_agg=max\nlocal_agg=attention\n").unwrap();
    let o = milpf(&["params", "--config", p(&cfg), "--dim", "1536"]);
    assert_eq!(stdout(&o).trim(), "49609");
    std::fs::write(&cfg, "epochs=3\n").unwrap();
    assert_eq!(milpf(&["params", "--config", p(&cfg), "--dim", "8"]).status.code(), Some(2));
}

#[test]
fn split_keeps_patients_together_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    small_synth(&data);
    let o = milpf(&["split", "--data", p(&data), "--seed", "5", "--ratios", "0.6,0.2,0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(data.join("manifest.json")).unwrap();
    milpf(&["split", "--data", p(&data), "--seed", "5", "--ratios", "0.6,0.2,0.2"]);
    assert_eq!(std::fs::read(data.join("manifest.json")).unwrap(), first);
    assert_eq!(milpf(&["validate", "--data", p(&data)]).status.code(), Some(0));
    assert_eq!(milpf(&["split", "--data", p(&data), "--seed", "5", "--ratios", "0.5,0.5"]).status.code(), Some(1));
}

#[test]
fn sweep_then_eval_reproduces_best_test_auc() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    small_synth(&data);
    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "seed=11\nepochs=15\nlr=0.01\n").unwrap();
    let out = dir.path().join("sweep");
    let o = milpf(&["sweep", "--data", p(&data), "--config", p(&cfg), "--runs", "3", "--out", p(&out), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run_11.model", "run_12.csv", "run_13.model", "best.model", "sweep.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);

    let eval = dir.path().join("eval.json");
    let o = milpf(&["eval", "--data", p(&data), "--model", p(&out.join("best.model")), "--report", p(&eval)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ev: serde_json::Value = serde_json::from_slice(&std::fs::read(&eval).unwrap()).unwrap();
    assert_eq!(ev["auc"].as_f64().unwrap(), report["best_test"]["auc"].as_f64().unwrap());
    assert_eq!(ev, report["best_test"]);

    // Rerunning overwrites with identical bytes.
    let before = std::fs::read(out.join("best.model")).unwrap();
    let o = milpf(&["sweep", "--data", p(&data), "--config", p(&cfg), "--runs", "3", "--out", p(&out), "--jobs", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("best.model")).unwrap(), before);
}

#[test]
fn train_heatmap_detect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    small_synth(&data);
    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "seed=2\nepochs=5\n").unwrap();
    let model = dir.path().join("m.model");
    let o = milpf(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(dir.path().join("m.model.csv")).unwrap();
    assert_eq!(log.lines().count(), 6);

    let maps = dir.path().join("maps");
    let o = milpf(&[
        "heatmap", "--data", p(&data), "--model", p(&model), "--bag", "B00000", "--overlap", "0", "--out", p(&maps),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = maps.join("V0.pgm");
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5\n"));
    let weights = std::fs::read_to_string(maps.join("weights.csv")).unwrap();
    let total: f64 = weights.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let boxes = dir.path().join("boxes.csv");
    let o = milpf(&["detect", "--heatmap", p(&pgm), "--threshold", "0.5", "--out", p(&boxes)]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&boxes).unwrap();
    assert!(text.lines().count() >= 2, "{text}");
    assert!(text.starts_with("view_id,x0,y0,x1,y1,score"));

    assert_eq!(
        milpf(&["heatmap", "--data", p(&data), "--model", p(&model), "--bag", "nope", "--out", p(&maps)]).status.code(),
        Some(1)
    );
}
