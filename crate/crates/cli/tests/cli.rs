use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use refilm_core::io::{read_metrics_csv, MetricsRow, AGGREGATE_FRAME};

fn refilm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refilm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = refilm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path and contents of every file below `dir`, sorted.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn aggregate<'a>(rows: &'a [MetricsRow], method: &str) -> &'a MetricsRow {
    rows.iter().find(|r| r.method == method && r.frame == AGGREGATE_FRAME).unwrap()
}

/// A ten-frame track shot with the per-frame motion of a default 30-frame one.
fn small_bundle(dir: &Path, name: &str) -> PathBuf {
    let b = dir.join(name);
    ok(&["gen", "--type", "track", "--frames", "10", "--amplitude", "0.5", "--seed", "3", "--out", s(&b)]);
    b
}

#[test]
fn gen_writes_a_deterministic_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let text = ok(&["gen", "--type", "arc", "--frames", "30", "--chars", "2", "--seed", "7", "--out", s(out)]);
        assert!(text.contains("30 masks"), "{text}");
    }
    let masks = fs::read_dir(a.join("masks")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "png").count();
    assert_eq!(masks, 30);
    assert_eq!(tree(&a), tree(&b));

    let info = ok(&["info", s(&a)]);
    assert!(info.contains("arc") && info.contains("30"), "{info}");
}

#[test]
fn invalid_input_exits_with_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = refilm(&["gen", "--type", "pan", "--frames", "1", "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 frames"));

    let out = refilm(&["solve", s(&dir.path().join("missing")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does not exist") && err.contains("Usage: refilm solve"), "{err}");

    assert_eq!(refilm(&["gen", "--type", "dolly", "--out", "x"]).status.code(), Some(2));
    assert_eq!(refilm(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn eval_scores_ground_truth_and_labels_rows() {
    let dir = tempfile::tempdir().unwrap();
    let b = small_bundle(dir.path(), "b");
    let gt = b.join("gt_trajectory.txt");
    let csv = dir.path().join("m.csv");
    let table = ok(&["eval", s(&b), s(&gt), s(&gt), "--label", "first", "--label", "second", "--csv", s(&csv)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[1].starts_with("first") && lines[2].starts_with("second"));
    for l in &lines[1..] {
        let cols: Vec<&str> = l.split_whitespace().collect();
        assert_eq!(&cols[1..4], ["100.00", "100.00", "0.000"], "{l}");
    }
    let rows = read_metrics_csv(&csv).unwrap();
    assert_eq!(rows.len(), 2 * 11);
    // the text format stores quaternions, so poses come back to rounding
    assert!(aggregate(&rows, "second").mpjpe.unwrap() < 1e-9);
    assert_eq!(aggregate(&rows, "second").pa, 100.0);
}

#[test]
fn eval_reports_bad_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let b = small_bundle(dir.path(), "b");
    let text = fs::read_to_string(b.join("gt_trajectory.txt")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();

    let short = dir.path().join("short.txt");
    fs::write(&short, lines[..lines.len() - 1].join("\n")).unwrap();
    let out = refilm(&["eval", s(&b), s(&short)]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("9"));

    let n = lines.len();
    lines[n - 3] = lines[n - 3].replacen(' ', " oops ", 1);
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, lines.join("\n")).unwrap();
    let out = refilm(&["eval", s(&b), s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("line {}", n - 2)), "{err}");
}

#[test]
fn solve_from_ground_truth_stays_at_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let b = small_bundle(dir.path(), "b");
    let out = dir.path().join("run");
    ok(&["solve", s(&b), "--out", s(&out), "--rot-deg", "0", "--trans", "0"]);
    for f in ["trajectory.txt", "init_trajectory.txt", "model.json", "report.json", "loss_curves.csv", "metrics.csv", "overlays/overlay_0010.png"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rows = read_metrics_csv(&out.join("metrics.csv")).unwrap();
    let seq = aggregate(&rows, "sequential");
    assert!(seq.mpjpe.unwrap() <= 0.1, "{:?}", seq.mpjpe);
    assert_eq!(aggregate(&rows, "raw-init").pa, 100.0);

    let rendered = dir.path().join("render");
    ok(&["render", s(&b), s(&out.join("trajectory.txt")), "--out", s(&rendered)]);
    assert_eq!(fs::read_dir(&rendered).unwrap().count(), 10);
}

#[test]
fn gen_solve_eval_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for name in ["one", "two"] {
        let root = dir.path().join(name);
        let b = root.join("bundle");
        ok(&["gen", "--type", "push-in", "--frames", "8", "--chars", "2", "--amplitude", "0.4", "--seed", "5", "--size", "64", "--out", s(&b)]);
        let out = root.join("run");
        ok(&["solve", s(&b), "--out", s(&out), "--baselines", "--perturb-seed", "9", "--seq-iters", "60", "--first-iters", "60"]);
        ok(&["eval", s(&b), s(&out.join("trajectory.txt")), s(&out.join("per_frame_trajectory.txt")), "--csv", s(&root.join("eval.csv"))]);
        runs.push(tree(&root));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}
