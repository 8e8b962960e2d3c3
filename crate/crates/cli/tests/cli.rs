use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maxmin-svc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn maxmin-svc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two well-separated clusters in 2D, twelve points each.
fn toy(dir: &TempDir) -> PathBuf {
    let mut text = String::new();
    for k in 0..12 {
        let t = k as f64 * 0.5;
        text.push_str(&format!("+1 1:{} 2:{}\n", 4.0 + t.cos(), 4.0 + t.sin()));
        text.push_str(&format!("-1 1:{} 2:{}\n", -4.0 + t.sin(), -4.0 + t.cos()));
    }
    let path = dir.path().join("toy.libsvm");
    fs::write(&path, text).unwrap();
    path
}

/// Overlapping noisy classes, enough points for several splits.
fn noisy(dir: &TempDir) -> PathBuf {
    let mut text = String::new();
    let mut s = 12345u64;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for k in 0..60 {
        let (y, shift) = if k % 2 == 0 { ("+1", 0.6) } else { ("-1", -0.6) };
        text.push_str(&format!(
            "{y} 1:{} 2:{} 3:{}\n",
            shift + 2.0 * next(),
            2.0 * next(),
            shift * 0.5 + next()
        ));
    }
    let path = dir.path().join("noisy.libsvm");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_writes_model_and_trace_with_one_row_per_outer_iteration() {
    let dir = TempDir::new().unwrap();
    let data = toy(&dir);
    let (model, trace) = (dir.path().join("m.svc"), dir.path().join("t.csv"));
    let o = run(&["train", "--data", p(&data), "--seed", "7", "--out", p(&model), "--trace", p(&trace)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let outer: usize = out
        .lines()
        .find_map(|l| l.strip_prefix("outer iterations: "))
        .unwrap()
        .parse()
        .unwrap();
    let csv = fs::read_to_string(&trace).unwrap();
    assert_eq!(csv.lines().count(), outer + 1);
    assert!(csv.starts_with("iter,gamma,"));
    assert!(fs::metadata(&model).unwrap().len() > 0);
    assert!(out.contains("train accuracy: 100.00%"));
}

#[test]
fn train_echoes_defaults_in_header() {
    let dir = TempDir::new().unwrap();
    let data = toy(&dir);
    let model = dir.path().join("m.svc");
    let o = run(&["train", "--data", p(&data), "--out", p(&model), "--gamma0", "0.004", "--c", "1"]);
    assert!(o.status.success());
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert!(first.contains("gamma0=0.004"), "{first}");
    assert!(first.contains("c=1 "), "{first}");
}

#[test]
fn train_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = noisy(&dir);
    let a = dir.path().join("a.svc");
    let b = dir.path().join("b.svc");
    for m in [&a, &b] {
        assert!(run(&["train", "--data", p(&data), "--seed", "7", "--out", p(m)]).status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn train_on_missing_file_fails() {
    let dir = TempDir::new().unwrap();
    let o = run(&["train", "--data", p(&dir.path().join("nope")), "--out", p(&dir.path().join("m"))]);
    assert!(!o.status.success());
    assert!(!dir.path().join("m").exists());
}

#[test]
fn unconverged_train_warns_and_still_writes() {
    let dir = TempDir::new().unwrap();
    let data = noisy(&dir);
    let model = dir.path().join("m.svc");
    let o = run(&["train", "--data", p(&data), "--out", p(&model), "--epoch-gamma", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("WARN:")), "{out}");
    assert!(model.exists());
}

#[test]
fn predict_reproduces_labels_of_separable_training_file() {
    let dir = TempDir::new().unwrap();
    let data = toy(&dir);
    let model = dir.path().join("m.svc");
    let pred = dir.path().join("pred.txt");
    assert!(run(&["train", "--data", p(&data), "--out", p(&model)]).status.success());
    let o = run(&["predict", "--model", p(&model), "--data", p(&data), "--out", p(&pred)]);
    assert!(o.status.success());
    let want: Vec<String> = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    let got: Vec<String> = fs::read_to_string(&pred).unwrap().lines().map(String::from).collect();
    assert_eq!(got, want);
}

#[test]
fn predict_empty_input_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    let data = toy(&dir);
    let model = dir.path().join("m.svc");
    assert!(run(&["train", "--data", p(&data), "--out", p(&model)]).status.success());
    let empty = dir.path().join("empty.libsvm");
    fs::write(&empty, "").unwrap();
    let pred = dir.path().join("pred.txt");
    let o = run(&["predict", "--model", p(&model), "--data", p(&empty), "--out", p(&pred)]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&pred).unwrap(), "");
}

#[test]
fn predict_with_corrupt_model_fails() {
    let dir = TempDir::new().unwrap();
    let data = toy(&dir);
    let model = dir.path().join("m.svc");
    assert!(run(&["train", "--data", p(&data), "--out", p(&model)]).status.success());
    let text = fs::read_to_string(&model).unwrap();
    let broken: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
    fs::write(&model, broken).unwrap();
    let pred = dir.path().join("pred.txt");
    let o = run(&["predict", "--model", p(&model), "--data", p(&data), "--out", p(&pred)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt model"));
    assert!(!pred.exists());
}

#[test]
fn eval_single_repeat_mean_equals_row() {
    let dir = TempDir::new().unwrap();
    let data = noisy(&dir);
    let csv = dir.path().join("eval.csv");
    let o = run(&["eval", "--data", p(&data), "--repeats", "1", "--seed", "3", "--out", p(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2);
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(fields[1], "3");
    let acc: f64 = fields[2].parse().unwrap();
    let outer: usize = fields[4].parse().unwrap();
    let models: usize = fields[5].parse().unwrap();
    assert!(outer >= 1 && models >= outer);
    let summary = format!("maxmin accuracy: {:.2}±0.00 over 1 splits", 100.0 * acc);
    assert!(stdout(&o).contains(&summary), "{}", stdout(&o));
}

#[test]
fn eval_rows_are_ordered_and_seeded() {
    let dir = TempDir::new().unwrap();
    let data = noisy(&dir);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["eval", "--data", p(&data), "--repeats", "4", "--seed", "10", "--out", p(out)]);
        assert!(o.status.success());
    }
    let table = fs::read_to_string(&a).unwrap();
    assert_eq!(table, fs::read_to_string(&b).unwrap());
    for (i, row) in table.lines().skip(1).enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0], i.to_string());
        assert_eq!(f[1], (10 + i).to_string());
    }
}

#[test]
fn eval_rejects_zero_repeats() {
    let dir = TempDir::new().unwrap();
    let data = noisy(&dir);
    assert!(!run(&["eval", "--data", p(&data), "--repeats", "0"]).status.success());
}

fn bench_numbers(out: &str) -> (Vec<usize>, Vec<f64>, f64) {
    let mut iters = Vec::new();
    let mut objs = Vec::new();
    let mut delta = f64::NAN;
    for l in out.lines() {
        if l.starts_with("pga:") || l.starts_with("smo:") {
            let t: Vec<&str> = l.split_whitespace().collect();
            iters.push(t[2].parse().unwrap());
            objs.push(t[8].parse().unwrap());
        }
        if let Some(rest) = l.strip_prefix("|delta objective|: ") {
            delta = rest.split_whitespace().next().unwrap().parse().unwrap();
        }
    }
    (iters, objs, delta)
}

#[test]
fn bench_solvers_agree_and_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = noisy(&dir);
    let first = run(&["bench", "--data", p(&data), "--gamma0", "0.5"]);
    let second = run(&["bench", "--data", p(&data), "--gamma0", "0.5"]);
    assert!(first.status.success() && second.status.success());
    let (it1, objs, delta) = bench_numbers(&stdout(&first));
    let (it2, _, _) = bench_numbers(&stdout(&second));
    assert_eq!(it1.len(), 2);
    assert_eq!(it1, it2);
    assert!(delta <= 1e-6 * (1.0 + objs[0].abs()), "{delta}");
}
