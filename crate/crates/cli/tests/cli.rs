use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_araucana"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn araucana")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn xor_data(dir: &Path, seed: &str) {
    ok(
        dir,
        &["--seed", seed, "--out", "syn", "synth", "--gen", "xor_mixed", "--rows", "200", "--test-rows", "40"],
    );
}

const DATA: [&str; 4] = ["--data", "syn/data.csv", "--schema", "syn/schema.json"];

#[test]
fn synth_writes_files_and_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    xor_data(a.path(), "11");
    xor_data(b.path(), "11");
    for f in ["data.csv", "schema.json", "test.csv", "manifest.json"] {
        assert!(a.path().join("syn").join(f).exists(), "missing {f}");
    }
    for f in ["data.csv", "schema.json", "test.csv"] {
        let x = std::fs::read(a.path().join("syn").join(f)).unwrap();
        let y = std::fs::read(b.path().join("syn").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between identical runs");
    }
    let data = std::fs::read_to_string(a.path().join("syn/data.csv")).unwrap();
    assert_eq!(data.lines().next(), Some("x0,x1,c0,c1,target"));
    assert_eq!(data.lines().count(), 201);

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("syn/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 11);
}

#[test]
fn one_nn_fits_training_data_and_forest_learns_xor() {
    let d = TempDir::new().unwrap();
    xor_data(d.path(), "2");
    let mut args = vec!["--out", "m", "train"];
    args.extend(DATA);
    let knn = ok(d.path(), &[args.as_slice(), &["--model", "knn", "--k", "1"]].concat());
    assert!(knn.contains("training accuracy: 1.0000"), "{knn}");
    assert!(d.path().join("m/model.json").exists());

    let forest = ok(d.path(), &[args.as_slice(), &["--model", "forest", "--n-trees", "30"]].concat());
    let acc: f64 = forest.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(acc >= 0.95, "{forest}");
}

#[test]
fn explain_text_and_json() {
    let d = TempDir::new().unwrap();
    xor_data(d.path(), "5");
    let base = [&DATA[..], &["--oracle", "builtin:forest", "--n-trees", "10", "--index", "3"]].concat();
    let text = ok(d.path(), &[&["explain"][..], &base].concat());
    let mut lines = text.lines();
    let rule = lines.next().unwrap();
    assert!(rule.starts_with("IF ") && rule.contains("faithful=true"), "{text}");
    assert!(lines.next().unwrap().starts_with("oracle: "));
    assert!(lines.next().unwrap().starts_with("tree: depth="));

    let json = ok(d.path(), &[&["--out", "ex", "explain"][..], &base, &["--format", "json"]].concat());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["config", "faithful", "oracle_label", "query", "rule", "seed", "tree", "tree_stats"]
    );
    assert_eq!(v["config"]["n_neighbors"], 100);
    assert_eq!(v["config"]["distance"], "gower");
    assert!(d.path().join("ex/explanation.json").exists());
    assert!(d.path().join("ex/manifest.json").exists());
}

#[test]
fn evaluate_reports_perfect_tree_fidelity() {
    let d = TempDir::new().unwrap();
    xor_data(d.path(), "8");
    let mut args = vec!["--out", "ev", "evaluate"];
    args.extend(DATA);
    args.extend([
        "--test", "syn/test.csv", "--oracle", "builtin:forest", "--n-trees", "10",
        "--explainers", "araucana,linear",
    ]);
    let out = ok(d.path(), &args);
    let row = out.lines().find(|l| l.starts_with("araucana")).unwrap();
    assert!(row.contains("1.000"), "{out}");
    let summary = std::fs::read_to_string(d.path().join("ev/summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("explainer,agreements,total,fidelity,excluded"));
    assert_eq!(summary.lines().count(), 3);
    let per = std::fs::read_to_string(d.path().join("ev/per_instance.csv")).unwrap();
    assert_eq!(per.lines().count(), 1 + 2 * 40);
}

#[test]
fn usage_errors_exit_2() {
    let d = TempDir::new().unwrap();
    xor_data(d.path(), "1");
    let cases: Vec<Vec<&str>> = vec![
        vec!["bogus"],
        vec!["explain", "--data", "syn/data.csv"],
        [&["evaluate"][..], &DATA, &["--test-frac", "0.2", "--oracle", "builtin:forest", "--explainers", "lime"]]
            .concat(),
        [&["explain"][..], &DATA, &["--oracle", "builtin:forest", "--index", "100000"]].concat(),
        [&["explain"][..], &DATA, &["--oracle", "magic:box", "--index", "0"]].concat(),
    ];
    for args in cases {
        let out = run(d.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn runtime_errors_exit_1() {
    let d = TempDir::new().unwrap();
    xor_data(d.path(), "1");
    let out = run(
        d.path(),
        &["explain", "--data", "syn/data.csv", "--target", "nope", "--oracle", "builtin:forest", "--index", "0"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let out = run(d.path(), &["explain", "--data", "missing.csv", "--oracle", "builtin:forest", "--index", "0"]);
    assert_eq!(out.status.code(), Some(1));
}
