use std::path::Path;
use std::process::{Command, Output};

fn autotune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autotune"))
        .args(args)
        .current_dir(dir)
        .env_remove("AUTOTUNE_CACHE_DIR")
        .output()
        .expect("spawn autotune")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = autotune(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let table = ok(d, &["calibrate", "--out", "sampler.json", "--samples", "20000", "--trials", "2000"]);
    assert!(table.contains("Categorical") && table.contains("Uniform"));

    ok(d, &["generate", "--sampler", "sampler.json", "--samples", "3000", "--seed", "5", "--out", "data.csv"]);
    ok(d, &["generate", "--sampler", "sampler.json", "--samples", "3000", "--seed", "5", "--out", "again.csv"]);
    let first = std::fs::read(d.join("data.csv")).unwrap();
    assert_eq!(first, std::fs::read(d.join("again.csv")).unwrap());
    assert!(first.starts_with(b"# autotune-dataset v1 kind=gemm"));

    ok(
        d,
        &[
            "train",
            "--dataset",
            "data.csv",
            "--out",
            "model.json",
            "--hidden",
            "8,8",
            "--epochs",
            "3",
            "--batch-size",
            "32",
        ],
    );

    let infer = ["infer", "--model", "model.json", "--shape", "m=256,n=256,k=256", "--top-k", "5", "--out", "r.json"];
    let first = ok(d, &infer);
    assert!(!first.contains("(cached)"));
    assert!(ok(d, &infer).contains("(cached)"));
    let result: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(result["ranked"].as_array().unwrap().len(), 5);
    assert!(d.join(".autotune-cache").is_dir());

    let report = ok(d, &["report", "--dataset", "data.csv", "--model", "model.json", "--out", "rep.json"]);
    assert!(report.contains("3000 samples"));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("rep.json")).unwrap()).unwrap();
    assert!(rep["model_mse"].as_f64().unwrap().is_finite());
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = autotune(d, &["infer", "--model", "missing.json", "--fixture", "LINPACK 512"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let out = autotune(d, &["generate", "--hw", "nope.json", "--samples", "10", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    assert_eq!(autotune(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(autotune(d, &["--help"]).status.code(), Some(0));

    std::fs::write(d.join("bad.csv"), "not a dataset\n").unwrap();
    let out = autotune(d, &["report", "--dataset", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_without_model_uses_exhaustive_search() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        ok(dir.path(), &["bench", "--fixture", "ICA 32-channels", "--fixture", "LINPACK 2048", "--out", "b.json"]);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("Problem"));
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("b.json")).unwrap()).unwrap();
    let ica = &rows[0]["result"]["tuning"];
    assert!(ica["k_l"].as_u64().unwrap() * ica["k_g"].as_u64().unwrap() > 1);
    let linpack = &rows[1]["result"]["tuning"];
    assert_eq!((linpack["k_l"].as_u64(), linpack["k_g"].as_u64()), (Some(1), Some(1)));
}
