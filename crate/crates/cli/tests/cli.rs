use std::fs;
use std::path::Path;
use std::process::Command;

fn graphal(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_graphal"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to launch graphal")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let dir_arg = dir.to_str().unwrap();
        let out = graphal(&[
            "run", "--points", "150", "--scale", "0.1", "--queries", "6", "--trials", "2", "--per-class", "2",
            "--model", "probit", "--acq", "mbr", "--seed", "3", "--out", dir_arg,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("mean final accuracy"));
        outputs.push(csv_files(&dir));
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["config"]["acquisition"], "mbr");
        assert_eq!(meta["trial_seeds"].as_array().unwrap().len(), 2);
    }
    assert_eq!(outputs[0].len(), 5);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn compare_na_writes_both_arms() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cmp");
    let out = graphal(&[
        "compare-na", "--points", "120", "--scale", "0.1", "--queries", "4", "--trials", "1", "--per-class", "2",
        "--acq", "unc", "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("retrain/na_gap_trial_0.csv").exists());
    assert!(dir.join("na/curve_mean.csv").exists());
    let cmp = fs::read_to_string(dir.join("comparison.csv")).unwrap();
    assert_eq!(cmp.lines().count(), 6);
}

#[test]
fn export_dataset_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cb.csv");
    let out = graphal(&["export-dataset", "--points", "50", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("index,label,x,y"));
    assert_eq!(text.lines().count(), 51);

    let out = graphal(&["run", "--model", "hf", "--acq", "mc", "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not available"));

    let out = graphal(&["run", "--acq", "bogus"]);
    assert!(!out.status.success());
}
