use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn synthsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthsim"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn recipes() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(fixtures())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn has_compiler() -> bool {
    let ok = Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success());
    if !ok && std::env::var_os("HELIX_SKIP_TOOLCHAIN").is_none() {
        panic!("C toolchain required (set HELIX_SKIP_TOOLCHAIN=1 to skip)");
    }
    ok
}

fn extract(out: &Path) -> Output {
    synthsim()
        .arg("extract")
        .arg("--recipes")
        .args(recipes())
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn capacity_prints_the_binomial() {
    let o = synthsim().args(["capacity", "268", "50"]).output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "≈ 6.36e54");
    let o = synthsim().args(["capacity", "4", "2"]).output().unwrap();
    assert_eq!(stdout(&o).trim(), "6");
    let o = synthsim().args(["capacity", "2", "4"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_metric_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = synthsim()
        .args(["evaluate", "--metrics", "bogus", "--dataset"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["ctph", "tlsh", "lzjd", "naive"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn missing_compiler_is_an_environment_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = synthsim()
        .env("HELIX_CC", "/nonexistent/cc-probe")
        .arg("extract")
        .arg("--recipes")
        .args(recipes())
        .arg("--out")
        .arg(dir.path().join("c"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/nonexistent/cc-probe"));
}

#[test]
fn inspect_rejects_unknown_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x"), "hi").unwrap();
    for p in [dir.path().join("x"), dir.path().to_path_buf(), dir.path().join("missing")] {
        let o = synthsim().arg("inspect").arg(&p).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{}", p.display());
    }
}

#[test]
fn end_to_end() {
    if !has_compiler() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");

    let o = extract(&corpus);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let summary: Vec<&str> = out.lines().filter(|l| l.starts_with("library ")).collect();
    assert_eq!(summary.len(), 8, "{out}");
    assert!(out.contains("library tinymath: 2 components, 0 discarded"));
    assert!(out.contains("library withundef: 4 components, 1 discarded"));
    assert!(corpus.join("run.json").is_file());
    assert!(!corpus.join(".build").exists());

    // refuses to overwrite without --force
    assert_eq!(extract(&corpus).status.code(), Some(2));

    let o = synthsim().arg("inspect").arg(corpus.join("tinymath")).output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("tinymath.tm_add  2 labels"), "{text}");
    assert!(text.contains("tinymath.tm_mul  1 labels"), "{text}");
    let o = synthsim().arg("inspect").arg(&corpus).output().unwrap();
    assert!(stdout(&o).starts_with("corpus: 8 libraries"));

    let gen = |out: &Path, extra: &[&str]| {
        synthsim()
            .args(["generate", "-n", "3", "-p", "0.5", "--count", "16", "--seed", "7", "--corpus"])
            .arg(&corpus)
            .arg("--out")
            .arg(out)
            .args(extra)
            .output()
            .unwrap()
    };
    let ds = dir.path().join("ds");
    let o = gen(&ds, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("16 samples, 0 discarded"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ds.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["samples"].as_array().unwrap().len(), 16);
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ds.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"]["generate"]["seed"], 7);

    assert_eq!(gen(&ds, &[]).status.code(), Some(2));
    assert!(gen(&ds, &["--force"]).status.success());
    let again: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ds.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(again, manifest);

    let o = synthsim().arg("inspect").arg(&ds).output().unwrap();
    assert!(stdout(&o).starts_with("dataset: 16 samples"));

    // an external column covering every pair
    let mut csv = String::from("id_a,id_b,score\n");
    let ids: Vec<String> = (0..16).map(|i| format!("s{i:05}")).collect();
    for i in 0..16 {
        for j in i + 1..16 {
            csv.push_str(&format!("{},{},0.5\n", ids[i], ids[j]));
        }
    }
    let ext = dir.path().join("half.csv");
    std::fs::write(&ext, csv).unwrap();
    let o = synthsim()
        .args(["evaluate", "--dataset"])
        .arg(&ds)
        .arg("--external")
        .arg(format!("half={}", ext.display()))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().skip(1).take_while(|l| !l.contains("pairs;")).collect();
    assert_eq!(rows.len(), 5, "{table}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ds.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pair_count"], 120);
    assert_eq!(report["tlsh_max_distance"], 300);
    assert_eq!(report["mae"]["half"], report["mae"]["naive"]);
    assert!(ds.join("report.run.json").is_file());

    let o = synthsim().args(["evaluate", "--dataset"]).arg(&ds).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
